from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import frac_theta, random_homogeneous, random_networked_theta
from netcournot.closed_form import (
    HomogeneousInstance,
    PreconditionViolated,
    aggregated_equilibrium,
    kappa,
    nonnetworked_equilibrium,
    total_production,
    unconstrained_equilibrium,
    unconstrained_equilibrium_exact,
    unconstrained_welfare,
    welfare_comparison,
)
from netcournot.equilibrium import kkt_residuals, solve_potential
from netcournot.model import Allocation, TransportSet, theta_preset, welfare

SW = theta_preset("SW")


def test_kappa():
    assert kappa(SW) == 1
    assert kappa(frac_theta(0, Fraction(1, 2), Fraction(1, 2))) == 1
    assert kappa(frac_theta(Fraction(1, 5), Fraction(1, 5), Fraction(3, 5))) == Fraction(3, 7)
    with pytest.raises(ZeroDivisionError):
        kappa(frac_theta(Fraction(1, 2), 0, Fraction(1, 6)))


def test_two_market_example_exact():
    inst = HomogeneousInstance((Fraction(1, 4), Fraction(3, 4)), 1, 1)
    q, r, lam = unconstrained_equilibrium_exact(inst, SW)
    assert q == [Fraction(1, 2), 0]
    assert r == [Fraction(-1, 4), Fraction(1, 4)]
    assert sum(q) == total_production(inst)
    # welfare through the model at the closed-form point equals the formula
    alloc = unconstrained_equilibrium(inst, SW)
    assert welfare(inst.game(), alloc) == pytest.approx(float(unconstrained_welfare(inst, SW)), abs=1e-15)
    assert lam == Fraction(3, 4)


def test_preconditions_are_named():
    inst = HomogeneousInstance((0.0, 0.9), 1.0, 1.0)
    with pytest.raises(PreconditionViolated, match="kappa"):
        unconstrained_equilibrium(inst, SW)
    with pytest.raises(PreconditionViolated, match="theta_M"):
        unconstrained_equilibrium(HomogeneousInstance((0.1, 0.2), 1.0, 1.0), frac_theta(1, 0, 0))
    with pytest.raises(PreconditionViolated):
        unconstrained_equilibrium(HomogeneousInstance((0.1, 0.2), 1.0, 1.0), frac_theta(Fraction(1, 2), 0, Fraction(1, 2)))
    with pytest.raises(PreconditionViolated, match="F"):
        aggregated_equilibrium(HomogeneousInstance((0.0, 0.0, 0.9), 1.0, 1.0))
    with pytest.raises(ValueError):
        HomogeneousInstance((), 1.0, 1.0)


def test_identical_costs_no_trade():
    inst = HomogeneousInstance((0.2,) * 4, 1.0, 0.5)
    alloc = unconstrained_equilibrium(inst, frac_theta(Fraction(1, 5), Fraction(1, 5), Fraction(3, 5)))
    assert np.allclose(alloc.r, 0)
    q_nn, _ = nonnetworked_equilibrium(inst)
    assert np.allclose(alloc.q, q_nn)


@settings(max_examples=100)
@given(st.integers(0, 2**31))
def test_formula_matches_solver_and_kkt(seed):
    rng = np.random.default_rng(seed)
    th = random_networked_theta(rng)
    inst = random_homogeneous(rng, th)
    alloc = unconstrained_equilibrium(inst, th)
    res = solve_potential(inst.game(TransportSet.unconstrained()), th)
    assert np.abs(res.allocation.q - alloc.q).max() <= 1e-8
    assert np.abs(res.allocation.r - alloc.r).max() <= 1e-8
    assert abs(alloc.q.sum() - total_production(inst)) <= 1e-12 * max(1.0, total_production(inst))
    assert max(kkt_residuals(inst.game(), alloc, th).values()) <= 1e-12 * max(1.0, inst.alpha)


@settings(max_examples=100)
@given(st.integers(0, 2**31))
def test_welfare_orderings(seed):
    rng = np.random.default_rng(seed)
    th = random_networked_theta(rng)
    inst = random_homogeneous(rng, th)
    cmp = welfare_comparison(inst, th)
    assert cmp["ratio_to_sw_design"] <= 1.5 + 1e-9
    assert cmp["ratio_networked_to_nonnetworked"] <= 4 + 1e-9
    assert cmp["aggregated"] >= cmp["networked"] - 1e-12
    assert cmp["total_production_aggregated"] >= cmp["total_production"] - 1e-12
    net = unconstrained_welfare(inst, th)
    game = inst.game()
    assert welfare(game, unconstrained_equilibrium(inst, th)) == pytest.approx(net, rel=1e-10)
    q_nn, w_nn = nonnetworked_equilibrium(inst)
    assert welfare(game, Allocation(q_nn, np.zeros(inst.n))) == pytest.approx(w_nn, rel=1e-10)


def test_aggregated_welfare_matches_single_market_game():
    from netcournot.model import CostFn, FirmSpec, GameInstance, MarketSpec

    inst = HomogeneousInstance((0.1, 0.15, 0.2), 2.0, 1.5)
    q, w = aggregated_equilibrium(inst)
    one = GameInstance((MarketSpec(2.0, 1.5 / 3),), tuple(FirmSpec(0, CostFn(c, 0)) for c in inst.marginal_costs),
                       TransportSet.zero())
    res = solve_potential(one, SW)
    assert np.allclose(res.allocation.q, q, atol=1e-12)
    assert res.welfare == pytest.approx(w, rel=1e-12)


def test_aggregated_advantage_grows_with_firm_count():
    ratios = []
    for n in (2, 4, 8, 16, 32):
        costs = (Fraction(0),) + (Fraction(1, 2),) * (n - 1)
        cbar = sum(costs) / n
        inst = HomogeneousInstance(costs, (1 + n) * max(costs) - n * cbar, 1)
        ratios.append(welfare_comparison(inst, SW)["ratio_aggregated_to_networked"])
    assert all(b > a for a, b in zip(ratios, ratios[1:]))
    assert ratios[-1] > 2


def test_two_node_data_through_all_three_settings():
    inst = HomogeneousInstance((Fraction(1, 2), Fraction(1, 4)), 1, 1)
    q, r, _ = unconstrained_equilibrium_exact(inst, SW)
    assert q == [Fraction(3, 16), Fraction(7, 16)] and r == [Fraction(1, 8), Fraction(-1, 8)]
    assert unconstrained_welfare(inst, SW) == Fraction(83, 256)
    q, w = nonnetworked_equilibrium(inst)
    assert q == [Fraction(1, 4), Fraction(3, 8)] and w == Fraction(39, 128)
    q, w = aggregated_equilibrium(inst)
    assert q == [Fraction(1, 6), Fraction(2, 3)]
    assert float(w) == pytest.approx(0.4097222, abs=1e-7)
