from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize_scalar

from helpers import frac_theta, random_game, random_unique_theta
from netcournot.closed_form import HomogeneousInstance, nonnetworked_equilibrium
from netcournot.equilibrium import (
    NonConcaveObjective,
    RegionNotCovered,
    SolveOptions,
    best_response_dynamics,
    best_response_firm,
    best_response_mm,
    kkt_residuals,
    solve_potential,
    verify_nash,
)
from netcournot.model import (
    Allocation,
    CostFn,
    DesignParams,
    FirmSpec,
    GameInstance,
    MarketSpec,
    TransportSet,
    firm_profit,
    homogeneous_game,
    potential,
    theta_preset,
    two_node_game,
)

SW = frac_theta(Fraction(1, 3), Fraction(1, 3), Fraction(1, 3))


def test_two_node_social_welfare_equilibrium():
    res = solve_potential(two_node_game(), SW)
    a = res.allocation
    assert np.allclose(a.q, [3 / 16, 7 / 16], atol=1e-12)
    assert np.allclose(a.r, [1 / 8, -1 / 8], atol=1e-12)
    assert res.welfare == pytest.approx(83 / 256, abs=1e-12)
    assert res.verified and not res.possibly_multiple
    # balance multiplier: s (mean C - alpha)/2 + theta_M alpha with s = 1/3
    assert a.lambda_balance == pytest.approx(Fraction(1, 3) * (Fraction(3, 8) - 1) / 2 + Fraction(1, 3), abs=1e-12)
    assert res.kkt_residual <= 1e-9


def test_symmetric_unconstrained_gives_no_trade():
    g = homogeneous_game([0.3, 0.3], 1.0, 2.0)
    a = solve_potential(g, theta_preset("SW")).allocation
    assert np.allclose(a.r, 0, atol=1e-12)
    assert np.allclose(a.q, (1.0 - 0.3) / 4, atol=1e-12)


def test_zero_transport_is_monopoly():
    inst = HomogeneousInstance((0.2, 0.5, 0.1), 1.0, 1.5)
    res = solve_potential(inst.game(TransportSet.zero()), theta_preset("SW"))
    q, w = nonnetworked_equilibrium(inst)
    assert np.allclose(res.allocation.q, q, atol=1e-12)
    assert res.welfare == pytest.approx(w, abs=1e-12)


def test_region_not_covered():
    with pytest.raises(RegionNotCovered):
        solve_potential(two_node_game(), DesignParams(1, 0, 0))


def test_best_response_firm_examples():
    g = two_node_game()
    a = Allocation([0.0, 7 / 16], [1 / 8, -1 / 8])
    assert best_response_firm(g, a, 0) == pytest.approx(3 / 16, abs=1e-15)
    g2 = homogeneous_game([1.5, 0.1], 1.0, 1.0)
    assert best_response_firm(g2, Allocation([0.0, 0.0], [0.0, 0.0]), 0) == 0.0


@settings(max_examples=60)
@given(st.integers(0, 2**31))
def test_best_response_firm_matches_scalar_search(seed):
    rng = np.random.default_rng(seed)
    game = random_game(rng, max_firms=3)
    a = Allocation(rng.uniform(0, 0.5, game.n_firms), np.zeros(game.n_markets))
    f = int(rng.integers(game.n_firms))
    br = best_response_firm(game, a, f)
    res = minimize_scalar(lambda x: -firm_profit(game, a.with_q(f, x), f), bounds=(0, 5), method="bounded",
                          options={"xatol": 1e-12})
    assert br == pytest.approx(res.x, abs=1e-7)
    assert firm_profit(game, a.with_q(f, br), f) >= -res.fun - 1e-12


def test_best_response_mm_examples():
    g = two_node_game()
    r = best_response_mm(g, Allocation([3 / 16, 7 / 16], [0, 0]), SW)
    assert np.allclose(r, [1 / 8, -1 / 8], atol=1e-12)
    # theta_M + theta_P - theta_C = 0 with positive concavity: r = 0 whatever q is
    th = frac_theta(Fraction(1, 2), 0, Fraction(1, 2))
    for q in ([0.1, 0.7], [0.5, 0.0], [0.3, 0.3]):
        assert np.allclose(best_response_mm(g, Allocation(q, [0, 0]), th), 0, atol=1e-12)
    sym = homogeneous_game([0.2, 0.2], 1.0, 1.0, TransportSet.line_box(0.5))
    assert np.allclose(best_response_mm(sym, Allocation([0.4, 0.4], [0.1, -0.1]), SW), 0, atol=1e-12)
    with pytest.raises(NonConcaveObjective):
        best_response_mm(g, Allocation([0.1, 0.1], [0, 0]), DesignParams(1, 0, 0))


def test_verify_nash_examples():
    g = two_node_game()
    eq = Allocation([3 / 16, 7 / 16], [1 / 8, -1 / 8])
    ok, gain = verify_nash(g, eq, SW)
    assert ok and gain <= 1e-12
    ok, gain = verify_nash(g, eq.with_q(0, 3 / 16 + 0.1), SW)
    assert not ok and gain > 0


def _lattice_optimum(game, theta, n=161):
    """Exhaustive r lattice for one firm per market; q by the exact inner maximizer."""
    cap = np.array(game.transport.b_array[: game.n_markets])
    g1 = np.linspace(-cap[0], cap[0], n)
    g2 = np.linspace(-cap[1], cap[1], n)
    R1, R2 = np.meshgrid(g1, g2, indexing="ij")
    R3 = -R1 - R2
    ok = np.abs(R3) <= cap[2] + 1e-12
    R = np.stack([R1[ok], R2[ok], R3[ok]], axis=1)
    alpha, beta = game.alpha, game.beta
    Q = np.maximum(0.0, (alpha - beta * R - game.c_lin) / (2 * beta + game.c_quad))
    best, arg = -np.inf, None
    for q, r in zip(Q, R):
        v = potential(game, Allocation(q, r), theta)
        if v > best:
            best, arg = v, r
    return best, arg, 2 * cap.max() / (n - 1)


@pytest.mark.parametrize("seed", range(6))
def test_three_market_box_matches_lattice(seed):
    rng = np.random.default_rng(100 + seed)
    game = random_game(rng, n_markets=3, max_firms=1)
    th = random_unique_theta(rng, game)
    res = solve_potential(game, th)
    best, arg, h = _lattice_optimum(game, th)
    assert res.potential_value >= best - 1e-12
    assert res.potential_value - best <= 50 * h**2
    assert np.abs(res.allocation.r - arg).max() <= 4 * h


@settings(max_examples=50)
@given(st.integers(0, 2**31))
def test_solutions_verify_and_ignore_warm_starts(seed):
    rng = np.random.default_rng(seed)
    game = random_game(rng)
    th = random_unique_theta(rng, game)
    res = solve_potential(game, th)
    assert res.verified
    resid = kkt_residuals(game, res.allocation, th)
    assert max(resid.values()) <= 1e-9
    n_rows = len(game.transport.b_array)
    for _ in range(10):
        ws = tuple(sorted(rng.choice(game.n_firms + n_rows, size=int(rng.integers(0, 3)), replace=False).tolist()))
        other = solve_potential(game, th, SolveOptions(verify=False), warm_start=ws)
        assert np.allclose(other.allocation.q, res.allocation.q, atol=1e-7)
        assert np.allclose(other.allocation.r, res.allocation.r, atol=1e-7)


def test_oscillation_cycle():
    g = two_node_game(c1=Fraction(1, 2), c2=Fraction(1, 2))
    th = frac_theta(Fraction(2, 5), 0, Fraction(1, 5))
    out = best_response_dynamics(g, th, Allocation([0, 0], [0.5, -0.5]))
    assert out.verdict == "Cycle"
    triples = sorted((round(a.r[0], 12), round(a.q[0], 12), round(a.q[1], 12)) for a in out.cycle)
    assert np.allclose(triples, [(-0.5, 0.5, 0.0), (0.5, 0.0, 0.5)], atol=1e-9)


def test_dynamics_converges_and_ascends():
    g = two_node_game()
    out = best_response_dynamics(g, SW)
    assert out.verdict == "Converged"
    ref = solve_potential(g, SW).allocation
    last = out.trajectory[-1]
    assert np.allclose(last.q, ref.q, atol=1e-6) and np.allclose(last.r, ref.r, atol=1e-6)
    pots = [p for *_, p in out.steps]
    assert all(b >= a - 1e-12 for a, b in zip(pots, pots[1:]))
    again = best_response_dynamics(g, SW, Allocation(ref.q, ref.r))
    assert again.verdict == "Converged" and again.rounds == 1


def test_dynamics_rejects_convex_market_maker():
    with pytest.raises(NonConcaveObjective):
        best_response_dynamics(two_node_game(), DesignParams(1, 0, 0))


def test_multiple_firms_per_market():
    game = GameInstance(
        (MarketSpec(2.0, 1.0), MarketSpec(1.5, 0.5)),
        (FirmSpec(0, CostFn(0.2, 0.3)), FirmSpec(0, CostFn(0.4, 0.0)), FirmSpec(1, CostFn(0.1, 0.1))),
        TransportSet.line_box(0.4),
    )
    res = solve_potential(game, theta_preset("SW"))
    assert res.verified
    for f in range(3):
        assert best_response_firm(game, res.allocation, f) == pytest.approx(res.allocation.q[f], abs=1e-9)
