from fractions import Fraction

import numpy as np
import pytest

from netcournot.design import (
    DesignObjective,
    EmptyFeasibleGrid,
    NoSlaterPoint,
    PolyProgram,
    ThetaEps,
    build_mpec,
    embed_equilibrium,
    feasible_grid,
    grid_search,
    objective_by_name,
    theta_eps_contains,
)
from netcournot.equilibrium import solve_potential, verify_nash
from netcournot.model import DesignParams, TransportSet, homogeneous_game, two_node_game, welfare

F = Fraction
GAME = two_node_game()
TE = ThetaEps.for_game(GAME, F(1, 1000))


def test_theta_eps_examples():
    assert TE.gamma == F(1, 2)
    assert theta_eps_contains(TE, DesignParams(F(1, 3), F(1, 3), F(1, 3)))
    assert not theta_eps_contains(TE, DesignParams(1, 0, 0))
    assert theta_eps_contains(TE, DesignParams(0.027, 0.627, 0.346))
    # off the simplex
    assert not theta_eps_contains(TE, DesignParams(1, 1, 1))
    with pytest.raises(ValueError):
        ThetaEps(0, F(1, 2))


def test_vertices_are_members_and_grid_matches_membership():
    verts = TE.vertices()
    assert len(verts) >= 3
    assert all(TE.contains(DesignParams(*v)) for v in verts)
    N = 60
    trip = {tuple(t) for t in feasible_grid(TE, N).tolist()}
    for i in range(N + 1):
        for j in range(N + 1 - i):
            k = N - i - j
            inside = TE.contains(DesignParams(F(i, N), F(j, N), F(k, N)))
            assert inside == ((i, j, k) in trip)


def test_empty_grid():
    with pytest.raises(EmptyFeasibleGrid):
        grid_search(GAME, DesignObjective.social_welfare(GAME), ThetaEps(2, F(1, 2)), 10)


def test_social_welfare_objective_matches_model():
    g = DesignObjective.social_welfare(GAME)
    rng = np.random.default_rng(0)
    for _ in range(20):
        q = rng.uniform(0, 1, 2)
        r0 = rng.uniform(-0.5, 0.5)
        from netcournot.model import Allocation

        assert g.evaluate(q, [r0, -r0]) == pytest.approx(welfare(GAME, Allocation(q, [r0, -r0])), abs=1e-13)
    Q, l, c0 = g.quadratic()
    assert np.allclose(Q, Q.T) and c0 == 0
    assert objective_by_name(GAME, "SW").name == "sw"
    with pytest.raises(ValueError):
        objective_by_name(GAME, "cs")


def test_grid_search_small_and_thread_independent():
    g = DesignObjective.social_welfare(GAME)
    serial = grid_search(GAME, g, TE, 60, threads=1)
    parallel = grid_search(GAME, g, TE, 60, threads=3)
    # chunks warm-start from different neighbours, so agreement is to rounding only
    assert np.allclose(serial.values, parallel.values, rtol=0, atol=1e-12)
    assert serial.theta_max == parallel.theta_max
    assert TE.contains(serial.theta_max)
    ok, _ = verify_nash(GAME, serial.equilibrium.allocation, serial.theta_max)
    assert ok
    assert serial.g_value == pytest.approx(serial.values.max(), abs=1e-12)
    assert serial.baseline_sw == pytest.approx(83 / 256, abs=1e-12)
    assert serial.g_value > 83 / 256
    best = np.flatnonzero(serial.values == serial.values.max())
    assert tuple(serial.triples[best[0]]) == tuple(int(v * 60) for v in serial.theta_max.as_tuple())


def test_symmetric_game_has_flat_welfare():
    game = homogeneous_game([0.2, 0.2], 1.0, 1.0, TransportSet.line_box(0.3))
    te = ThetaEps.for_game(game, F(1, 100))
    res = grid_search(game, DesignObjective.social_welfare(game), te, 30, threads=1)
    assert np.ptp(res.values) <= 1e-12


def test_mpec_shape_and_embedding():
    g = DesignObjective.social_welfare(GAME)
    pp = build_mpec(GAME, g, TE)
    assert pp.n == 10
    assert pp.max_degree == 2
    assert pp.inequalities[-1][0] == "ball"
    rng = np.random.default_rng(1)
    triples = feasible_grid(TE, 50)
    for idx in rng.choice(len(triples), 15, replace=False):
        i, j, k = triples[idx]
        th = DesignParams(F(int(i), 50), F(int(j), 50), F(int(k), 50))
        res = solve_potential(GAME, th)
        z = embed_equilibrium(pp, GAME, res, th)
        rr = pp.residuals(z)
        assert rr["min_inequality"] >= -1e-8
        assert rr["max_equality"] <= 1e-8
        assert pp.objective(z) == pytest.approx(res.welfare, abs=1e-12)
    back = PolyProgram.from_dict(pp.to_dict())
    assert back.variables == pp.variables
    assert [nm for nm, _ in back.equalities] == [nm for nm, _ in pp.equalities]


def test_mpec_rejects_non_compact_transport():
    game = homogeneous_game([0.1, 0.3], 1.0, 1.0)
    with pytest.raises(NoSlaterPoint):
        build_mpec(game, DesignObjective.social_welfare(game), ThetaEps.for_game(game, F(1, 100)))
    game = homogeneous_game([0.1, 0.3], 1.0, 1.0, TransportSet.zero())
    with pytest.raises(NoSlaterPoint):
        build_mpec(game, DesignObjective.social_welfare(game), ThetaEps.for_game(game, F(1, 100)))
