"""Random instance generators shared by the test modules."""

from fractions import Fraction

import numpy as np

from netcournot.model import CostFn, DesignParams, FirmSpec, GameInstance, MarketSpec, TransportSet
from netcournot.regions import gamma


def random_game(rng, n_markets=None, max_firms=2, transport="box", quadratic=True) -> GameInstance:
    n_markets = n_markets or int(rng.integers(2, 5))
    markets = tuple(MarketSpec(float(rng.uniform(1.5, 3.0)), float(rng.uniform(0.5, 2.0))) for _ in range(n_markets))
    firms = []
    for m in range(n_markets):
        for _ in range(int(rng.integers(1, max_firms + 1))):
            d = float(rng.uniform(0.0, 1.0)) if quadratic else 0.0
            firms.append(FirmSpec(m, CostFn(float(rng.uniform(0.0, 0.8)), d)))
    if transport == "box":
        cap = rng.uniform(0.1, 0.6, size=n_markets)
        A = np.vstack([np.eye(n_markets), -np.eye(n_markets)])
        tr = TransportSet.polytope(A.tolist(), np.concatenate([cap, cap]).tolist())
    elif transport == "unconstrained":
        tr = TransportSet.unconstrained()
    else:
        tr = TransportSet.zero()
    return GameInstance(markets, tuple(firms), tr)


def random_simplex(rng) -> DesignParams:
    w = rng.dirichlet(np.ones(3))
    return DesignParams(*map(float, w))


def random_unique_theta(rng, game, margin=0.02) -> DesignParams:
    """theta on the simplex with a strict uniqueness margin."""
    g = gamma(game)
    while True:
        th = random_simplex(rng)
        s = th.potential_weight
        if s > margin and th.concavity > g * s + margin:
            return th


def random_potential_theta(rng, margin=0.02) -> DesignParams:
    while True:
        th = random_simplex(rng)
        if th.potential_weight > margin:
            return th


def frac_theta(a, b, c) -> DesignParams:
    return DesignParams(Fraction(a), Fraction(b), Fraction(c))


def random_networked_theta(rng, margin=0.02) -> DesignParams:
    """theta with s > 0 and 2 theta_M - theta_C > s/2, the closed-form hypotheses."""
    while True:
        th = random_simplex(rng)
        s = th.potential_weight
        if s > margin and th.concavity > s / 2 + margin:
            return th


def random_homogeneous(rng, theta, n=None):
    """Homogeneous instance meeting the networked, isolated and aggregated hypotheses."""
    from netcournot.closed_form import HomogeneousInstance, kappa

    n = int(n or rng.integers(2, 7))
    costs = rng.uniform(0.0, 0.5, n)
    cmax, cbar = costs.max(), costs.mean()
    k = float(kappa(theta))
    floor = max((1 + k) * cmax - k * cbar, (1 + n) * cmax - n * cbar, 2 * cmax - cbar)
    return HomogeneousInstance(tuple(costs), floor + rng.uniform(0.1, 1.0), rng.uniform(0.5, 2.0))


def _rand_frac(rng, lo, hi, den=1000) -> Fraction:
    """Random Fraction strictly inside (lo, hi) on a 1/den lattice."""
    a, b = int(np.floor(lo * den)) + 1, int(np.ceil(hi * den)) - 1
    return Fraction(int(rng.integers(a, b + 1)), den)


def regime_theta(rng, regime: int) -> DesignParams:
    """Exact theta on the simplex whose sign pattern (t, u or s) matches a two-node regime."""
    half, quarter, third = Fraction(1, 2), Fraction(1, 4), Fraction(1, 3)
    if regime == 2:
        tc = _rand_frac(rng, 0, half)
        return DesignParams(tc, 3 * quarter - tc, quarter)
    if regime in (4, 5, 6):
        a = {4: lambda: _rand_frac(rng, quarter, third + Fraction(1, 1000)), 5: lambda: quarter,
             6: lambda: _rand_frac(rng, 0, quarter)}[regime]()
        return DesignParams(2 * a, 1 - 3 * a, a)
    if regime == 8:
        tm = _rand_frac(rng, 0, quarter)
        return DesignParams(half, half - tm, tm)
    want = {1: (1, 1), 3: (1, -1), 7: (-1, -1), 9: (-1, 1)}[regime]
    while True:
        w = rng.dirichlet(np.ones(3))
        tc = Fraction(int(w[0] * 1000), 1000)
        tp = Fraction(int(w[1] * 1000), 1000)
        tm = 1 - tc - tp
        t = 2 * tm - tc
        second = (3 * tm - tc - tp) if regime in (1, 3) else (tm + tp - tc)
        if tm > 0 and (t > 0) - (t < 0) == want[0] and (second > 0) - (second < 0) == want[1]:
            return DesignParams(tc, tp, tm)


def random_two_node_params(rng):
    from netcournot.two_node import TwoNodeParams

    return TwoNodeParams(_rand_frac(rng, 0, 0.5), _rand_frac(rng, 0, 0.5), 1, 1, _rand_frac(rng, 0.05, 0.5))
