"""Full equilibrium set of the two-market, two-firm game with one capacitated line.

Firm f sells only in market f at linear cost c_f; the market maker ships r from
market 2 to market 1 (r_1 = r, r_2 = -r) with |r| <= b. Given r the firm best
responses are explicit, so equilibria are the r in [-b, b] that are market-maker
best responses to those quantities. Three signs decide the shape of that set:

    t = 2 theta_M - theta_C        curvature of the market-maker payoff in r
    s = theta_M + theta_P - theta_C
    u = 3 theta_M - theta_C - theta_P = 2t - s

``r_set`` enumerates the nine regimes in exact arithmetic; ``brute_force_equilibria``
is an independent grid oracle for it.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from numbers import Rational, Real

import numpy as np

from .model import DesignParams, GameInstance, two_node_game

BOUNDARY_BAND = 1e-12

REGIMES = {
    1: "t>0, u>0",
    2: "t>0, u=0",
    3: "t>0, u<0",
    4: "t=0, s<0",
    5: "t=0, s=0",
    6: "t=0, s>0",
    7: "t<0, s<0",
    8: "t<0, s=0",
    9: "t<0, s>0",
}


class AmbiguousRegime(ValueError):
    pass


def _fr(x) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(x)


def _sgn(x) -> int:
    return (x > 0) - (x < 0)


@dataclass(frozen=True)
class TwoNodeParams:
    c1: Real
    c2: Real
    alpha: Real = 1
    beta: Real = 1
    b: Real = Fraction(1, 2)

    def __post_init__(self):
        if self.c1 < 0 or self.c2 < 0:
            raise ValueError("marginal costs must be nonnegative")
        if not (self.alpha > 0 and self.beta > 0):
            raise ValueError("alpha and beta must be positive")
        if self.b < 0:
            raise ValueError("line capacity must be nonnegative")
        if self.alpha < self.b * self.beta + max(self.c1, self.c2):
            raise ValueError("need alpha >= b*beta + max(c1, c2) so best-response quantities stay nonnegative")

    @property
    def delta_c(self):
        return self.c1 - self.c2

    @property
    def exact(self) -> bool:
        return all(isinstance(v, Rational) for v in (self.c1, self.c2, self.alpha, self.beta, self.b))

    def game(self) -> GameInstance:
        return two_node_game(self.c1, self.c2, self.alpha, self.beta, self.b)

    @classmethod
    def from_dict(cls, doc: dict, exact: bool = True) -> "TwoNodeParams":
        conv = (lambda v: Fraction(str(v))) if exact else float
        try:
            return cls(conv(doc["c1"]), conv(doc["c2"]), conv(doc.get("alpha", 1)),
                       conv(doc.get("beta", 1)), conv(doc["b"]))
        except KeyError as exc:
            raise ValueError(f"two-node parameters are missing field {exc}") from None


@dataclass(frozen=True)
class RSet:
    """Set of equilibrium reallocations: kind is singleton, finite, interval or empty."""

    kind: str
    values: tuple = ()
    regime: int = 0
    ambiguous: tuple = ()

    def __post_init__(self):
        if self.kind not in ("singleton", "finite", "interval", "empty"):
            raise ValueError(f"unknown RSet kind {self.kind!r}")

    @property
    def cardinality(self) -> float:
        if self.kind == "interval":
            lo, hi = self.values
            return float("inf") if hi > lo else 1
        return len(self.values)

    def contains(self, r, tol: float = 1e-12) -> bool:
        if self.kind == "interval":
            lo, hi = self.values
            return float(lo) - tol <= r <= float(hi) + tol
        return any(abs(float(v) - r) <= tol for v in self.values)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "values": [float(v) for v in self.values],
            "regime": self.regime,
            "ambiguous": list(self.ambiguous),
        }


def _points(values, b, regime, amb) -> RSet:
    uniq: list = []
    for v in values:
        if not any(abs(float(v) - float(w)) <= 1e-12 for w in uniq):
            uniq.append(v)
    uniq.sort()
    if not uniq:
        return RSet("empty", (), regime, amb)
    if len(uniq) == 1:
        return RSet("singleton", tuple(uniq), regime, amb)
    return RSet("finite", tuple(uniq), regime, amb)


def _clip(x, b):
    return max(-b, min(b, x))


def rho(r, theta: DesignParams, params: TwoNodeParams):
    """Slope in r of the market-maker payoff along the firm best responses."""
    tc, tp, tm = theta.as_tuple()
    return params.delta_c / 2 * (tm + tp - tc) - (3 * tm - tc - tp) * params.beta * r


def regime(params: TwoNodeParams, theta: DesignParams) -> int:
    return r_set(params, theta).regime


def r_set(params: TwoNodeParams, theta: DesignParams) -> RSet:
    inexact = not (params.exact and all(isinstance(v, Rational) for v in theta.as_tuple()))
    amb: list[str] = []

    def sign(x, name):
        if inexact and x != 0 and abs(x) <= BOUNDARY_BAND:
            amb.append(name)
        return _sgn(x)

    tc, tp, tm = (_fr(v) for v in theta.as_tuple())
    beta, b, dc = _fr(params.beta), _fr(params.b), _fr(params.delta_c)
    t = 2 * tm - tc
    s = tm + tp - tc
    u = 3 * tm - tc - tp
    st, ss, su = sign(t, "2theta_M-theta_C"), sign(s, "theta_M+theta_P-theta_C"), sign(u, "3theta_M-theta_C-theta_P")
    half = dc / (2 * beta)

    if st > 0:
        if su > 0:
            return _points([_clip(s / u * half, b)], b, 1, tuple(amb))
        if su == 0:
            if sign(dc, "delta_c") == 0:
                return RSet("interval", (-b, b), 2, tuple(amb))
            return _points([b * _sgn(dc)], b, 2, tuple(amb))
        root = s / u * half
        if sign(abs(root) - b, "|kappa*delta_c/(2beta)|-b") <= 0:
            return _points([-b, root, b], b, 3, tuple(amb))
        return _points([b * _sgn(dc)], b, 3, tuple(amb))
    if st == 0:
        if ss < 0:
            return _points([_clip(-half, b)], b, 4, tuple(amb))
        if ss == 0:
            return RSet("interval", (-b, b), 5, tuple(amb))
        if sign(abs(half) - b, "|delta_c/(2beta)|-b") <= 0:
            return _points([-b, -half, b], b, 6, tuple(amb))
        return _points([b * _sgn(dc)], b, 6, tuple(amb))
    if ss < 0:
        if sign(abs(half) - b, "|delta_c/(2beta)|-b") >= 0:
            return _points([-b * _sgn(dc)], b, 7, tuple(amb))
        return RSet("empty", (), 7, tuple(amb))
    if ss == 0:
        return _points([-b, b], b, 8, tuple(amb))
    if sign(abs(half) - b, "|delta_c/(2beta)|-b") <= 0:
        return _points([-b, b], b, 9, tuple(amb))
    return _points([b * _sgn(dc)], b, 9, tuple(amb))


def firm_quantities(params: TwoNodeParams, r):
    """Firm best responses to the reallocation r."""
    q1 = ((params.alpha - params.c1) / params.beta - r) / 2
    q2 = ((params.alpha - params.c2) / params.beta + r) / 2
    return q1, q2


def analytic_equilibria(params: TwoNodeParams, theta: DesignParams, interval_samples: int = 0):
    """Equilibrium triples (q1, q2, r).

    For an interval-valued set only its endpoints are listed, plus
    ``interval_samples`` evenly spaced interior points if requested. The RSet
    itself is available from ``r_set``.
    """
    rs = r_set(params, theta)
    if rs.kind == "interval":
        lo, hi = rs.values
        n = max(interval_samples, 1)
        rvals = [lo + (hi - lo) * Fraction(k, n) for k in range(n + 1)] if rs.values[0] != rs.values[1] else [lo]
    else:
        rvals = list(rs.values)
    return [(*firm_quantities(params, r), r) for r in rvals]


def mm_payoff_line(params: TwoNodeParams, theta: DesignParams, q1, q2, r):
    """Market-maker payoff with the line flow r, vectorized over r."""
    tc, tp, tm = (float(v) for v in theta.as_tuple())
    a, beta = float(params.alpha), float(params.beta)
    c1, c2 = float(params.c1), float(params.c2)
    d1, d2 = q1 + r, q2 - r
    p1, p2 = a - beta * d1, a - beta * d2
    cs = 0.5 * beta * (d1**2 + d2**2)
    ps = q1 * p1 - c1 * q1 + q2 * p2 - c2 * q2
    ms = r * p1 - r * p2
    return tc * cs + tp * ps + tm * ms


REFINE = 200


def _mm_gain(params: TwoNodeParams, theta: DesignParams, r, scan):
    """Market-maker gain from deviating, for the firm quantities induced by each r.

    The best deviation value comes from a scan over ``scan``, refined on a fine
    grid around the coarse argmax.
    """
    a, beta = float(params.alpha), float(params.beta)
    q1 = 0.5 * ((a - float(params.c1)) / beta - r)[:, None]
    q2 = 0.5 * ((a - float(params.c2)) / beta + r)[:, None]
    coarse = mm_payoff_line(params, theta, q1, q2, scan[None, :])
    j = coarse.argmax(axis=1)
    lo = scan[np.maximum(j - 1, 0)]
    hi = scan[np.minimum(j + 1, scan.size - 1)]
    frac = np.linspace(0.0, 1.0, REFINE + 1)[None, :]
    fine = mm_payoff_line(params, theta, q1, q2, lo[:, None] + (hi - lo)[:, None] * frac)
    own = mm_payoff_line(params, theta, q1[:, 0], q2[:, 0], r)
    best = np.maximum(np.maximum(coarse.max(axis=1), fine.max(axis=1)), own)
    return best - own, float(np.abs(coarse).max())


def _local_variation(gain):
    step = np.abs(np.diff(gain))
    local = np.zeros_like(gain)
    local[:-1] = step
    local[1:] = np.maximum(local[1:], step)
    return local


def brute_force_equilibria(params: TwoNodeParams, theta: DesignParams, grid_n: int = 2000):
    """Grid oracle: profiles (q1, q2, r) with r on a uniform grid that survive deviation checks.

    Firms are checked against their exact best responses. The market maker is
    checked by scanning r over the grid. A grid point is a candidate when its
    market-maker gain is within the gain's variation to its neighbours; each
    candidate is then rechecked on a grid 200 times finer spanning its two
    neighbours, and kept if the gain there reaches (numerically) zero. The
    recheck separates true zeros from kinks where the gain is small but positive.
    """
    if grid_n < 100:
        raise ValueError("grid_n must be at least 100")
    b = float(params.b)
    a, beta = float(params.alpha), float(params.beta)
    c1, c2 = float(params.c1), float(params.c2)
    grid = np.linspace(-b, b, grid_n + 1)
    gain, scale = _mm_gain(params, theta, grid, grid)
    scale = max(1.0, scale)
    zero = 1e-12 * scale
    candidates = np.nonzero(gain <= np.maximum(_local_variation(gain), zero))[0]

    keep = []
    for k in candidates:
        if gain[k] <= zero:
            keep.append(k)
            continue
        lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, grid_n)]
        fine = np.linspace(lo, hi, 2 * REFINE + 1)
        g, _ = _mm_gain(params, theta, fine, grid)
        m = int(g.argmin())
        if g[m] <= max(_local_variation(g)[m], zero):
            keep.append(k)

    def profit1(x, r):
        return x * (a - beta * (x + r)) - c1 * x

    def profit2(x, r):
        return x * (a - beta * (x - r)) - c2 * x

    out = []
    for k in keep:
        r = grid[k]
        q1 = 0.5 * ((a - c1) / beta - r)
        q2 = 0.5 * ((a - c2) / beta + r)
        # profit is concave in own quantity, so the clamped stationary point is the best deviation
        best1 = max(0.0, 0.5 * ((a - c1) / beta - r))
        best2 = max(0.0, 0.5 * ((a - c2) / beta + r))
        g1 = profit1(best1, r) - profit1(q1, r)
        g2 = profit2(best2, r) - profit2(q2, r)
        if max(g1, g2) <= zero:
            out.append((float(q1), float(q2), float(r)))
    return out


@dataclass(frozen=True)
class GridClusters:
    """Grid survivors grouped into runs of adjacent points.

    kind follows RSet; ``values`` are run midpoints and ``half_widths`` their half spans.
    """

    kind: str
    values: tuple = ()
    half_widths: tuple = ()


def cluster_equilibria(points, params: TwoNodeParams, grid_n: int) -> GridClusters:
    """A run covering at least 95% of the grid is reported as the whole interval."""
    b = float(params.b)
    h = 2 * b / grid_n if b > 0 else 0.0
    if not points:
        return GridClusters("empty")
    rs = sorted(p[2] for p in points)
    if h > 0 and len(rs) >= 0.95 * (grid_n + 1):
        return GridClusters("interval", (rs[0], rs[-1]), (0.5 * (rs[-1] - rs[0]),))
    runs = [[rs[0]]]
    for r in rs[1:]:
        if r - runs[-1][-1] <= 1.5 * h:
            runs[-1].append(r)
        else:
            runs.append([r])
    return GridClusters(
        "singleton" if len(runs) == 1 else "finite",
        tuple(0.5 * (run[0] + run[-1]) for run in runs),
        tuple(0.5 * (run[-1] - run[0]) for run in runs),
    )


def same_equilibrium_set(analytic: RSet, brute: GridClusters, params: TwoNodeParams, grid_n: int) -> bool:
    """Whether the analytic set and the grid clusters agree up to grid spacing."""
    h = 2 * float(params.b) / grid_n
    if analytic.kind == "interval" and analytic.values[0] != analytic.values[1]:
        return brute.kind == "interval"
    if analytic.kind == "empty" or brute.kind in ("empty", "interval"):
        return analytic.kind == brute.kind
    a_vals = [float(v) for v in analytic.values]
    if len(a_vals) != len(brute.values):
        return False
    return all(abs(a - v) <= w + 2 * h for a, v, w in zip(a_vals, brute.values, brute.half_widths))


def sweep(params: TwoNodeParams, resolution: int):
    """Cardinality of the equilibrium set at every point (i, j, k)/resolution of the design simplex.

    Interval-valued sets are reported with cardinality -1.
    """
    from .regions import barycentric_grid

    rows = []
    for i, j, k in barycentric_grid(resolution):
        theta = DesignParams(Fraction(i, resolution), Fraction(j, resolution), Fraction(k, resolution))
        rs = r_set(params, theta)
        card = rs.cardinality
        rows.append({
            "theta_c": i / resolution,
            "theta_p": j / resolution,
            "theta_m": k / resolution,
            "regime": rs.regime,
            "cardinality": -1 if card == float("inf") else int(card),
        })
    return rows
