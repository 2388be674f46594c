"""Classification of design parameters against the existence/uniqueness conditions.

Boundary tests are done in exact rational arithmetic. Inputs that are not
already Fractions or ints are converted exactly from their binary float value;
if a quantity that decides a flag then lies within ``BOUNDARY_BAND`` of zero
without being exactly zero, the flag is reported as ambiguous instead of being
silently trusted.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Rational

import numpy as np

from .model import DesignParams, GameInstance

BOUNDARY_BAND = 1e-12


def _exact(x) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(x)


def _is_exact(x) -> bool:
    return isinstance(x, Rational)


def gamma_exact(game: GameInstance) -> Fraction:
    """Uniqueness threshold gamma as an exact rational."""
    worst = None
    for m, market in enumerate(game.markets):
        beta = _exact(market.beta)
        total = Fraction(1)
        for f in game.firms_in(m):
            total += beta / (beta + _exact(game.firms[f].cost.curvature))
        inv = 1 / total
        worst = inv if worst is None else min(worst, inv)
    return 1 - worst


def gamma(game: GameInstance) -> float:
    return float(gamma_exact(game))


def gamma_plus(theta: DesignParams):
    """(2 theta_M - theta_C) / (theta_M + theta_P - theta_C), or None if the denominator is <= 0."""
    s = theta.potential_weight
    if s <= 0:
        return None
    return theta.concavity / s


@dataclass(frozen=True)
class RegionReport:
    """Flags for one design point.

    ``potential_concave`` is the non-strict uniqueness margin alone, without the
    compactness requirement; on an unbounded transport set it says the potential
    is concave but an optimizer may not exist.
    """

    gamma: float
    gamma_plus: float | None
    is_potential_game: bool
    mm_payoff_concave_in_r: bool
    existence_guaranteed: bool
    unique_via_potential: bool
    equilibria_equal_optimizers: bool
    transport_compact: bool = True
    potential_concave: bool = False
    ambiguous: tuple = field(default=())

    def to_dict(self) -> dict:
        return {
            "gamma": self.gamma,
            "gamma_plus": self.gamma_plus,
            "is_potential_game": self.is_potential_game,
            "mm_payoff_concave_in_r": self.mm_payoff_concave_in_r,
            "existence_guaranteed": self.existence_guaranteed,
            "unique_via_potential": self.unique_via_potential,
            "equilibria_equal_optimizers": self.equilibria_equal_optimizers,
            "transport_compact": self.transport_compact,
            "potential_concave": self.potential_concave,
            "ambiguous": list(self.ambiguous),
        }


def transport_is_compact(game: GameInstance) -> bool:
    """Whether the balanced transport set P' = P ∩ {1'r = 0} is bounded."""
    tr = game.transport
    if tr.kind == "zero" or game.n_markets == 1:
        return True
    if tr.kind == "unconstrained":
        return False
    from scipy.optimize import linprog

    A, b = tr.A_array, tr.b_array
    n = game.n_markets
    ones = np.ones((1, n))
    for j in range(n):
        for sign in (1.0, -1.0):
            c = np.zeros(n)
            c[j] = -sign
            res = linprog(c, A_ub=A if len(A) else None, b_ub=b if len(b) else None,
                          A_eq=ones, b_eq=[0.0], bounds=[(None, None)] * n, method="highs")
            if res.status == 3:
                return False
    return True


class _Comparator:
    """Sign of an exact quantity, remembering near-boundary cases for inexact data."""

    def __init__(self, inexact: bool):
        self.inexact = inexact
        self.ambiguous: list[str] = []

    def sign(self, value: Fraction, name: str) -> int:
        if self.inexact and value != 0 and abs(value) <= BOUNDARY_BAND:
            self.ambiguous.append(name)
        return (value > 0) - (value < 0)


def classify(game: GameInstance, theta: DesignParams, compact: bool | None = None) -> RegionReport:
    """Evaluate every existence/uniqueness flag for the design parameter theta."""
    if all(v == 0 for v in theta.as_tuple()):
        raise ValueError("design weights cannot all be zero")
    data = list(theta.as_tuple())
    for mk in game.markets:
        data += [mk.alpha, mk.beta]
    for fm in game.firms:
        data += [fm.cost.c_lin, fm.cost.c_quad]
    cmp = _Comparator(inexact=not all(_is_exact(v) for v in data))

    tc, tp, tm = (_exact(v) for v in theta.as_tuple())
    s = tm + tp - tc
    t = 2 * tm - tc
    g = gamma_exact(game)
    if compact is None:
        compact = transport_is_compact(game)

    s_sign = cmp.sign(s, "theta_M+theta_P-theta_C")
    t_sign = cmp.sign(t, "2theta_M-theta_C")
    margin_sign = cmp.sign(t - g * s, "2theta_M-theta_C-gamma(theta_M+theta_P-theta_C)")

    potential = s_sign > 0
    concave = t_sign >= 0
    nonstrict = potential and margin_sign >= 0
    strict = potential and margin_sign > 0
    existence = strict or (compact and (concave or potential))
    equal_opt = strict or (compact and nonstrict)

    return RegionReport(
        gamma=float(g),
        gamma_plus=float(t / s) if s > 0 else None,
        is_potential_game=potential,
        mm_payoff_concave_in_r=concave,
        existence_guaranteed=existence,
        unique_via_potential=strict,
        equilibria_equal_optimizers=equal_opt,
        transport_compact=compact,
        potential_concave=nonstrict,
        ambiguous=tuple(cmp.ambiguous),
    )


def hessian_block(game: GameInstance, theta: DesignParams, m: int, q=None, normalized: bool = False) -> np.ndarray:
    """Negated Hessian block of the potential for market m, over (q_f for f in m, r_m).

    With ``normalized=True`` the block is divided by theta_M + theta_P - theta_C,
    which requires that weight to be positive. Costs are quadratic, so the block
    does not depend on q; the argument is accepted for interface symmetry.
    """
    tc, tp, tm = (float(v) for v in theta.as_tuple())
    s = tm + tp - tc
    t = 2 * tm - tc
    beta = float(game.markets[m].beta)
    firms = game.firms_in(m)
    n = len(firms)
    d = np.array([beta + float(game.firms[f].cost.curvature) for f in firms])
    H = np.zeros((n + 1, n + 1))
    H[:n, :n] = s * (beta * np.ones((n, n)) + np.diag(d))
    H[:n, n] = s * beta
    H[n, :n] = s * beta
    H[n, n] = t * beta
    if normalized:
        if s <= 0:
            raise ValueError("normalized block needs theta_M + theta_P - theta_C > 0")
        H = H / s
    return H


def min_block_eigenvalue(game: GameInstance, theta: DesignParams, normalized: bool = False) -> float:
    return min(
        float(np.linalg.eigvalsh(hessian_block(game, theta, m, normalized=normalized))[0])
        for m in range(game.n_markets)
    )


def barycentric_grid(resolution: int):
    """Yield (i, j, k) with i + j + k = resolution, lexicographically ordered."""
    for i in range(resolution + 1):
        for j in range(resolution + 1 - i):
            yield i, j, resolution - i - j


def region_map(game: GameInstance, resolution: int) -> list[dict]:
    """Flags at every point (i, j, k)/resolution of the design simplex (theta_C, theta_P, theta_M)."""
    compact = transport_is_compact(game)
    rows = []
    for i, j, k in barycentric_grid(resolution):
        theta = DesignParams(Fraction(i, resolution), Fraction(j, resolution), Fraction(k, resolution))
        rep = classify(game, theta, compact=compact)
        rows.append(
            {
                "theta_c": float(theta.theta_c),
                "theta_p": float(theta.theta_p),
                "theta_m": float(theta.theta_m),
                "is_potential_game": int(rep.is_potential_game),
                "mm_payoff_concave_in_r": int(rep.mm_payoff_concave_in_r),
                "existence_guaranteed": int(rep.existence_guaranteed),
                "equilibria_equal_optimizers": int(rep.equilibria_equal_optimizers),
                "unique_via_potential": int(rep.unique_via_potential),
            }
        )
    return rows
