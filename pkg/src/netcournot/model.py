"""Domain types and payoff evaluation for networked Cournot competition.

A game consists of markets with linear inverse demand, firms with convex
quadratic costs that each sell into a single home market, and a market maker
that reallocates the commodity between markets subject to a transport set.
Every payoff here is evaluated in closed form; no quadrature is involved.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Real
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

BALANCE_TOL = 1e-9
FEASIBILITY_TOL = 1e-9


@dataclass(frozen=True)
class MarketSpec:
    """Linear inverse demand p(d) = alpha - beta * d."""

    alpha: Real
    beta: Real

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"market alpha must be positive, got {self.alpha}")
        if not self.beta > 0:
            raise ValueError(f"market beta must be positive, got {self.beta}")


@dataclass(frozen=True)
class CostFn:
    """Convex quadratic cost c(q) = c_lin * q + c_quad * q**2 / 2."""

    c_lin: Real = 0
    c_quad: Real = 0

    def __post_init__(self):
        if self.c_lin < 0 or self.c_quad < 0:
            raise ValueError("cost coefficients must be nonnegative")

    def cost(self, q):
        return self.c_lin * q + self.c_quad * q * q / 2

    def marginal(self, q):
        return self.c_lin + self.c_quad * q

    @property
    def curvature(self):
        """Constant second derivative; equals inf c'' over q >= 0."""
        return self.c_quad


@dataclass(frozen=True)
class FirmSpec:
    market_id: int
    cost: CostFn = field(default_factory=CostFn)


@dataclass(frozen=True)
class TransportSet:
    """Feasible reallocations: a polytope {r : A r <= b}, all of R^M, or {0}."""

    kind: str
    A: tuple = ()
    b: tuple = ()

    KINDS = ("polytope", "unconstrained", "zero")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown transport kind {self.kind!r}")
        if self.kind == "polytope":
            if len(self.A) != len(self.b):
                raise ValueError("polytope A and b have different row counts")
            widths = {len(row) for row in self.A}
            if len(widths) > 1:
                raise ValueError("polytope rows have inconsistent widths")
        elif self.A or self.b:
            raise ValueError(f"{self.kind} transport carries no data")

    @classmethod
    def polytope(cls, A, b) -> "TransportSet":
        A = tuple(tuple(row) for row in np.asarray(A, dtype=object).tolist())
        return cls("polytope", A, tuple(np.asarray(b, dtype=object).tolist()))

    @classmethod
    def unconstrained(cls) -> "TransportSet":
        return cls("unconstrained")

    @classmethod
    def zero(cls) -> "TransportSet":
        return cls("zero")

    @classmethod
    def line_box(cls, capacity) -> "TransportSet":
        """Two markets joined by one line: |r_1| <= cap, |r_2| <= cap."""
        return cls.polytope(
            [[1, 0], [-1, 0], [0, 1], [0, -1]], [capacity] * 4
        )

    @property
    def A_array(self) -> np.ndarray:
        return np.array(self.A, dtype=float).reshape(len(self.A), -1)

    @property
    def b_array(self) -> np.ndarray:
        return np.array(self.b, dtype=float)


@dataclass(frozen=True)
class GameInstance:
    markets: tuple
    firms: tuple
    transport: TransportSet = field(default_factory=TransportSet.unconstrained)

    def __post_init__(self):
        object.__setattr__(self, "markets", tuple(self.markets))
        object.__setattr__(self, "firms", tuple(self.firms))
        if not self.markets:
            raise ValueError("a game needs at least one market")
        if not self.firms:
            raise ValueError("a game needs at least one firm")
        for i, firm in enumerate(self.firms):
            if not 0 <= firm.market_id < len(self.markets):
                raise ValueError(f"firm {i} references missing market {firm.market_id}")
        tr = self.transport
        if tr.kind == "polytope":
            if tr.A and len(tr.A[0]) != len(self.markets):
                raise ValueError(
                    f"transport rows have {len(tr.A[0])} columns, expected {len(self.markets)}"
                )
            if any(bj < 0 for bj in tr.b):
                # the zero reallocation must be feasible; solvers start there
                raise ValueError("transport polytope must contain r = 0")

    @property
    def n_markets(self) -> int:
        return len(self.markets)

    @property
    def n_firms(self) -> int:
        return len(self.firms)

    @property
    def market_of(self) -> np.ndarray:
        return np.array([f.market_id for f in self.firms], dtype=int)

    def firms_in(self, m: int) -> list[int]:
        return [i for i, f in enumerate(self.firms) if f.market_id == m]

    @property
    def alpha(self) -> np.ndarray:
        return np.array([float(mk.alpha) for mk in self.markets])

    @property
    def beta(self) -> np.ndarray:
        return np.array([float(mk.beta) for mk in self.markets])

    @property
    def c_lin(self) -> np.ndarray:
        return np.array([float(f.cost.c_lin) for f in self.firms])

    @property
    def c_quad(self) -> np.ndarray:
        return np.array([float(f.cost.c_quad) for f in self.firms])

    def incidence(self) -> np.ndarray:
        """|M| x |F| matrix with a one where firm f sells into market m."""
        E = np.zeros((self.n_markets, self.n_firms))
        E[self.market_of, np.arange(self.n_firms)] = 1.0
        return E


@dataclass(frozen=True)
class DesignParams:
    """Market-maker weights on consumer, producer and merchandising surplus."""

    theta_c: Real
    theta_p: Real
    theta_m: Real

    def __post_init__(self):
        vals = self.as_tuple()
        if any(v < 0 for v in vals):
            raise ValueError(f"design weights must be nonnegative, got {vals}")
        if all(v == 0 for v in vals):
            raise ValueError("design weights cannot all be zero")

    def as_tuple(self) -> tuple:
        return (self.theta_c, self.theta_p, self.theta_m)

    @property
    def potential_weight(self):
        """theta_M + theta_P - theta_C; positive exactly in the potential region."""
        return self.theta_m + self.theta_p - self.theta_c

    @property
    def concavity(self):
        """2 theta_M - theta_C; the market maker payoff is concave in r iff >= 0."""
        return 2 * self.theta_m - self.theta_c

    def scaled(self, s) -> "DesignParams":
        return DesignParams(self.theta_c * s, self.theta_p * s, self.theta_m * s)


PRESETS = {
    "SW": (1, 1, 1),
    "CS": (1, 0, 0),
    "RSW": (1, 0, 1),
    "MS": (0, 0, 1),
}


def theta_preset(name: str) -> DesignParams:
    try:
        return DesignParams(*PRESETS[name.upper()])
    except KeyError:
        raise ValueError(f"unknown design preset {name!r}; expected one of {sorted(PRESETS)}") from None


def simplex_normalize(theta: DesignParams) -> DesignParams:
    total = theta.theta_c + theta.theta_p + theta.theta_m
    if total == 0:
        raise ValueError("cannot normalize the zero design vector")
    if isinstance(total, int):
        total = Fraction(total)
    return DesignParams(theta.theta_c / total, theta.theta_p / total, theta.theta_m / total)


@dataclass(frozen=True)
class Allocation:
    """Firm quantities q and market-maker reallocation r, with optional multipliers.

    Multiplier signs follow the optimality system of the potential program:
    grad_r(potential) - lambda_balance * 1 - A^T nu_transport = 0 and
    grad_q(potential) + mu_firm = 0.
    """

    q: np.ndarray
    r: np.ndarray
    lambda_balance: float | None = None
    mu_firm: np.ndarray | None = None
    nu_transport: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "q", np.asarray(self.q, dtype=float).copy())
        object.__setattr__(self, "r", np.asarray(self.r, dtype=float).copy())
        for name in ("mu_firm", "nu_transport"):
            val = getattr(self, name)
            if val is not None:
                object.__setattr__(self, name, np.asarray(val, dtype=float).copy())

    def with_q(self, f: int, value: float) -> "Allocation":
        q = self.q.copy()
        q[f] = value
        return Allocation(q, self.r)

    def with_r(self, r) -> "Allocation":
        return Allocation(self.q, np.asarray(r, dtype=float))


def zero_allocation(game: GameInstance) -> Allocation:
    return Allocation(np.zeros(game.n_firms), np.zeros(game.n_markets))


def validate_allocation(game: GameInstance, alloc: Allocation, tol: float = FEASIBILITY_TOL) -> None:
    """Raise ValueError unless alloc is a feasible joint strategy of the game."""
    if alloc.q.shape != (game.n_firms,) or alloc.r.shape != (game.n_markets,):
        raise ValueError(
            f"allocation shapes q{alloc.q.shape}, r{alloc.r.shape} do not match "
            f"{game.n_firms} firms and {game.n_markets} markets"
        )
    if np.any(alloc.q < -tol):
        raise ValueError("firm quantities must be nonnegative")
    if abs(alloc.r.sum()) > BALANCE_TOL:
        raise ValueError(f"reallocation does not balance: sum(r) = {alloc.r.sum():.3e}")
    tr = game.transport
    if tr.kind == "zero" and np.any(np.abs(alloc.r) > tol):
        raise ValueError("transport set is {0} but r is nonzero")
    if tr.kind == "polytope" and tr.A:
        viol = tr.A_array @ alloc.r - tr.b_array
        if np.any(viol > tol):
            raise ValueError(f"reallocation violates transport row {int(np.argmax(viol))}")


@dataclass(frozen=True)
class SurplusBreakdown:
    cs: np.ndarray
    ps: np.ndarray
    ms: np.ndarray

    @property
    def welfare(self) -> float:
        return float(self.cs.sum() + self.ps.sum() + self.ms.sum())


def price(market: MarketSpec, demand):
    return market.alpha - market.beta * demand


def market_output(game: GameInstance, q) -> np.ndarray:
    """Q_m: total firm output in each market."""
    return game.incidence() @ np.asarray(q, dtype=float)


def demands(game: GameInstance, alloc: Allocation) -> np.ndarray:
    return alloc.r + market_output(game, alloc.q)


def firm_profit(game: GameInstance, alloc: Allocation, f: int) -> float:
    if not 0 <= f < game.n_firms:
        raise IndexError(f"firm index {f} out of range for {game.n_firms} firms")
    firm = game.firms[f]
    m = firm.market_id
    d = alloc.r[m] + alloc.q[game.firms_in(m)].sum()
    qf = alloc.q[f]
    return float(qf * price(game.markets[m], d) - firm.cost.cost(qf))


def surplus_breakdown(game: GameInstance, alloc: Allocation) -> SurplusBreakdown:
    alpha, beta = game.alpha, game.beta
    Q = market_output(game, alloc.q)
    d = alloc.r + Q
    p = alpha - beta * d
    costs = np.zeros(game.n_markets)
    for f, firm in enumerate(game.firms):
        costs[firm.market_id] += float(firm.cost.cost(alloc.q[f]))
    cs = 0.5 * beta * d**2
    ps = Q * p - costs
    ms = alloc.r * p
    return SurplusBreakdown(cs, ps, ms)


def welfare(game: GameInstance, alloc: Allocation) -> float:
    return surplus_breakdown(game, alloc).welfare


def mm_payoff(game: GameInstance, alloc: Allocation, theta: DesignParams) -> float:
    sb = surplus_breakdown(game, alloc)
    tc, tp, tm = (float(v) for v in theta.as_tuple())
    return float(tc * sb.cs.sum() + tp * sb.ps.sum() + tm * sb.ms.sum())


def potential(game: GameInstance, alloc: Allocation, theta: DesignParams) -> float:
    """Potential function of the game, evaluated through its expanded quadratic form."""
    tc, tp, tm = (float(v) for v in theta.as_tuple())
    s = tm + tp - tc
    alpha, beta = game.alpha, game.beta
    q, r = alloc.q, alloc.r
    Q = market_output(game, q)
    E = game.incidence()
    firm_cost = np.array([float(fm.cost.cost(qf)) for fm, qf in zip(game.firms, q)])
    per_market = (
        (alpha - beta * r) * Q
        - E @ firm_cost
        - 0.5 * beta * Q**2
        - 0.5 * beta * (E @ q**2)
    )
    mm_part = (tc - 2 * tm) * 0.5 * beta * r**2 + tm * alpha * r
    return float(s * per_market.sum() + mm_part.sum())


def potential_quadratic(game: GameInstance, theta: DesignParams) -> tuple[np.ndarray, np.ndarray]:
    """Hessian P and linear term p with potential(x) = x'Px/2 + p'x, x = (q, r)."""
    tc, tp, tm = (float(v) for v in theta.as_tuple())
    s = tm + tp - tc
    nf, nm = game.n_firms, game.n_markets
    alpha, beta = game.alpha, game.beta
    mkt = game.market_of
    E = game.incidence()
    bf = beta[mkt]
    P = np.zeros((nf + nm, nf + nm))
    # q-q block: -s * (beta_m 11' + diag(beta_m + c''_f)) within each market
    P[:nf, :nf] = -s * (E.T @ np.diag(beta) @ E + np.diag(bf + game.c_quad))
    P[:nf, nf:] = -s * (E.T * beta)
    P[nf:, :nf] = P[:nf, nf:].T
    P[nf:, nf:] = np.diag((tc - 2 * tm) * beta)
    p = np.concatenate([s * (alpha[mkt] - game.c_lin), tm * alpha])
    return P, p


def potential_gradient(game: GameInstance, alloc: Allocation, theta: DesignParams):
    P, p = potential_quadratic(game, theta)
    g = P @ np.concatenate([alloc.q, alloc.r]) + p
    return g[: game.n_firms], g[game.n_firms :]


def mm_payoff_gradient(game: GameInstance, alloc: Allocation, theta: DesignParams):
    """Gradient of the market-maker payoff with respect to (q, r)."""
    tc, tp, tm = (float(v) for v in theta.as_tuple())
    alpha, beta = game.alpha, game.beta
    mkt = game.market_of
    Q = market_output(game, alloc.q)
    d = alloc.r + Q
    p = alpha - beta * d
    # derivatives of the per-market surpluses with respect to d_m, Q_m and r_m
    dcs_dd = beta * d
    dps_dQ = p
    dps_dd = -beta * Q
    dms_dr = p
    dms_dd = -beta * alloc.r
    grad_r = tc * dcs_dd + tp * dps_dd + tm * (dms_dr + dms_dd)
    per_market_q = tc * dcs_dd + tp * (dps_dQ + dps_dd) + tm * dms_dd
    grad_q = per_market_q[mkt] - tp * (game.c_lin + game.c_quad * alloc.q)
    return grad_q, grad_r


def firm_profit_gradient(game: GameInstance, alloc: Allocation, f: int):
    """Gradient of pi_f with respect to (q, r)."""
    m = game.firms[f].market_id
    beta = float(game.markets[m].beta)
    d = demands(game, alloc)[m]
    p = float(game.markets[m].alpha) - beta * d
    qf = alloc.q[f]
    grad_q = np.zeros(game.n_firms)
    grad_q[game.firms_in(m)] = -beta * qf
    grad_q[f] = p - beta * qf - float(game.firms[f].cost.marginal(qf))
    grad_r = np.zeros(game.n_markets)
    grad_r[m] = -beta * qf
    return grad_q, grad_r


# --- JSON ingestion / emission -------------------------------------------------


def _num(x, exact: bool):
    if isinstance(x, bool) or not isinstance(x, (int, float, Fraction, str)):
        raise ValueError(f"expected a number, got {x!r}")
    if exact:
        return Fraction(x) if not isinstance(x, float) else Fraction(repr(x))
    return float(x)


def game_from_dict(doc: dict, exact: bool = False) -> GameInstance:
    """Build a game from the JSON document layout used by the CLI.

    With exact=True all numbers become Fractions (decimal literals are read
    exactly), which lets region classification compare boundaries exactly.
    """
    try:
        markets = [MarketSpec(_num(m["alpha"], exact), _num(m["beta"], exact)) for m in doc["markets"]]
        firms = [
            FirmSpec(
                int(f["market"]),
                CostFn(_num(f.get("c_lin", 0), exact), _num(f.get("c_quad", 0), exact)),
            )
            for f in doc["firms"]
        ]
        tdoc = doc.get("transport", {"kind": "unconstrained"})
        kind = tdoc.get("kind", "unconstrained")
        if kind == "polytope":
            A = [[_num(v, exact) for v in row] for row in tdoc["A"]]
            b = [_num(v, exact) for v in tdoc["b"]]
            transport = TransportSet("polytope", tuple(map(tuple, A)), tuple(b))
        else:
            transport = TransportSet(kind)
    except KeyError as exc:
        raise ValueError(f"game document is missing field {exc}") from None
    return GameInstance(tuple(markets), tuple(firms), transport)


def game_to_dict(game: GameInstance) -> dict:
    tr = game.transport
    tdoc: dict = {"kind": tr.kind}
    if tr.kind == "polytope":
        tdoc["A"] = [[float(v) for v in row] for row in tr.A]
        tdoc["b"] = [float(v) for v in tr.b]
    return {
        "markets": [{"alpha": float(m.alpha), "beta": float(m.beta)} for m in game.markets],
        "firms": [
            {"market": f.market_id, "c_lin": float(f.cost.c_lin), "c_quad": float(f.cost.c_quad)}
            for f in game.firms
        ],
        "transport": tdoc,
    }


def load_game(path, exact: bool = True) -> GameInstance:
    text = Path(path).read_text()
    doc = json.loads(text, parse_float=Fraction if exact else float)
    return game_from_dict(doc, exact=exact)


def allocation_to_dict(alloc: Allocation, breakdown: SurplusBreakdown | None = None) -> dict:
    out: dict = {"q": alloc.q.tolist(), "r": alloc.r.tolist()}
    mult: dict = {}
    if alloc.lambda_balance is not None:
        mult["lambda_balance"] = float(alloc.lambda_balance)
    if alloc.mu_firm is not None:
        mult["mu_firm"] = alloc.mu_firm.tolist()
    if alloc.nu_transport is not None:
        mult["nu_transport"] = alloc.nu_transport.tolist()
    out["multipliers"] = mult
    if breakdown is not None:
        out["breakdown"] = {
            "cs": breakdown.cs.tolist(),
            "ps": breakdown.ps.tolist(),
            "ms": breakdown.ms.tolist(),
            "welfare": breakdown.welfare,
        }
    return out


def allocation_from_dict(doc: dict) -> Allocation:
    mult = doc.get("multipliers", {})
    return Allocation(
        np.asarray(doc["q"], dtype=float),
        np.asarray(doc["r"], dtype=float),
        mult.get("lambda_balance"),
        None if mult.get("mu_firm") is None else np.asarray(mult["mu_firm"], dtype=float),
        None if mult.get("nu_transport") is None else np.asarray(mult["nu_transport"], dtype=float),
    )


def two_node_game(c1=Fraction(1, 2), c2=Fraction(1, 4), alpha=1, beta=1, capacity=Fraction(1, 2)) -> GameInstance:
    """Two markets, one linear-cost firm each, joined by a single capacitated line."""
    return GameInstance(
        (MarketSpec(alpha, beta), MarketSpec(alpha, beta)),
        (FirmSpec(0, CostFn(c1, 0)), FirmSpec(1, CostFn(c2, 0))),
        TransportSet.line_box(capacity),
    )


def homogeneous_game(costs: Sequence, alpha, beta, transport: TransportSet | None = None) -> GameInstance:
    """One linear-cost firm per market, identical demand in every market."""
    n = len(costs)
    return GameInstance(
        tuple(MarketSpec(alpha, beta) for _ in range(n)),
        tuple(FirmSpec(i, CostFn(c, 0)) for i, c in enumerate(costs)),
        transport or TransportSet.unconstrained(),
    )


def as_float_tuple(values: Iterable) -> tuple:
    return tuple(float(v) for v in values)
