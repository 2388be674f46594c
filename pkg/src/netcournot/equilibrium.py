"""Equilibrium computation through the potential program, plus best-response tools.

Inside the uniqueness region the Nash equilibria coincide with the maximizers
of the concave quadratic potential over the joint strategy set, so a single
QP solve yields the equilibrium together with its KKT multipliers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import (
    Allocation,
    DesignParams,
    GameInstance,
    SurplusBreakdown,
    allocation_to_dict,
    firm_profit,
    market_output,
    mm_payoff,
    potential,
    potential_gradient,
    potential_quadratic,
    surplus_breakdown,
    validate_allocation,
    zero_allocation,
)
from .polytope import enumerate_vertices, project_polytope
from .qp import QPError, QPMaxIterations, QPUnbounded, solve_qp, try_working_set
from .regions import RegionReport, classify


class SolverError(Exception):
    pass


class RegionNotCovered(SolverError):
    pass


class Unbounded(SolverError):
    pass


class MaxIterations(SolverError):
    pass


class NonConcaveObjective(SolverError):
    pass


@dataclass(frozen=True)
class SolveOptions:
    kkt_tolerance: float = 1e-9
    max_active_set_iterations: int | None = None
    br_deviation_tolerance: float = 1e-7
    verify: bool = True

    def __post_init__(self):
        if self.kkt_tolerance <= 0 or self.br_deviation_tolerance <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_active_set_iterations is not None and self.max_active_set_iterations <= 0:
            raise ValueError("max_active_set_iterations must be positive")


@dataclass
class EquilibriumResult:
    allocation: Allocation
    potential_value: float
    welfare: float
    breakdown: SurplusBreakdown
    region: RegionReport
    verified: bool
    max_deviation_gain: float = float("nan")
    kkt_residual: float = float("nan")
    possibly_multiple: bool = False
    working_set: tuple = ()
    iterations: int = 0

    def to_dict(self) -> dict:
        return {
            "allocation": allocation_to_dict(self.allocation, self.breakdown),
            "potential_value": self.potential_value,
            "welfare": self.welfare,
            "region": self.region.to_dict(),
            "verified": self.verified,
            "max_deviation_gain": self.max_deviation_gain,
            "kkt_residual": self.kkt_residual,
            "possibly_multiple": self.possibly_multiple,
            "iterations": self.iterations,
        }


@dataclass(frozen=True)
class _Program:
    """min x'Hx/2 + c'x over x = (q, r) with E x = e, G x <= h.

    Rows of G are -q_f <= 0 for every firm followed by the transport rows.
    With zero transport r is dropped from x altogether.
    """

    H: np.ndarray
    c: np.ndarray
    E: np.ndarray
    e: np.ndarray
    G: np.ndarray
    h: np.ndarray
    n_firms: int
    has_r: bool


def _program(game: GameInstance, theta: DesignParams) -> _Program:
    P, p = potential_quadratic(game, theta)
    nf, nm = game.n_firms, game.n_markets
    tr = game.transport
    has_r = tr.kind != "zero"
    n = nf + nm if has_r else nf
    H, c = -P[:n, :n], -p[:n]
    G = [np.hstack([-np.eye(nf), np.zeros((nf, n - nf))])]
    h = [np.zeros(nf)]
    if tr.kind == "polytope" and tr.A:
        G.append(np.hstack([np.zeros((len(tr.A), nf)), tr.A_array]))
        h.append(tr.b_array)
    if has_r:
        E = np.concatenate([np.zeros(nf), np.ones(nm)])[None, :]
        e = np.zeros(1)
    else:
        E, e = np.zeros((0, n)), np.zeros(0)
    return _Program(H, c, E, e, np.vstack(G), np.concatenate(h), nf, has_r)


def _allocation_from_qp(game: GameInstance, prog: _Program, x, lam, nu) -> Allocation:
    nf = prog.n_firms
    q = np.maximum(x[:nf], 0.0)
    r = x[nf:] if prog.has_r else np.zeros(game.n_markets)
    return Allocation(
        q,
        r,
        float(lam[0]) if len(lam) else 0.0,
        nu[:nf],
        nu[nf:],
    )


def kkt_residuals(game: GameInstance, alloc: Allocation, theta: DesignParams) -> dict:
    """Residuals of the optimality system of the potential program at alloc.

    Stationarity uses grad_q + mu = 0 and grad_r - lambda*1 - A'nu = 0; for
    zero transport the r-block is absent.
    """
    gq, gr = potential_gradient(game, alloc, theta)
    mu = alloc.mu_firm if alloc.mu_firm is not None else np.zeros(game.n_firms)
    lam = alloc.lambda_balance or 0.0
    tr = game.transport
    stat = np.abs(gq + mu).max()
    comp = np.abs(mu * alloc.q).max()
    dual = max(0.0, -mu.min())
    if tr.kind != "zero":
        nu = alloc.nu_transport if alloc.nu_transport is not None else np.zeros(0)
        g_r = gr - lam
        if tr.kind == "polytope" and tr.A:
            A = tr.A_array
            if nu.size == 0:
                nu = np.zeros(A.shape[0])
            g_r = g_r - A.T @ nu
            comp = max(comp, np.abs(nu * (tr.b_array - A @ alloc.r)).max())
            dual = max(dual, -nu.min())
        stat = max(stat, np.abs(g_r).max())
    return {"stationarity": float(stat), "complementarity": float(comp), "dual_sign": float(dual)}


def solve_potential(
    game: GameInstance,
    theta: DesignParams,
    opts: SolveOptions | None = None,
    warm_start: tuple | None = None,
    region: RegionReport | None = None,
) -> EquilibriumResult:
    """Equilibrium as the maximizer of the potential over the joint strategy set.

    Args:
        warm_start: working set (indices of active inequality rows) from a nearby
            solve. It is first tried as a direct guess, then used to seed the
            active-set loop.
        region: precomputed classification, to skip the compactness LPs.

    Raises:
        RegionNotCovered: theta is outside the region where equilibria and
            potential maximizers coincide.
        Unbounded: the potential has no maximizer (unbounded transport on the
            non-strict boundary).
        MaxIterations: the active-set loop did not terminate.
    """
    opts = opts or SolveOptions()
    rep = region or classify(game, theta)
    if not (rep.equilibria_equal_optimizers or rep.potential_concave):
        raise RegionNotCovered(
            "design weights are outside the region where equilibria are potential maximizers"
        )
    prog = _program(game, theta)
    res = None
    if warm_start is not None:
        res = try_working_set(prog.H, prog.c, prog.E, prog.e, prog.G, prog.h, warm_start)
    if res is None:
        try:
            res = solve_qp(
                prog.H, prog.c, prog.E, prog.e, prog.G, prog.h,
                working_set=warm_start or (),
                max_iter=opts.max_active_set_iterations,
            )
        except QPUnbounded as exc:
            raise Unbounded(str(exc)) from None
        except QPMaxIterations as exc:
            raise MaxIterations(str(exc)) from None
        except QPError as exc:
            raise SolverError(str(exc)) from None
    alloc = _allocation_from_qp(game, prog, res.x, res.eq_multipliers, res.ineq_multipliers)
    resid = kkt_residuals(game, alloc, theta)
    scale = max(1.0, np.abs(prog.c).max(), np.abs(prog.H).max())
    curv = res.reduced_min_curvature
    multiple = bool(np.isfinite(curv) and curv <= 1e-10 * scale)
    sb = surplus_breakdown(game, alloc)
    verified, gain = False, float("nan")
    if opts.verify:
        verified, gain = verify_nash(game, alloc, theta, opts)
    return EquilibriumResult(
        allocation=alloc,
        potential_value=potential(game, alloc, theta),
        welfare=sb.welfare,
        breakdown=sb,
        region=rep,
        verified=verified,
        max_deviation_gain=gain,
        kkt_residual=max(resid.values()),
        possibly_multiple=multiple,
        working_set=res.working_set,
        iterations=res.iterations,
    )


def best_response_firm(game: GameInstance, alloc: Allocation, f: int) -> float:
    if not 0 <= f < game.n_firms:
        raise IndexError(f"firm index {f} out of range for {game.n_firms} firms")
    firm = game.firms[f]
    m = firm.market_id
    alpha = float(game.markets[m].alpha)
    beta = float(game.markets[m].beta)
    others = alloc.q[game.firms_in(m)].sum() - alloc.q[f]
    num = alpha - beta * (alloc.r[m] + others) - float(firm.cost.c_lin)
    return max(0.0, num / (2 * beta + float(firm.cost.c_quad)))


def _mm_program(game: GameInstance, q, theta: DesignParams):
    """Market-maker payoff in r as min r'Hr/2 + c'r (sign flipped)."""
    tc, tp, tm = (float(v) for v in theta.as_tuple())
    alpha, beta = game.alpha, game.beta
    Q = market_output(game, q)
    lin = beta * Q * (tc - tp - tm) + tm * alpha
    H = np.diag((2 * tm - tc) * beta)
    return H, -lin


def best_response_mm(game: GameInstance, alloc: Allocation, theta: DesignParams, opts: SolveOptions | None = None) -> np.ndarray:
    """Maximizer of the market-maker payoff over balanced feasible r, with q held fixed.

    The solve is warm-started at the current r when feasible, so when the
    maximizer is not unique the current r is kept if it is optimal.
    """
    if theta.concavity < 0:
        raise NonConcaveObjective("market-maker payoff is convex in r (2 theta_M < theta_C)")
    tr = game.transport
    nm = game.n_markets
    if tr.kind == "zero":
        return np.zeros(nm)
    H, c = _mm_program(game, alloc.q, theta)
    E, e = np.ones((1, nm)), np.zeros(1)
    G = tr.A_array if tr.kind == "polytope" and tr.A else np.zeros((0, nm))
    h = tr.b_array if G.shape[0] else np.zeros(0)
    x0 = alloc.r.copy()
    if abs(x0.sum()) > 1e-12 or (G.shape[0] and (G @ x0 - h).max() > 1e-12):
        x0 = np.zeros(nm)
    ws = tuple(j for j in range(G.shape[0]) if abs(G[j] @ x0 - h[j]) <= 1e-12)
    try:
        res = solve_qp(H, c, E, e, G, h, x0=x0, working_set=ws,
                       max_iter=(opts.max_active_set_iterations if opts else None))
    except QPUnbounded as exc:
        raise Unbounded(str(exc)) from None
    except QPMaxIterations as exc:
        raise MaxIterations(str(exc)) from None
    return res.x


def _mm_best_value_convex(game: GameInstance, alloc: Allocation, theta: DesignParams) -> float:
    tr = game.transport
    if tr.kind == "zero":
        return mm_payoff(game, alloc, theta)
    if tr.kind == "unconstrained":
        return float("inf")
    verts = enumerate_vertices(project_polytope(tr, game.n_markets))
    return max(mm_payoff(game, alloc.with_r(v), theta) for v in verts)


def verify_nash(game: GameInstance, alloc: Allocation, theta: DesignParams, opts: SolveOptions | None = None):
    """Check every unilateral deviation.

    Returns (ok, max_gain). Firm deviations use the closed-form best response;
    the market maker uses the QP core when its payoff is concave in r and
    otherwise the vertices of the balanced transport polytope, where a convex
    payoff attains its maximum.
    """
    opts = opts or SolveOptions()
    try:
        validate_allocation(game, alloc)
    except ValueError:
        return False, float("inf")
    gains = []
    for f in range(game.n_firms):
        best = alloc.with_q(f, best_response_firm(game, alloc, f))
        gains.append(firm_profit(game, best, f) - firm_profit(game, alloc, f))
    current = mm_payoff(game, alloc, theta)
    if theta.concavity >= 0:
        try:
            r_star = best_response_mm(game, alloc, theta, opts)
            gains.append(mm_payoff(game, alloc.with_r(r_star), theta) - current)
        except Unbounded:
            gains.append(float("inf"))
    else:
        gains.append(_mm_best_value_convex(game, alloc, theta) - current)
    gain = max(0.0, max(gains))
    return bool(gain <= opts.br_deviation_tolerance), float(gain)


@dataclass
class DynamicsResult:
    """Outcome of round-robin best responses.

    ``trajectory`` holds the profile at the end of every round, starting with
    the initial profile. ``steps`` holds (round, mover, profile, potential) after
    every single move; the mover is a firm index or "mm". For a Cycle verdict,
    ``cycle`` lists the profiles seen right after the firms moved, one per round
    of the cycle.
    """

    verdict: str
    rounds: int
    trajectory: list = field(default_factory=list)
    potentials: list = field(default_factory=list)
    steps: list = field(default_factory=list)
    cycle: list = field(default_factory=list)


def _state_key(alloc: Allocation) -> tuple:
    return tuple(np.round(np.concatenate([alloc.q, alloc.r]) / 1e-9).astype(np.int64).tolist())


def best_response_dynamics(
    game: GameInstance,
    theta: DesignParams,
    init: Allocation | None = None,
    max_rounds: int = 200,
    opts: SolveOptions | None = None,
) -> DynamicsResult:
    """Firms best-respond in index order, then the market maker, once per round."""
    opts = opts or SolveOptions()
    if theta.concavity < 0:
        raise NonConcaveObjective("market-maker best response is undefined when its payoff is convex in r")
    cur = init if init is not None else zero_allocation(game)
    cur = Allocation(cur.q, cur.r)
    out = DynamicsResult("MaxRounds", 0, [cur], [potential(game, cur, theta)])
    seen = {_state_key(cur): 0}
    after_firms = []
    for k in range(1, max_rounds + 1):
        for f in range(game.n_firms):
            cur = cur.with_q(f, best_response_firm(game, cur, f))
            out.steps.append((k, f, cur, potential(game, cur, theta)))
        after_firms.append(cur)
        cur = cur.with_r(best_response_mm(game, cur, theta, opts))
        out.steps.append((k, "mm", cur, potential(game, cur, theta)))
        prev = out.trajectory[-1]
        out.trajectory.append(cur)
        out.potentials.append(potential(game, cur, theta))
        out.rounds = k
        diff = max(np.abs(cur.q - prev.q).max(), np.abs(cur.r - prev.r).max())
        if diff < opts.br_deviation_tolerance:
            out.verdict = "Converged"
            return out
        key = _state_key(cur)
        if key in seen:
            out.verdict = "Cycle"
            out.cycle = after_firms[seen[key]:]
            return out
        seen[key] = k
    return out
