"""Choosing the market-maker weights: feasibility, grid search, and the MPEC.

The admissible weights form a polygon on the simplex with a strict margin
``epsilon`` inside the uniqueness region, so every grid point has exactly one
equilibrium and the equilibrium is a QP solution. The MPEC (maximize a
polynomial objective over weights subject to the KKT system of the potential
program) is assembled as a polynomial program for the sos module.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from numbers import Rational

import numpy as np
from scipy.optimize import linprog, nnls

from .equilibrium import EquilibriumResult, SolveOptions, solve_potential
from .model import Allocation, DesignParams, GameInstance, potential, potential_gradient, potential_quadratic
from .polynomial import Poly
from .polytope import ProjectedPolytope, project_polytope
from .qp import solve_qp, try_working_set
from .regions import gamma_exact

DEFAULT_RESOLUTION = 200


class EmptyFeasibleGrid(ValueError):
    pass


class NoSlaterPoint(ValueError):
    pass


def _frac(x) -> Fraction:
    if isinstance(x, Rational):
        return Fraction(x)
    return Fraction(repr(float(x)))


# --- objective ---------------------------------------------------------------


@dataclass(frozen=True)
class DesignObjective:
    """Polynomial g(q, r); exponents index the variables (q_1..q_F, r_1..r_M)."""

    n_firms: int
    n_markets: int
    terms: tuple
    name: str = "custom"

    def __post_init__(self):
        n = self.n_firms + self.n_markets
        for c, e in self.terms:
            if len(e) != n or any(v < 0 for v in e):
                raise ValueError(f"bad exponent vector {e}")
            if not np.isfinite(c):
                raise ValueError("objective coefficients must be finite")

    @classmethod
    def social_welfare(cls, game: GameInstance) -> "DesignObjective":
        """Sum of consumer, producer and merchandising surplus.

        With demand d = r + Q the three surpluses add up to
        sum_m (alpha d - beta d^2 / 2) - sum_f cost_f(q_f).
        """
        nf, nm = game.n_firms, game.n_markets
        n = nf + nm
        x = [Poly.var(n, i) for i in range(n)]
        w = Poly(n)
        for m, mk in enumerate(game.markets):
            d = x[nf + m] + sum((x[f] for f in game.firms_in(m)), Poly(n))
            w = w + float(mk.alpha) * d - 0.5 * float(mk.beta) * d * d
        for f, firm in enumerate(game.firms):
            w = w - float(firm.cost.c_lin) * x[f] - 0.5 * float(firm.cost.c_quad) * x[f] * x[f]
        return cls(nf, nm, tuple((c, tuple(e)) for c, e in w.to_terms()), "sw")

    @classmethod
    def from_poly(cls, game: GameInstance, p: Poly, name: str = "custom") -> "DesignObjective":
        return cls(game.n_firms, game.n_markets, tuple((c, tuple(e)) for c, e in p.to_terms()), name)

    def poly(self) -> Poly:
        return Poly.from_terms(self.n_firms + self.n_markets, self.terms)

    def evaluate(self, q, r) -> float:
        return self.poly()(np.concatenate([np.asarray(q, float), np.asarray(r, float)]))

    def quadratic(self):
        """(Q, l, c0) with g(x) = x'Qx/2 + l'x + c0, or None if the degree exceeds 2."""
        n = self.n_firms + self.n_markets
        Q, l, c0 = np.zeros((n, n)), np.zeros(n), 0.0
        for c, e in self.terms:
            deg = sum(e)
            idx = [i for i, v in enumerate(e) for _ in range(v)]
            if deg == 0:
                c0 += c
            elif deg == 1:
                l[idx[0]] += c
            elif deg == 2:
                i, j = idx
                if i == j:
                    Q[i, i] += 2 * c
                else:
                    Q[i, j] += c
                    Q[j, i] += c
            else:
                return None
        return Q, l, c0


def objective_by_name(game: GameInstance, name: str) -> DesignObjective:
    if name.lower() in ("sw", "social_welfare", "welfare"):
        return DesignObjective.social_welfare(game)
    raise ValueError(f"unknown objective {name!r}; only 'sw' is built in")


# --- admissible weights -------------------------------------------------------


@dataclass(frozen=True)
class ThetaEps:
    epsilon: Rational
    gamma: Rational

    def __post_init__(self):
        object.__setattr__(self, "epsilon", _frac(self.epsilon))
        object.__setattr__(self, "gamma", _frac(self.gamma))
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")

    @classmethod
    def for_game(cls, game: GameInstance, epsilon) -> "ThetaEps":
        return cls(_frac(epsilon), gamma_exact(game))

    def rows(self):
        """Inequalities a . theta >= c describing the set besides the simplex equality."""
        g, e = self.gamma, self.epsilon
        # theta = (C, P, M): t = 2M - C, s = M + P - C
        t = (Fraction(-1), Fraction(0), Fraction(2))
        s = (Fraction(-1), Fraction(1), Fraction(1))
        return [
            ((1, 0, 0), 0),
            ((0, 1, 0), 0),
            ((0, 0, 1), 0),
            (tuple(ti - g * si for ti, si in zip(t, s)), e),
            (tuple(g * si for si in s), g * e),
        ]

    def vertices(self) -> list[tuple]:
        """Vertices of the admissible polygon, as exact rational triples."""
        rows = self.rows()
        out: list[tuple] = []
        for (a1, c1), (a2, c2) in combinations(rows, 2):
            M = [list(map(Fraction, a1)), list(map(Fraction, a2)), [Fraction(1)] * 3]
            rhs = [Fraction(c1), Fraction(c2), Fraction(1)]
            sol = _solve3(M, rhs)
            if sol is None or any(v < 0 for v in sol):
                continue
            if self.contains(DesignParams(*sol)) and sol not in out:
                out.append(sol)
        return sorted(out)

    def contains(self, theta: DesignParams) -> bool:
        return theta_eps_contains(self, theta)


def _solve3(M, rhs):
    """Exact 3x3 solve by Gaussian elimination; None if singular."""
    A = [row[:] + [r] for row, r in zip(M, rhs)]
    for col in range(3):
        piv = next((i for i in range(col, 3) if A[i][col] != 0), None)
        if piv is None:
            return None
        A[col], A[piv] = A[piv], A[col]
        for i in range(3):
            if i != col and A[i][col] != 0:
                f = A[i][col] / A[col][col]
                A[i] = [a - f * b for a, b in zip(A[i], A[col])]
    return tuple(A[i][3] / A[i][i] for i in range(3))


def theta_eps_contains(te: ThetaEps, theta: DesignParams) -> bool:
    th = [_frac(v) for v in theta.as_tuple()]
    if any(v < 0 for v in th):
        return False
    if sum(th) != 1:
        # float triples that are decimally on the simplex pass through _frac exactly
        return False
    tc, tp, tm = th
    t = 2 * tm - tc
    s = tm + tp - tc
    mid = te.epsilon + te.gamma * s
    return t >= mid and mid >= (1 + te.gamma) * te.epsilon


def feasible_grid(te: ThetaEps, resolution: int) -> np.ndarray:
    """Integer triples (i, j, k), i + j + k = resolution, with (i, j, k)/resolution admissible.

    Both inequalities are multiplied through by resolution and the common
    denominator of epsilon and gamma, then compared in Python integers.
    """
    N = resolution
    i, j = np.meshgrid(np.arange(N + 1), np.arange(N + 1), indexing="ij")
    mask = i + j <= N
    i, j = i[mask], j[mask]
    k = N - i - j
    D = te.epsilon.denominator * te.gamma.denominator
    E = int(te.epsilon * D)
    G = int(te.gamma * D)
    t = (2 * k - i).astype(object)
    s = (k + j - i).astype(object)
    ok1 = D * t >= E * N + G * s
    ok2 = D * G * s >= G * E * N
    sel = np.asarray(ok1 & ok2, dtype=bool)
    return np.stack([i[sel], j[sel], k[sel]], axis=1)


# --- grid search --------------------------------------------------------------


@dataclass(frozen=True)
class _ScanSpec:
    """Everything a worker needs; the potential program is affine in theta."""

    H_basis: tuple
    c_basis: tuple
    E: np.ndarray
    e: np.ndarray
    G: np.ndarray
    h: np.ndarray
    n_firms: int
    n_markets: int
    has_r: bool
    objective: DesignObjective
    resolution: int


def _scan_spec(game: GameInstance, g: DesignObjective, resolution: int) -> _ScanSpec:
    from .equilibrium import _program

    Hs, cs = [], []
    prog = None
    for unit in ((1, 0, 0), (0, 1, 0), (0, 0, 1)):
        prog = _program(game, DesignParams(*unit))
        Hs.append(prog.H)
        cs.append(prog.c)
    return _ScanSpec(tuple(Hs), tuple(cs), prog.E, prog.e, prog.G, prog.h,
                     game.n_firms, game.n_markets, prog.has_r, g, resolution)


def _scan(spec: _ScanSpec, triples: np.ndarray):
    """Objective value at the equilibrium of every grid triple, warm-starting along the list."""
    quad = spec.objective.quadratic()
    poly = None if quad is not None else spec.objective.poly()
    out = np.empty(len(triples))
    ws: tuple | None = None
    cold = 0
    nf = spec.n_firms
    for idx, (i, j, k) in enumerate(triples):
        w = np.array([i, j, k], dtype=float) / spec.resolution
        H = w[0] * spec.H_basis[0] + w[1] * spec.H_basis[1] + w[2] * spec.H_basis[2]
        c = w[0] * spec.c_basis[0] + w[1] * spec.c_basis[1] + w[2] * spec.c_basis[2]
        res = None
        if ws is not None:
            res = try_working_set(H, c, spec.E, spec.e, spec.G, spec.h, ws)
        if res is None:
            cold += 1
            res = solve_qp(H, c, spec.E, spec.e, spec.G, spec.h, working_set=ws or ())
        ws = res.working_set
        x = res.x if spec.has_r else np.concatenate([res.x, np.zeros(spec.n_markets)])
        x[:nf] = np.maximum(x[:nf], 0.0)
        if quad is not None:
            Q, l, c0 = quad
            out[idx] = 0.5 * x @ Q @ x + l @ x + c0
        else:
            out[idx] = poly(x)
    return out, cold


@dataclass
class GridSearchResult:
    theta_max: DesignParams
    g_value: float
    equilibrium: EquilibriumResult
    resolution: int
    triples: np.ndarray
    values: np.ndarray
    cold_starts: int = 0
    baseline_sw: float | None = None

    @property
    def n_feasible(self) -> int:
        return len(self.triples)

    def rows(self):
        N = self.resolution
        for (i, j, k), v in zip(self.triples, self.values):
            yield i / N, j / N, k / N, float(v)


def thread_count(requested: int | None = None) -> int:
    """Worker count: the request, capped by CNET_THREADS and the CPU count."""
    cap = os.environ.get("CNET_THREADS")
    n = requested or os.cpu_count() or 1
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            raise ValueError(f"CNET_THREADS must be an integer, got {cap!r}") from None
    return max(1, n)


def grid_search(
    game: GameInstance,
    g: DesignObjective,
    te: ThetaEps,
    resolution: int = DEFAULT_RESOLUTION,
    threads: int | None = None,
    opts: SolveOptions | None = None,
) -> GridSearchResult:
    """Maximize g at equilibrium over the admissible points of a barycentric grid.

    Workers each take a contiguous slice of the lexicographically ordered grid,
    so results do not depend on scheduling; the argmax keeps the first
    (lexicographically smallest) maximizer.
    """
    if resolution < 1:
        raise ValueError("resolution must be positive")
    triples = feasible_grid(te, resolution)
    if len(triples) == 0:
        raise EmptyFeasibleGrid(f"no admissible grid point at resolution {resolution}")
    spec = _scan_spec(game, g, resolution)
    n = min(thread_count(threads), len(triples))
    if n == 1:
        values, cold = _scan(spec, triples)
    else:
        chunks = np.array_split(triples, n)
        with ProcessPoolExecutor(max_workers=n) as pool:
            parts = list(pool.map(_scan, [spec] * n, chunks))
        values = np.concatenate([p[0] for p in parts])
        cold = sum(p[1] for p in parts)
    best = int(np.argmax(values))
    i, j, k = (int(v) for v in triples[best])
    theta = DesignParams(Fraction(i, resolution), Fraction(j, resolution), Fraction(k, resolution))
    opts = opts or SolveOptions()
    eq = solve_potential(game, theta, opts)
    value = g.evaluate(eq.allocation.q, eq.allocation.r)

    baseline = None
    sw = DesignParams(Fraction(1, 3), Fraction(1, 3), Fraction(1, 3))
    if te.contains(sw):
        base_eq = solve_potential(game, sw, SolveOptions(verify=False))
        baseline = g.evaluate(base_eq.allocation.q, base_eq.allocation.r)
    return GridSearchResult(theta, value, eq, resolution, triples, values, cold, baseline)


# --- MPEC as a polynomial program ---------------------------------------------


@dataclass
class PolyProgram:
    """maximize objective(z) s.t. every inequality poly >= 0 and every equality poly == 0.

    The last inequality is the ball radius**2 - |z|^2 >= 0.
    """

    variables: tuple
    objective: Poly
    inequalities: list
    equalities: list
    radius: float
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.variables)

    @property
    def max_degree(self) -> int:
        polys = [self.objective] + [p for _, p in self.inequalities] + [p for _, p in self.equalities]
        return max(p.degree for p in polys)

    def residuals(self, z) -> dict:
        z = np.asarray(z, dtype=float)
        ineq = min((p(z) for _, p in self.inequalities), default=0.0)
        eq = max((abs(p(z)) for _, p in self.equalities), default=0.0)
        return {"min_inequality": float(ineq), "max_equality": float(eq)}

    def to_dict(self) -> dict:
        return {
            "variables": list(self.variables),
            "objective": self.objective.to_terms(),
            "inequalities": [{"name": nm, "terms": p.to_terms()} for nm, p in self.inequalities],
            "equalities": [{"name": nm, "terms": p.to_terms()} for nm, p in self.equalities],
            "radius": self.radius,
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "PolyProgram":
        n = len(doc["variables"])
        return cls(
            tuple(doc["variables"]),
            Poly.from_terms(n, doc["objective"]),
            [(c["name"], Poly.from_terms(n, c["terms"])) for c in doc["inequalities"]],
            [(c["name"], Poly.from_terms(n, c["terms"])) for c in doc.get("equalities", [])],
            float(doc["radius"]),
            doc.get("meta", {}),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)


@dataclass(frozen=True)
class _Layout:
    nf: int
    k: int
    nj: int

    @property
    def n(self) -> int:
        return 2 * self.nf + self.k + self.nj + 3

    def q(self, f):
        return f

    def rh(self, i):
        return self.nf + i

    def nu(self, j):
        return self.nf + self.k + j

    def mu(self, f):
        return self.nf + self.k + self.nj + f

    def th(self, i):
        return 2 * self.nf + self.k + self.nj + i


def _bounds_box(proj: ProjectedPolytope) -> np.ndarray:
    """max |r_hat_i| over the reduced polytope, per coordinate."""
    k = proj.dim
    out = np.zeros(k)
    for i in range(k):
        for sign in (1.0, -1.0):
            c = np.zeros(k)
            c[i] = -sign
            res = linprog(c, A_ub=proj.A_hat, b_ub=proj.b_hat, bounds=[(None, None)] * k, method="highs")
            if res.status != 0:
                raise NoSlaterPoint("reduced transport polytope is unbounded")
            out[i] = max(out[i], abs(res.x[i]))
    return out


def build_mpec(game: GameInstance, g: DesignObjective, te: ThetaEps) -> PolyProgram:
    """Polynomial program over z = (q, r_hat, nu, mu, theta) whose optimum is the best design.

    Balance of r is built into the reduced coordinates r_hat, so no multiplier
    for it appears. The inner program has a Slater point at q = qbar/2 and the
    Chebyshev center of the reduced polytope; the multiplier budget is twice
    the resulting bound, maximized over the vertices of the admissible weights
    (the bound is convex in theta).
    """
    tr = game.transport
    if tr.kind != "polytope":
        raise NoSlaterPoint(f"{tr.kind} transport has no compact full-dimensional reduction")
    proj = project_polytope(tr, game.n_markets)
    if proj.dim == 0 or proj.interior_radius <= 1e-9:
        raise NoSlaterPoint("balanced transport set has no interior")
    nf, nm = game.n_firms, game.n_markets
    k, nj = proj.dim, proj.A_hat.shape[0]
    L = _Layout(nf, k, nj)
    n = L.n
    var = [Poly.var(n, i) for i in range(n)]

    q = [var[L.q(f)] for f in range(nf)]
    rh = [var[L.rh(i)] for i in range(k)]
    r = [sum((float(proj.T[m, i]) * rh[i] for i in range(k)), Poly.const(n, float(proj.t[m]))) for m in range(nm)]
    x = q + r
    th = [var[L.th(i)] for i in range(3)]

    grad = [Poly(n) for _ in range(nf + nm)]
    for i, unit in enumerate(((1, 0, 0), (0, 1, 0), (0, 0, 1))):
        P, p = potential_quadratic(game, DesignParams(*unit))
        for a in range(nf + nm):
            row = sum((float(P[a, b]) * x[b] for b in range(nf + nm) if P[a, b]), Poly.const(n, float(p[a])))
            grad[a] = grad[a] + th[i] * row

    eqs: list = []
    for f in range(nf):
        eqs.append((f"stat_q{f}", grad[f] + var[L.mu(f)]))
    for i in range(k):
        expr = sum((float(proj.T[m, i]) * grad[nf + m] for m in range(nm)), Poly(n))
        expr = expr - sum((float(proj.A_hat[j, i]) * var[L.nu(j)] for j in range(nj)), Poly(n))
        eqs.append((f"stat_rhat{i}", expr))
    slack_rows = [
        Poly.const(n, float(proj.b_hat[j])) - sum((float(proj.A_hat[j, i]) * rh[i] for i in range(k)), Poly(n))
        for j in range(nj)
    ]
    for f in range(nf):
        eqs.append((f"comp_q{f}", var[L.mu(f)] * q[f]))
    for j in range(nj):
        eqs.append((f"comp_row{j}", var[L.nu(j)] * slack_rows[j]))
    eqs.append(("simplex", th[0] + th[1] + th[2] - 1.0))

    # bounds used for the box, the budget and the ball
    rbar = np.zeros(nm)
    rh_box = _bounds_box(proj)
    for m in range(nm):
        rbar[m] = float(np.abs(proj.T[m]) @ rh_box + abs(proj.t[m]))
    alpha, beta = game.alpha, game.beta
    qbar = 0.5 * max(alpha[fm.market_id] / beta[fm.market_id] + rbar[fm.market_id] for fm in game.firms)

    center = proj.interior_point
    slack = min(qbar / 2, float(np.min(proj.b_hat - proj.A_hat @ center)))
    if slack <= 0:
        raise NoSlaterPoint("no strictly feasible point for the inner program")
    xbar = Allocation(np.full(nf, qbar / 2), proj.lift(center))
    worst = 0.0
    for v in te.vertices():
        theta_v = DesignParams(*v)
        eq = solve_potential(game, theta_v, SolveOptions(verify=False))
        worst = max(worst, eq.potential_value - potential(game, xbar, theta_v))
    budget = 2.0 * worst / slack

    ineqs: list = []
    for f in range(nf):
        ineqs.append((f"q{f}>=0", q[f]))
    for f in range(nf):
        ineqs.append((f"q{f}<=qbar", Poly.const(n, qbar) - q[f]))
    for f in range(nf):
        ineqs.append((f"mu{f}>=0", var[L.mu(f)]))
    for j in range(nj):
        ineqs.append((f"nu{j}>=0", var[L.nu(j)]))
    for j in range(nj):
        ineqs.append((f"row{j}", slack_rows[j]))
    for idx, (a, c) in enumerate(te.rows()):
        ineqs.append((f"theta_row{idx}", sum((float(a[i]) * th[i] for i in range(3)), Poly.const(n, -float(c)))))
    ineqs.append(("multiplier_budget", Poly.const(n, budget)
                  - sum((var[L.mu(f)] for f in range(nf)), Poly(n))
                  - sum((var[L.nu(j)] for j in range(nj)), Poly(n))))
    norm_bound = float(np.sqrt(nf * qbar**2 + rh_box @ rh_box + budget**2 + 1.0))
    Z = 2.0 * norm_bound
    ineqs.append(("ball", Poly.const(n, Z**2) - sum((v * v for v in var), Poly(n))))

    objective = g.poly().compose(x)
    names = (
        [f"q{f}" for f in range(nf)] + [f"rhat{i}" for i in range(k)]
        + [f"nu{j}" for j in range(nj)] + [f"mu{f}" for f in range(nf)]
        + ["theta_c", "theta_p", "theta_m"]
    )
    meta = {
        "qbar": qbar,
        "multiplier_budget": budget,
        "slater_slack": slack,
        "slater_rhat": center.tolist(),
        "epsilon": float(te.epsilon),
        "gamma": float(te.gamma),
        "lift_T": proj.T.tolist(),
        "lift_t": proj.t.tolist(),
        "A_hat": proj.A_hat.tolist(),
        "b_hat": proj.b_hat.tolist(),
        "layout": {"n_firms": nf, "n_rhat": k, "n_rows": nj},
    }
    return PolyProgram(tuple(names), objective, ineqs, eqs, Z, meta)


def embed_equilibrium(pp: PolyProgram, game: GameInstance, result: EquilibriumResult, theta: DesignParams) -> np.ndarray:
    """The point z of the polynomial program corresponding to an equilibrium and its multipliers."""
    lay = pp.meta["layout"]
    nf, k, nj = lay["n_firms"], lay["n_rhat"], lay["n_rows"]
    T = np.array(pp.meta["lift_T"]).reshape(game.n_markets, k)
    t = np.array(pp.meta["lift_t"])
    A_hat = np.array(pp.meta["A_hat"]).reshape(nj, k)
    b_hat = np.array(pp.meta["b_hat"])
    alloc = result.allocation
    rh = np.linalg.lstsq(T, alloc.r - t, rcond=None)[0]
    _, gr = potential_gradient(game, alloc, theta)
    active = np.abs(b_hat - A_hat @ rh) <= 1e-9
    nu = np.zeros(nj)
    if active.any():
        nu_act, _ = nnls(A_hat[active].T, T.T @ gr)
        nu[active] = nu_act
    mu = alloc.mu_firm if alloc.mu_firm is not None else np.zeros(nf)
    th = np.array([float(v) for v in theta.as_tuple()])
    return np.concatenate([alloc.q, rh, nu, mu, th])
