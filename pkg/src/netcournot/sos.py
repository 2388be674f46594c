"""Sum-of-squares upper bounds for polynomial programs.

For a program  max g(z)  s.t.  h_i(z) >= 0,  e_j(z) = 0  the level-d bound is

    min t  s.t.  t - g = sigma_0 + sum_i sigma_i h_i + sum_j p_j e_j,

with sigma's SOS (Gram matrices over monomial bases) and p_j free polynomials.
Matching coefficients of every monomial of degree <= 2d gives a block SDP.
The free coefficients (t and the p_j) are eliminated through the null space of
their coefficient matrix, which leaves a pure standard-form SDP.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .design import DesignObjective, PolyProgram, ThetaEps, build_mpec, grid_search
from .polynomial import Poly, monomials
from .sdp import BlockSdp, NumericalFailure, SdpSolution, solve_block_sdp

MAX_COEFFICIENT_CONSTRAINTS = 5000
# accepted when the solver stalls before reaching the requested tolerance
INACCURATE_TOLERANCE = 1e-6

__all__ = [
    "DegreeTooLow",
    "MonomialBasis",
    "NotConverged",
    "NumericalFailure",
    "SdpProblem",
    "SosCertificate",
    "SosTooLarge",
    "check_certificate",
    "optimality_gap",
    "sdp_solve",
    "sos_bound",
    "sos_relaxation",
]


class DegreeTooLow(ValueError):
    pass


class SosTooLarge(ValueError):
    pass


class NotConverged(RuntimeError):
    """The interior-point method stopped early; ``certificate`` holds the last iterate."""

    def __init__(self, message: str, certificate: "SosCertificate"):
        super().__init__(message)
        self.certificate = certificate


@dataclass(frozen=True)
class MonomialBasis:
    n: int
    d: int
    exponents: tuple

    @classmethod
    def of(cls, n: int, d: int) -> "MonomialBasis":
        return cls(n, d, tuple(monomials(n, d)) if d >= 0 else ())

    def __len__(self) -> int:
        return len(self.exponents)

    def index(self) -> dict:
        return {e: i for i, e in enumerate(self.exponents)}

    def vector(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        return np.array([np.prod(z ** np.array(e)) for e in self.exponents])


def _scale_of(p: Poly) -> float:
    top = max((abs(c) for c in p.terms.values()), default=0.0)
    return 1.0 / top if top > 0 else 1.0


def _shift(e1, e2) -> tuple:
    return tuple(a + b for a, b in zip(e1, e2))


@dataclass
class SdpProblem:
    """Coefficient-matching SDP for one polynomial program and level.

    Row alpha of the system reads
    sum_i <A_i[alpha], X_i> + F[alpha] . u = b[alpha],  u = (t, p coefficients),
    where every polynomial has been rescaled to unit max coefficient.
    """

    level: int
    n_vars: int
    coefficient_basis: MonomialBasis
    block_names: list
    block_bases: list
    block_polys: list
    block_scales: list
    free_names: list
    free_bases: list
    free_polys: list
    free_scales: list
    objective: Poly
    objective_scale: float
    A: list
    F: np.ndarray
    b: np.ndarray

    @property
    def n_constraints(self) -> int:
        return len(self.coefficient_basis)

    @property
    def block_sizes(self) -> list:
        return [len(bb) for bb in self.block_bases]

    def reduce(self):
        """Eliminate the free coefficients.

        Returns (BlockSdp, y0, N, offset): the reduced problem, the vector with
        F'y0 = e_t, the null-space basis of F', and the constant y0'b so that
        t = <C', X> + offset on the affine set.
        """
        m, nu = self.F.shape
        U, s, _ = np.linalg.svd(self.F, full_matrices=True)
        rank = int(np.sum(s > 1e-12 * max(1.0, s[0] if s.size else 0.0)))
        N = U[:, rank:]
        e_t = np.zeros(nu)
        e_t[0] = 1.0
        y0, *_ = np.linalg.lstsq(self.F.T, e_t, rcond=None)
        if np.linalg.norm(self.F.T @ y0 - e_t) > 1e-9:
            raise NumericalFailure("the bound variable is not determined by the coefficient system")
        C = [-np.tensordot(y0, a, axes=(0, 0)) for a in self.A]
        A = [np.tensordot(N.T, a, axes=(1, 0)) for a in self.A]
        return BlockSdp(C, A, N.T @ self.b), y0, N, float(y0 @ self.b)

    def triplets(self) -> str:
        """Reduced SDP as text: header lines, then 'matrix block row col value' per nonzero.

        Matrix 0 is the cost C; matrix k >= 1 is constraint k with right side b[k-1].
        Indices are 1-based; only the upper triangle is listed.
        """
        prob, _, _, offset = self.reduce()
        lines = [
            f"# constraints {prob.m}",
            f"# blocks {' '.join(str(k) for k in prob.sizes)}",
            f"# offset {offset:.17g}",
            "b " + " ".join(f"{v:.17g}" for v in prob.b),
        ]
        mats = [prob.C] + [[a[k] for a in prob.A] for k in range(prob.m)]
        for mi, blocks in enumerate(mats):
            for bi, B in enumerate(blocks):
                rows, cols = np.nonzero(np.triu(np.abs(B) > 1e-15))
                for i, j in zip(rows, cols):
                    lines.append(f"{mi} {bi + 1} {i + 1} {j + 1} {B[i, j]:.17g}")
        return "\n".join(lines) + "\n"


def sos_relaxation(pp: PolyProgram, d: int = 1, allow_high_level: bool = False) -> SdpProblem:
    """Assemble the level-d SOS program for ``pp``.

    Levels above 1 must be requested explicitly with ``allow_high_level``.
    """
    if d < 1:
        raise DegreeTooLow("level must be at least 1")
    if d > 1 and not allow_high_level:
        raise ValueError("levels above 1 need allow_high_level=True")
    if 2 * d < pp.max_degree:
        raise DegreeTooLow(f"2d = {2 * d} is below the program degree {pp.max_degree}")
    n = pp.n
    n_coeff = math.comb(n + 2 * d, 2 * d)
    if n_coeff > MAX_COEFFICIENT_CONSTRAINTS:
        raise SosTooLarge(f"{n_coeff} coefficient constraints exceed the limit {MAX_COEFFICIENT_CONSTRAINTS}")
    cb = MonomialBasis.of(n, 2 * d)
    row = cb.index()
    m = len(cb)

    sg = _scale_of(pp.objective)
    names, bases, polys, scales = ["sigma_0"], [MonomialBasis.of(n, d)], [Poly.const(n, 1.0)], [1.0]
    for name, h in pp.inequalities:
        k = d - math.ceil(h.degree / 2)
        sc = _scale_of(h)
        names.append(name)
        bases.append(MonomialBasis.of(n, k))
        polys.append(h * sc)
        scales.append(sc)

    A = []
    for basis, h in zip(bases, polys):
        k = len(basis)
        blk = np.zeros((m, k, k))
        for a, ea in enumerate(basis.exponents):
            for c, eb in enumerate(basis.exponents[a:], start=a):
                e = _shift(ea, eb)
                for eh, coef in h.terms.items():
                    alpha = row[_shift(e, eh)]
                    blk[alpha, a, c] += coef
                    if c != a:
                        blk[alpha, c, a] += coef
        A.append(blk)

    fnames, fbases, fpolys, fscales = [], [], [], []
    cols = [np.eye(m)[:, 0] * -1.0]
    for name, e in pp.equalities:
        sc = _scale_of(e)
        basis = MonomialBasis.of(n, 2 * d - e.degree)
        fnames.append(name)
        fbases.append(basis)
        fpolys.append(e * sc)
        fscales.append(sc)
        for eb in basis.exponents:
            col = np.zeros(m)
            for ee, coef in e.terms.items():
                col[row[_shift(eb, ee)]] += coef * sc
            cols.append(col)
    F = np.column_stack(cols)

    b = np.zeros(m)
    for e, coef in pp.objective.terms.items():
        b[row[e]] = -coef * sg
    return SdpProblem(d, n, cb, names, bases, polys, scales, fnames, fbases, fpolys, fscales,
                      pp.objective, sg, A, F, b)


@dataclass
class SosCertificate:
    v_d: float
    level: int
    status: str
    iterations: int
    primal_value: float
    dual_value: float
    gap: float
    grams: dict
    gram_bases: dict
    free_multipliers: dict
    gram_min_eigenvalues: dict
    residual: float
    runtime: float
    gap_history: list = field(default_factory=list)

    @property
    def min_gram_eigenvalue(self) -> float:
        return min(self.gram_min_eigenvalues.values())

    def to_dict(self) -> dict:
        return {
            "v_d": self.v_d,
            "level": self.level,
            "status": self.status,
            "iterations": self.iterations,
            "primal_value": self.primal_value,
            "dual_value": self.dual_value,
            "gap": self.gap,
            "residual": self.residual,
            "gram_min_eigenvalues": self.gram_min_eigenvalues,
            "gram_sizes": {k: int(v.shape[0]) for k, v in self.grams.items()},
            "runtime_seconds": self.runtime,
        }


def sdp_solve(sdp: SdpProblem, tol: float = 1e-8, max_iter: int = 100) -> SosCertificate:
    """Solve the SOS program; raises NotConverged with the last iterate attached."""
    start = time.perf_counter()
    prob, y0, N, offset = sdp.reduce()
    sol: SdpSolution = solve_block_sdp(prob, tol=tol, max_iter=max_iter)
    X = sol.X

    # recover the free coefficients from the full system
    AX = np.zeros(sdp.n_constraints)
    for a, x in zip(sdp.A, X):
        AX += np.tensordot(a, x, axes=([1, 2], [0, 1]))
    u, *_ = np.linalg.lstsq(sdp.F, sdp.b - AX, rcond=None)
    sg = sdp.objective_scale
    t = float(u[0]) / sg
    dual = (float(prob.b @ sol.y) + offset) / sg

    grams, gbases, eigs = {}, {}, {}
    for name, basis, x, sc in zip(sdp.block_names, sdp.block_bases, X, sdp.block_scales):
        G = x * sc / sg
        grams[name] = G
        gbases[name] = basis
        eigs[name] = float(np.linalg.eigvalsh(G)[0]) if G.size else 0.0
    free, pos = {}, 1
    for name, basis, sc in zip(sdp.free_names, sdp.free_bases, sdp.free_scales):
        k = len(basis)
        coeffs = u[pos:pos + k] * sc / sg
        free[name] = Poly(sdp.n_vars, {e: c for e, c in zip(basis.exponents, coeffs)})
        pos += k

    cert = SosCertificate(
        v_d=t,
        level=sdp.level,
        status=sol.status,
        iterations=sol.iterations,
        primal_value=t,
        dual_value=dual,
        gap=abs(t - dual),
        grams=grams,
        gram_bases=gbases,
        free_multipliers=free,
        gram_min_eigenvalues=eigs,
        residual=float("nan"),
        runtime=0.0,
        gap_history=sol.gap_history,
    )
    cert.residual = _coefficient_residual(sdp, cert)
    cert.runtime = time.perf_counter() - start
    if sol.status != "optimal":
        rel_gap = cert.gap / (1.0 + abs(t) + abs(dual))
        if max(rel_gap, sol.primal_infeasibility, sol.dual_infeasibility) <= INACCURATE_TOLERANCE:
            cert.status = "optimal_inaccurate"
            return cert
        raise NotConverged(f"no convergence in {sol.iterations} iterations (gap {cert.gap:.3g})", cert)
    return cert


def _gram_poly(n: int, basis: MonomialBasis, G: np.ndarray) -> Poly:
    out: dict = {}
    for a, ea in enumerate(basis.exponents):
        for c, eb in enumerate(basis.exponents):
            e = _shift(ea, eb)
            out[e] = out.get(e, 0.0) + G[a, c]
    return Poly(n, out)


def _identity_remainder(objective: Poly, inequalities, equalities, cert: SosCertificate) -> Poly:
    n = objective.n
    rem = Poly.const(n, cert.v_d) - objective
    rem = rem - _gram_poly(n, cert.gram_bases["sigma_0"], cert.grams["sigma_0"])
    for name, h in inequalities:
        rem = rem - _gram_poly(n, cert.gram_bases[name], cert.grams[name]) * h
    for name, e in equalities:
        rem = rem - cert.free_multipliers[name] * e
    return rem


def _coefficient_residual(sdp: SdpProblem, cert: SosCertificate) -> float:
    ineq = [(nm, h * (1.0 / sc)) for nm, h, sc in zip(sdp.block_names[1:], sdp.block_polys[1:], sdp.block_scales[1:])]
    eq = [(nm, e * (1.0 / sc)) for nm, e, sc in zip(sdp.free_names, sdp.free_polys, sdp.free_scales)]
    rem = _identity_remainder(sdp.objective, ineq, eq, cert)
    return max((abs(c) for c in rem.terms.values()), default=0.0)


def check_certificate(pp: PolyProgram, cert: SosCertificate, tol: float = 1e-6) -> dict:
    """Rebuild t - g - sigma_0 - sum sigma_i h_i - sum p_j e_j from the Gram matrices.

    Uses the program's own polynomials (not the SDP data), so it validates the
    assembly as well as the solver output.
    """
    rem = _identity_remainder(pp.objective, pp.inequalities, pp.equalities, cert)
    residual = max((abs(c) for c in rem.terms.values()), default=0.0)
    eigs = {}
    for name, G in cert.grams.items():
        eigs[name] = float(np.linalg.eigvalsh(0.5 * (G + G.T))[0]) if G.size else 0.0
    min_eig = min(eigs.values())
    return {
        "residual": float(residual),
        "min_gram_eigenvalue": min_eig,
        "ok": bool(residual <= tol and min_eig >= -tol),
    }


def sos_bound(pp: PolyProgram, d: int = 1, tol: float = 1e-8, max_iter: int = 100,
              allow_high_level: bool = False) -> SosCertificate:
    return sdp_solve(sos_relaxation(pp, d, allow_high_level=allow_high_level), tol=tol, max_iter=max_iter)


def optimality_gap(game, g: DesignObjective, te: ThetaEps, d: int = 1, resolution: int = 200,
                   grid_result=None, tol: float = 1e-8, allow_high_level: bool = False) -> dict:
    """v_d minus the objective at the best grid point."""
    if grid_result is None:
        grid_result = grid_search(game, g, te, resolution=resolution)
    cert = sos_bound(build_mpec(game, g, te), d, tol=tol, allow_high_level=allow_high_level)
    return {
        "v_d": cert.v_d,
        "g_at_theta_max": grid_result.g_value,
        "theta_max": list(grid_result.theta_max),
        "gap": cert.v_d - grid_result.g_value,
        "certificate": cert,
    }
