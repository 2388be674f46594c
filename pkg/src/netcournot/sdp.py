"""Small dense primal-dual interior-point solver for block semidefinite programs.

    (P)  minimize  <C, X>   s.t.  <A_k, X> = b_k,  X psd
    (D)  maximize  b'y      s.t.  S = C - sum_k y_k A_k psd

X, S and every A_k are block diagonal; blocks are dense symmetric matrices
(1x1 blocks cover linear inequalities). Directions use Nesterov-Todd scaling
with a Mehrotra predictor-corrector and an infeasible start.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

STEP_FRACTION = 0.98


class NumericalFailure(RuntimeError):
    pass


@dataclass
class SdpSolution:
    X: list
    y: np.ndarray
    S: list
    status: str
    iterations: int
    primal_objective: float
    dual_objective: float
    primal_infeasibility: float
    dual_infeasibility: float
    gap_history: list = field(default_factory=list)
    min_eig_history: list = field(default_factory=list)


def _inner(U: list, V: list) -> float:
    return float(sum(np.vdot(u, v) for u, v in zip(U, V)))


class BlockSdp:
    """Problem data: C as a list of blocks, A as one (m, n_i, n_i) array per block."""

    def __init__(self, C: list, A: list, b):
        self.C = [np.asarray(c, dtype=float) for c in C]
        self.A = [np.asarray(a, dtype=float) for a in A]
        self.b = np.asarray(b, dtype=float)
        self.m = self.b.size
        for c, a in zip(self.C, self.A):
            if a.shape != (self.m,) + c.shape:
                raise ValueError(f"constraint block of shape {a.shape} does not match {c.shape}")

    @property
    def sizes(self) -> list:
        return [c.shape[0] for c in self.C]

    def op(self, X: list) -> np.ndarray:
        """A(X): the vector of <A_k, X>."""
        out = np.zeros(self.m)
        for a, x in zip(self.A, X):
            out += np.tensordot(a, x, axes=([1, 2], [0, 1]))
        return out

    def adj(self, y) -> list:
        """A*(y) = sum_k y_k A_k."""
        return [np.tensordot(y, a, axes=(0, 0)) for a in self.A]


def _sym(M):
    return 0.5 * (M + M.T)


def _nt_scaling(X, S):
    """G with G' S G = G^{-1} X G^{-T} = diag(lam)."""
    Lx = np.linalg.cholesky(X)
    Ls = np.linalg.cholesky(S)
    U, sv, Vt = np.linalg.svd(Ls.T @ Lx)
    G = Lx @ Vt.T / np.sqrt(sv)[None, :]
    Ginv = (np.sqrt(sv)[:, None] * Vt) @ np.linalg.inv(Lx)
    return G, Ginv, sv


def _max_step(M, dM) -> float:
    """Largest a <= 1/STEP_FRACTION keeping M + a dM psd (M positive definite)."""
    L = np.linalg.cholesky(M)
    Linv = np.linalg.inv(L)
    ev = np.linalg.eigvalsh(_sym(Linv @ dM @ Linv.T))
    lo = ev[0]
    return np.inf if lo >= 0 else -1.0 / lo


def _min_eig(blocks) -> float:
    return min(float(np.linalg.eigvalsh(_sym(B))[0]) for B in blocks)


def _schur_solver(M):
    """Cholesky solve; if M is numerically indefinite, regularize and refine."""
    try:
        chol = sla.cho_factor(M)
        return lambda r: sla.cho_solve(chol, r)
    except np.linalg.LinAlgError:
        pass
    scale = max(1.0, float(np.abs(np.diag(M)).max()))
    for delta in (1e-14, 1e-12, 1e-10):
        try:
            chol = sla.cho_factor(M + delta * scale * np.eye(M.shape[0]))
            break
        except np.linalg.LinAlgError:
            continue
    else:
        raise NumericalFailure("Schur complement is singular")

    def solve(r):
        x = sla.cho_solve(chol, r)
        for _ in range(3):
            x = x + sla.cho_solve(chol, r - M @ x)
        return x

    return solve


def _step(prob: BlockSdp, X, y, S, rp, Rd, mu, n_total):
    """One Mehrotra predictor-corrector step with Nesterov-Todd scaling."""
    scal = [_nt_scaling(x, s) for x, s in zip(X, S)]
    W = [g @ g.T for g, _, _ in scal]
    # Schur complement M_kl = <A_k, W A_l W>
    M = np.zeros((prob.m, prob.m))
    for a, w in zip(prob.A, W):
        WAW = w @ a @ w
        M += a.reshape(prob.m, -1) @ WAW.reshape(prob.m, -1).T
    M = _sym(M)
    solve = _schur_solver(M)

    def direction(Rc):
        # in scaled space T solves lam o T = Rc
        T = [2.0 * R / (lam[:, None] + lam[None, :]) for (_, _, lam), R in zip(scal, Rc)]
        GTG = [g @ t @ g.T for (g, _, _), t in zip(scal, T)]
        WRW = [w @ r @ w for w, r in zip(W, Rd)]
        dy = solve(rp - prob.op(GTG) + prob.op(WRW))
        dS = [_sym(r - a) for r, a in zip(Rd, prob.adj(dy))]
        dX = [_sym(gtg - w @ ds @ w) for gtg, w, ds in zip(GTG, W, dS)]
        return dX, dy, dS

    def steps(dX, dS):
        ap = min(1.0, STEP_FRACTION * min(_max_step(x, d) for x, d in zip(X, dX)))
        ad = min(1.0, STEP_FRACTION * min(_max_step(s, d) for s, d in zip(S, dS)))
        return ap, ad

    lam2 = [np.diag(lam**2) for _, _, lam in scal]
    dXa, _, dSa = direction([-l2 for l2 in lam2])
    ap, ad = steps(dXa, dSa)
    mu_aff = _inner([x + ap * d for x, d in zip(X, dXa)], [s + ad * d for s, d in zip(S, dSa)]) / n_total
    sigma = min(1.0, (mu_aff / mu) ** 3) if mu > 0 else 0.0
    Rc = []
    for (g, ginv, lam), dx, ds, l2 in zip(scal, dXa, dSa, lam2):
        dxs = ginv @ dx @ ginv.T
        dss = g.T @ ds @ g
        Rc.append(sigma * mu * np.eye(lam.size) - l2 - _sym(dxs @ dss))
    dX, dy, dS = direction(Rc)
    ap, ad = steps(dX, dS)
    X_new = [_sym(x + ap * d) for x, d in zip(X, dX)]
    S_new = [_sym(s + ad * d) for s, d in zip(S, dS)]
    y_new = y + ad * dy
    if not np.all(np.isfinite(y_new)):
        raise NumericalFailure("non-finite iterate")
    for B in X_new + S_new:
        np.linalg.cholesky(B)
    return X_new, y_new, S_new


def solve_block_sdp(prob: BlockSdp, tol: float = 1e-8, max_iter: int = 100) -> SdpSolution:
    n_total = sum(prob.sizes)
    normb = 1.0 + np.linalg.norm(prob.b)
    normC = 1.0 + np.sqrt(_inner(prob.C, prob.C))
    normA = max(1.0, max((np.abs(a).max() for a in prob.A if a.size), default=1.0))
    xi = max(10.0, np.sqrt(n_total) * normb / normA)
    eta = max(10.0, normC, np.sqrt(n_total))
    X = [xi * np.eye(k) for k in prob.sizes]
    S = [eta * np.eye(k) for k in prob.sizes]
    y = np.zeros(prob.m)
    hist, eig_hist = [], []
    best = None
    status = "max_iterations"
    it = 0
    rp = prob.b - prob.op(X)
    Rd = [c - s - a for c, s, a in zip(prob.C, S, prob.adj(y))]

    for it in range(1, max_iter + 1):
        mu = _inner(X, S) / n_total
        pobj = _inner(prob.C, X)
        dobj = float(prob.b @ y)
        pinf = np.linalg.norm(rp) / normb
        dinf = np.sqrt(_inner(Rd, Rd)) / normC
        gap = abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))
        hist.append(_inner(X, S))
        eig_hist.append(min(_min_eig(X), _min_eig(S)))
        if pinf <= tol and dinf <= tol and gap <= tol:
            status = "optimal"
            break
        merit = max(pinf, dinf, gap)
        if best is None or merit < best[0]:
            best = (merit, X, y, S, rp, Rd)

        try:
            X_new, y_new, S_new = _step(prob, X, y, S, rp, Rd, mu, n_total)
        except (NumericalFailure, np.linalg.LinAlgError):
            if it == 1:
                raise NumericalFailure("first interior-point step failed") from None
            # degenerate problems lose definiteness close to the optimum; keep the last good iterate
            status = "stalled"
            break
        X, y, S = X_new, y_new, S_new
        rp = prob.b - prob.op(X)
        Rd = [c - s - a for c, s, a in zip(prob.C, S, prob.adj(y))]

    if status != "optimal" and best is not None:
        _, X, y, S, rp, Rd = best
    return SdpSolution(
        X=X,
        y=y,
        S=S,
        status=status,
        iterations=it,
        primal_objective=_inner(prob.C, X),
        dual_objective=float(prob.b @ y),
        primal_infeasibility=float(np.linalg.norm(rp) / normb),
        dual_infeasibility=float(np.sqrt(_inner(Rd, Rd)) / normC),
        gap_history=hist,
        min_eig_history=eig_hist,
    )
