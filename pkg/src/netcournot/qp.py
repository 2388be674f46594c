"""Dense primal active-set solver for small convex quadratic programs.

    minimize    x'Hx/2 + c'x
    subject to  E x  = e
                G x <= h

H must be positive semidefinite. Each iteration solves the equality-constrained
subproblem on the current working set with the null-space method, so singular
reduced Hessians are handled: a zero-curvature descent direction is followed to
the nearest blocking constraint, or reported as unbounded.

Pivoting is deterministic: the constraint dropped is the one with the most
negative multiplier and the constraint added is the nearest blocking one, ties
going to the lowest index in both cases.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class QPError(Exception):
    pass


class QPUnbounded(QPError):
    pass


class QPMaxIterations(QPError):
    pass


class QPInfeasibleStart(QPError):
    pass


@dataclass
class QPResult:
    x: np.ndarray
    eq_multipliers: np.ndarray
    ineq_multipliers: np.ndarray
    working_set: tuple
    iterations: int
    reduced_min_curvature: float


def _null_space(M: np.ndarray, n: int, tol: float) -> np.ndarray:
    if M.shape[0] == 0:
        return np.eye(n)
    _, sv, Vt = np.linalg.svd(M)
    rank = int(np.sum(sv > tol * max(1.0, sv[0]))) if sv.size else 0
    return Vt[rank:].T


def _independent(M: np.ndarray, row: np.ndarray, tol: float) -> bool:
    if M.shape[0] == 0:
        return bool(np.linalg.norm(row) > tol)
    stacked = np.vstack([M, row])
    return np.linalg.matrix_rank(stacked, tol=tol) > np.linalg.matrix_rank(M, tol=tol)


def _as2d(A, n):
    if A is None:
        return np.zeros((0, n))
    A = np.asarray(A, dtype=float)
    return A.reshape(-1, n)


def solve_qp(
    H,
    c,
    E=None,
    e=None,
    G=None,
    h=None,
    x0=None,
    working_set=(),
    max_iter: int | None = None,
    tol: float = 1e-10,
) -> QPResult:
    H = np.asarray(H, dtype=float)
    c = np.asarray(c, dtype=float)
    n = c.size
    E = _as2d(E, n)
    G = _as2d(G, n)
    e = np.zeros(0) if e is None else np.asarray(e, dtype=float)
    h = np.zeros(0) if h is None else np.asarray(h, dtype=float)
    if max_iter is None:
        max_iter = 10 * (n + E.shape[0] + G.shape[0]) + 10

    x = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float).copy()
    scale = max(1.0, np.abs(H).max(initial=0.0), np.abs(c).max(initial=0.0))
    feas_tol = 1e-9 * max(1.0, np.abs(h).max(initial=0.0), np.abs(e).max(initial=0.0))
    if E.shape[0] and np.abs(E @ x - e).max() > feas_tol:
        raise QPInfeasibleStart("starting point violates an equality constraint")
    if G.shape[0] and (G @ x - h).max() > feas_tol:
        raise QPInfeasibleStart("starting point violates an inequality constraint")

    W: list[int] = []
    for j in sorted(set(working_set)):
        if abs(G[j] @ x - h[j]) <= feas_tol and _independent(np.vstack([E, G[W]]), G[j], 1e-9):
            W.append(j)

    for it in range(1, max_iter + 1):
        g = H @ x + c
        M = np.vstack([E, G[W]]) if W else E
        Z = _null_space(M, n, 1e-11)
        p = np.zeros(n)
        ray = False
        min_curv = np.inf
        if Z.shape[1]:
            Hz = Z.T @ H @ Z
            gz = Z.T @ g
            w, V = np.linalg.eigh(0.5 * (Hz + Hz.T))
            min_curv = float(w[0])
            if w[0] < -1e-9 * scale:
                raise QPError("objective is not convex on the working subspace")
            flat = w <= 1e-11 * scale
            gproj = V.T @ gz
            if np.any(flat) and np.linalg.norm(gproj[flat]) > tol * scale:
                p = -Z @ (V[:, flat] @ gproj[flat])
                ray = True
            else:
                curved = ~flat
                p = -Z @ (V[:, curved] @ (gproj[curved] / w[curved]))

        if not ray and np.linalg.norm(p) <= 1e-12 * max(1.0, np.linalg.norm(x)):
            y = np.linalg.lstsq(M.T, -g, rcond=None)[0] if M.shape[0] else np.zeros(0)
            lam = y[: E.shape[0]]
            nuW = y[E.shape[0] :]
            neg = [k for k in range(len(W)) if nuW[k] < -1e-9 * scale]
            if not neg:
                nu = np.zeros(G.shape[0])
                nu[W] = np.maximum(nuW, 0.0)
                return QPResult(x, lam, nu, tuple(sorted(W)), it, min_curv)
            worst = min(neg, key=lambda k: (nuW[k], W[k]))
            W.pop(worst)
            continue

        # ratio test over constraints outside the working set
        alpha = np.inf if ray else 1.0
        block = None
        if G.shape[0]:
            Gp = G @ p
            slack = h - G @ x
            for j in range(G.shape[0]):
                if j in W or Gp[j] <= 1e-14 * max(1.0, np.linalg.norm(p)):
                    continue
                ratio = max(slack[j], 0.0) / Gp[j]
                if ratio < alpha - 1e-15 or (block is None and ratio <= alpha):
                    alpha, block = ratio, j
        if not np.isfinite(alpha):
            raise QPUnbounded("objective decreases without bound along a feasible ray")
        x = x + alpha * p
        if block is not None:
            W.append(block)
    raise QPMaxIterations(f"active-set loop did not terminate in {max_iter} iterations")


def try_working_set(H, c, E, e, G, h, working_set, tol: float = 1e-9) -> QPResult | None:
    """Solve the KKT system for a guessed active set; return it only if it is optimal.

    Used for warm starts across nearby problems. Returns None when the guess is
    singular, infeasible, or has a negative multiplier.
    """
    H = np.asarray(H, dtype=float)
    n = H.shape[0]
    E = _as2d(E, n)
    G = _as2d(G, n)
    W = list(working_set)
    M = np.vstack([E, G[W]])
    k = M.shape[0]
    K = np.zeros((n + k, n + k))
    K[:n, :n] = H
    K[:n, n:] = M.T
    K[n:, :n] = M
    rhs = np.concatenate([-np.asarray(c, dtype=float), np.asarray(e, dtype=float), np.asarray(h, dtype=float)[W]])
    try:
        sol = np.linalg.solve(K, rhs)
    except np.linalg.LinAlgError:
        return None
    if not np.all(np.isfinite(sol)):
        return None
    x = sol[:n]
    y = sol[n:]
    scale = max(1.0, np.abs(h).max(initial=0.0))
    if G.shape[0] and (G @ x - h).max() > tol * scale:
        return None
    nuW = y[E.shape[0] :]
    if np.any(nuW < -tol * max(1.0, np.abs(H).max())):
        return None
    resid = H @ x + c + M.T @ y
    if np.abs(resid).max() > 1e-8 * max(1.0, np.abs(c).max()):
        return None
    nu = np.zeros(G.shape[0])
    nu[W] = np.maximum(nuW, 0.0)
    return QPResult(x, y[: E.shape[0]], nu, tuple(sorted(W)), 1, np.nan)
