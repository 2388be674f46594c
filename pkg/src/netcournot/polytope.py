"""Reduction of the balanced transport set to a full-dimensional polytope.

The set P' = {r : A r <= b, 1'r = 0} usually has empty interior in R^M. We
detect implicit equalities with LPs, eliminate a subset of coordinates through
the equality system, and drop redundant rows, leaving {r_hat : A_hat r_hat <=
b_hat} with a strictly feasible point and an affine lift r = T r_hat + t.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .model import TransportSet

LP_TOL = 1e-9


class EmptyPolytope(ValueError):
    pass


class DegenerateBasis(RuntimeError):
    pass


@dataclass(frozen=True)
class ProjectedPolytope:
    A_hat: np.ndarray
    b_hat: np.ndarray
    T: np.ndarray
    t: np.ndarray
    implicit_rows: tuple
    kept_rows: tuple
    interior_point: np.ndarray
    interior_radius: float

    @property
    def dim(self) -> int:
        return self.T.shape[1]

    def lift(self, r_hat) -> np.ndarray:
        return self.T @ np.asarray(r_hat, dtype=float) + self.t


def _lp(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, n=None):
    res = linprog(
        c,
        A_ub=A_ub if A_ub is not None and len(A_ub) else None,
        b_ub=b_ub if b_ub is not None and len(b_ub) else None,
        A_eq=A_eq if A_eq is not None and len(A_eq) else None,
        b_eq=b_eq if b_eq is not None and len(b_eq) else None,
        bounds=[(None, None)] * n,
        method="highs",
    )
    return res


def _basis_from_right(Eq: np.ndarray) -> list[int]:
    """Columns chosen right to left so that Eq[:, cols] has full row rank."""
    rank = np.linalg.matrix_rank(Eq) if Eq.size else 0
    cols: list[int] = []
    for j in reversed(range(Eq.shape[1])):
        trial = cols + [j]
        if np.linalg.matrix_rank(Eq[:, trial]) == len(trial):
            cols = trial
        if len(cols) == rank:
            break
    if len(cols) != rank:
        raise DegenerateBasis("no invertible column subset for the equality system")
    return sorted(cols)


def project_polytope(P: TransportSet, n_markets: int | None = None) -> ProjectedPolytope:
    if P.kind == "unconstrained":
        raise ValueError("only polytope or zero transport sets can be projected")
    if P.kind == "zero":
        if n_markets is None:
            raise ValueError("n_markets is required for the zero transport set")
        n = n_markets
        return ProjectedPolytope(
            np.zeros((0, 0)), np.zeros(0), np.zeros((n, 0)), np.zeros(n), (), (), np.zeros(0), 0.0
        )
    A, b = P.A_array, P.b_array
    n = A.shape[1] if A.size else (n_markets or 0)
    ones = np.ones((1, n))
    zero = np.zeros(1)
    feas = _lp(np.zeros(n), A, b, ones, zero, n)
    if feas.status != 0:
        raise EmptyPolytope("transport polytope has no balanced point")

    implicit = []
    for j in range(A.shape[0]):
        res = _lp(A[j], A, b, ones, zero, n)
        if res.status == 0 and res.fun >= b[j] - LP_TOL * max(1.0, abs(b[j])):
            implicit.append(j)

    Eq = np.vstack([ones, A[implicit]]) if implicit else ones
    eq_rhs = np.concatenate([zero, b[implicit]])
    # keep a row-independent subset of the equalities
    rows: list[int] = []
    for i in range(Eq.shape[0]):
        if np.linalg.matrix_rank(Eq[rows + [i]]) == len(rows) + 1:
            rows.append(i)
    Eq, eq_rhs = Eq[rows], eq_rhs[rows]

    basic = _basis_from_right(Eq)
    free = [j for j in range(n) if j not in basic]
    B_inv = np.linalg.inv(Eq[:, basic])
    T = np.zeros((n, len(free)))
    t = np.zeros(n)
    T[free, np.arange(len(free))] = 1.0
    T[basic] = -B_inv @ Eq[:, free]
    t[basic] = B_inv @ eq_rhs

    ineq = [j for j in range(A.shape[0]) if j not in implicit]
    A_red = A[ineq] @ T
    b_red = b[ineq] - A[ineq] @ t
    k = len(free)

    # drop rows that hold identically, then LP-redundant rows from the back so earlier duplicates survive
    cand = [i for i in range(len(ineq)) if np.linalg.norm(A_red[i]) > LP_TOL]
    kept = list(cand)
    for i in reversed(cand):
        others = [j for j in kept if j != i]
        if not others:
            continue
        probe = A_red[i].copy()
        # duplicates and bounded-by-others rows both show up as max <= b_i
        res = _lp(-probe, A_red[others], b_red[others] + 0.0, None, None, k) if k else None
        if res is not None and res.status == 0 and -res.fun <= b_red[i] + LP_TOL * max(1.0, abs(b_red[i])):
            kept.remove(i)
    A_hat = A_red[kept]
    b_hat = b_red[kept]

    center, radius = np.zeros(k), 0.0
    if k:
        norms = np.linalg.norm(A_hat, axis=1)
        c = np.zeros(k + 1)
        c[-1] = -1.0
        A_ub = np.hstack([A_hat, norms[:, None]])
        res = linprog(c, A_ub=A_ub, b_ub=b_hat, bounds=[(None, None)] * k + [(0, 1e6)], method="highs")
        if res.status == 0:
            center, radius = res.x[:k], float(res.x[-1])
    return ProjectedPolytope(
        A_hat, b_hat, T, t, tuple(implicit), tuple(ineq[i] for i in kept), center, radius
    )


def enumerate_vertices(proj: ProjectedPolytope, tol: float = 1e-9) -> list[np.ndarray]:
    """Vertices of the reduced polytope, lifted back to r coordinates."""
    k = proj.dim
    if k == 0:
        return [proj.t.copy()]
    A, b = proj.A_hat, proj.b_hat
    found: list[np.ndarray] = []
    for rows in itertools.combinations(range(A.shape[0]), k):
        M = A[list(rows)]
        if abs(np.linalg.det(M)) < 1e-12:
            continue
        x = np.linalg.solve(M, b[list(rows)])
        if np.all(A @ x <= b + tol * max(1.0, np.abs(b).max())):
            if not any(np.allclose(x, y, atol=1e-10) for y in found):
                found.append(x)
    return [proj.lift(x) for x in found]
