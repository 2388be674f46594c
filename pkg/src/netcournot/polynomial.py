"""Sparse multivariate polynomials with float coefficients.

A polynomial is a mapping from exponent tuples to coefficients. Only the
operations needed to assemble polynomial programs are provided.
"""

from __future__ import annotations

from itertools import combinations_with_replacement

import numpy as np


class Poly:
    __slots__ = ("n", "terms")

    def __init__(self, n: int, terms: dict | None = None):
        self.n = n
        self.terms: dict = {}
        for exp, c in (terms or {}).items():
            if len(exp) != n:
                raise ValueError(f"exponent {exp} does not have {n} entries")
            if c != 0:
                self.terms[tuple(exp)] = float(c)

    @classmethod
    def const(cls, n: int, c) -> "Poly":
        return cls(n, {(0,) * n: c})

    @classmethod
    def var(cls, n: int, i: int, c=1.0) -> "Poly":
        exp = [0] * n
        exp[i] = 1
        return cls(n, {tuple(exp): c})

    @classmethod
    def linear(cls, coeffs, const=0.0) -> "Poly":
        n = len(coeffs)
        p = cls.const(n, const)
        for i, c in enumerate(coeffs):
            if c:
                p = p + cls.var(n, i, c)
        return p

    def _coerce(self, other) -> "Poly":
        if isinstance(other, Poly):
            if other.n != self.n:
                raise ValueError("polynomials live in different variable spaces")
            return other
        return Poly.const(self.n, other)

    def __add__(self, other) -> "Poly":
        other = self._coerce(other)
        out = dict(self.terms)
        for e, c in other.terms.items():
            out[e] = out.get(e, 0.0) + c
        return Poly(self.n, out)

    __radd__ = __add__

    def __neg__(self) -> "Poly":
        return Poly(self.n, {e: -c for e, c in self.terms.items()})

    def __sub__(self, other) -> "Poly":
        return self + (-self._coerce(other))

    def __rsub__(self, other) -> "Poly":
        return self._coerce(other) - self

    def __mul__(self, other) -> "Poly":
        if not isinstance(other, Poly):
            return Poly(self.n, {e: c * float(other) for e, c in self.terms.items()})
        other = self._coerce(other)
        out: dict = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                out[e] = out.get(e, 0.0) + c1 * c2
        return Poly(self.n, out)

    __rmul__ = __mul__

    def __pow__(self, k: int) -> "Poly":
        out = Poly.const(self.n, 1.0)
        for _ in range(k):
            out = out * self
        return out

    @property
    def degree(self) -> int:
        return max((sum(e) for e in self.terms), default=0)

    def coefficient(self, exp) -> float:
        return self.terms.get(tuple(exp), 0.0)

    def __call__(self, z) -> float:
        z = np.asarray(z, dtype=float)
        return float(sum(c * np.prod(z ** np.array(e)) for e, c in self.terms.items()))

    def compose(self, subs: list) -> "Poly":
        """Substitute polynomial subs[i] (all over a common space) for variable i."""
        if len(subs) != self.n:
            raise ValueError("need one substitute per variable")
        m = subs[0].n
        out = Poly(m)
        for e, c in self.terms.items():
            term = Poly.const(m, c)
            for i, k in enumerate(e):
                if k:
                    term = term * subs[i] ** k
            out = out + term
        return out

    def embed(self, m: int, positions) -> "Poly":
        """Same polynomial viewed in an m-variable space, variable i mapped to positions[i]."""
        out = {}
        for e, c in self.terms.items():
            big = [0] * m
            for i, k in enumerate(e):
                big[positions[i]] += k
            out[tuple(big)] = c
        return Poly(m, out)

    def to_terms(self) -> list:
        """[(coefficient, exponent list)] in graded lexicographic order."""
        return [[c, list(e)] for e, c in sorted(self.terms.items(), key=lambda kv: grlex_key(kv[0]))]

    @classmethod
    def from_terms(cls, n: int, terms) -> "Poly":
        out: dict = {}
        for c, e in terms:
            e = tuple(int(v) for v in e)
            out[e] = out.get(e, 0.0) + float(c)
        return cls(n, out)

    def __repr__(self) -> str:
        return f"Poly(n={self.n}, terms={len(self.terms)}, degree={self.degree})"


def grlex_key(exp) -> tuple:
    """Graded lexicographic order: total degree first, then larger leading exponents first."""
    return (sum(exp), tuple(-v for v in exp))


def monomials(n: int, d: int) -> list:
    """All exponent tuples of degree <= d in graded lexicographic order."""
    out = []
    for deg in range(d + 1):
        for combo in combinations_with_replacement(range(n), deg):
            e = [0] * n
            for i in combo:
                e[i] += 1
            out.append(tuple(e))
    return sorted(out, key=grlex_key)
