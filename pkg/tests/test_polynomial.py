from math import comb

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from netcournot.polynomial import Poly, grlex_key, monomials


def _random_poly(rng, n, deg, k=5):
    terms = {}
    for _ in range(k):
        e = [0] * n
        for _ in range(int(rng.integers(0, deg + 1))):
            e[int(rng.integers(n))] += 1
        terms[tuple(e)] = float(rng.normal())
    return Poly(n, terms)


@settings(max_examples=100)
@given(st.integers(0, 2**31))
def test_arithmetic_matches_pointwise_evaluation(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 4))
    p, q = _random_poly(rng, n, 3), _random_poly(rng, n, 2)
    z = rng.normal(size=n)
    assert (p + q)(z) == np.float64(p(z) + q(z)) or abs((p + q)(z) - p(z) - q(z)) <= 1e-12 * (1 + abs(p(z)) + abs(q(z)))
    assert abs((p * q)(z) - p(z) * q(z)) <= 1e-10 * (1 + abs(p(z) * q(z)))
    assert abs((p - 2.5)(z) - (p(z) - 2.5)) <= 1e-12 * (1 + abs(p(z)))
    assert abs((p**2)(z) - p(z) ** 2) <= 1e-10 * (1 + p(z) ** 2)
    assert (p * q).degree <= p.degree + q.degree


@settings(max_examples=50)
@given(st.integers(0, 2**31))
def test_compose_and_embed(seed):
    rng = np.random.default_rng(seed)
    p = _random_poly(rng, 2, 3)
    subs = [_random_poly(rng, 3, 1), _random_poly(rng, 3, 2)]
    z = rng.normal(size=3)
    inner = np.array([s(z) for s in subs])
    assert abs(p.compose(subs)(z) - p(inner)) <= 1e-10 * (1 + abs(p(inner)))
    big = p.embed(4, [3, 1])
    w = np.array([9.0, z[1], 7.0, z[0]])
    assert abs(big(w) - p(z[:2])) <= 1e-12 * (1 + abs(p(z[:2])))


def test_terms_round_trip_and_order():
    p = Poly.linear([1.0, -2.0], 0.5) * Poly.var(2, 0) + 3
    back = Poly.from_terms(2, p.to_terms())
    assert back.terms == p.terms
    keys = [tuple(e) for _, e in p.to_terms()]
    assert keys == sorted(keys, key=grlex_key)
    assert Poly(2, {(0, 0): 0.0}).terms == {}


def test_monomial_basis():
    for n in (1, 3, 10):
        for d in (0, 1, 2):
            basis = monomials(n, d)
            assert len(basis) == comb(n + d, d)
            assert basis[0] == (0,) * n
            assert len(set(basis)) == len(basis)
    assert monomials(2, 2) == [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]
