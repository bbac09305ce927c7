import random
from fractions import Fraction

import gmpy2
import pytest
import sympy
from gmpy2 import mpc, mpfr
from hypothesis import given, settings, strategies as st

from qcfrac.scalars import (INF, CyclotomicElement, PrecisionExhausted, certified_sign,
                            certify, chordal_distance, cyclotomic_embed, cyclotomic_is_zero,
                            cyclotomic_polynomial, exp_2pi_i, working_precision)


def cyc(m, coeffs):
    return CyclotomicElement(m, list(coeffs) + [0] * (m - len(coeffs)))


def test_embed_zeta4_is_i():
    z = cyclotomic_embed(cyc(4, [0, 1]), 64)
    with working_precision(64):
        assert abs(z - mpc(0, 1)) < mpfr(2) ** -60


def test_embed_one_plus_zeta2_is_zero():
    assert abs(cyclotomic_embed(cyc(2, [1, 1]), 64)) < mpfr(2) ** -60


def test_embed_golden_section():
    bits = 200
    z = cyclotomic_embed(cyc(5, [0, 1, 0, 0, 1]), bits)
    with working_precision(2 * bits):
        oracle = 2 * gmpy2.cos(2 * gmpy2.const_pi() / 5)
        assert abs(z - oracle) < mpfr(2) ** -(bits - 4)
        assert abs(oracle - (gmpy2.sqrt(5) - 1) / 2) < mpfr(2) ** -(2 * bits - 8)


@pytest.mark.parametrize("m,coeffs,expected", [
    (2, [1, 1], True),
    (3, [1, 1, 1], True),
    (5, [0, 1, -1], False),
    (6, [1, 0, 0, 1], True),     # 1 + zeta6^3 = 0
])
def test_is_zero_examples(m, coeffs, expected):
    assert cyclotomic_is_zero(cyc(m, coeffs)) is expected


def _sympy_is_zero(m, coeffs):
    x = sympy.symbols("x")
    p = sum(sympy.Rational(c) * x ** j for j, c in enumerate(coeffs))
    return sympy.rem(p, sympy.cyclotomic_poly(m, x), x) == 0


@pytest.mark.parametrize("m", [1, 2, 5, 7, 12, 15, 30])
def test_cyclotomic_polynomial_matches_sympy(m):
    x = sympy.symbols("x")
    want = sympy.Poly(sympy.cyclotomic_poly(m, x), x).all_coeffs()[::-1]
    assert list(cyclotomic_polynomial(m)) == [int(c) for c in want]


def test_zero_test_against_independent_division():
    rng = random.Random(7)
    for _ in range(60):
        m = rng.randint(1, 24)
        coeffs = [rng.randint(-2, 2) for _ in range(m)]
        if rng.random() < 0.5:
            # add a multiple of the cyclotomic polynomial, folded mod x^m - 1
            phi = cyclotomic_polynomial(m)
            shift = rng.randint(0, m - 1)
            for j, c in enumerate(phi):
                coeffs[(j + shift) % m] += c
        assert cyc(m, coeffs).is_zero() == _sympy_is_zero(m, coeffs)


elements = st.integers(1, 60).flatmap(
    lambda m: st.tuples(*[st.lists(st.integers(-100, 100), min_size=m, max_size=m)
                          for _ in range(3)]).map(lambda t: (m, t)))


@settings(max_examples=60, deadline=None)
@given(elements)
def test_ring_laws(data):
    m, (a, b, c) = data
    a, b, c = CyclotomicElement(m, a), CyclotomicElement(m, b), CyclotomicElement(m, c)
    assert (a + b) + c == a + (b + c)
    assert a * (b + c) == a * b + a * c
    assert a * b == b * a


@settings(max_examples=60, deadline=None)
@given(elements)
def test_embedding_is_multiplicative(data):
    m, (a, b, _) = data
    a, b = CyclotomicElement(m, a), CyclotomicElement(m, b)
    bits = 128
    with working_precision(bits):
        lhs = cyclotomic_embed(a * b, bits)
        rhs = cyclotomic_embed(a, bits) * cyclotomic_embed(b, bits)
        scale = max(mpfr(1), abs(rhs))
        assert abs(lhs - rhs) < scale * mpfr(2) ** (-bits + 8)


def test_inverse_and_galois():
    a = cyc(7, [2, 1, 0, 3])
    assert a * a.inverse() == CyclotomicElement.scalar(7, 1)
    # galois(-1) is complex conjugation
    with working_precision(128):
        assert abs(cyclotomic_embed(a.galois(6), 128) - cyclotomic_embed(a, 128).conjugate()) \
            < mpfr(2) ** -120


def test_chordal_examples():
    assert chordal_distance(0, INF) == 1
    assert chordal_distance(mpc(3, 4), mpc(3, 4)) == 0
    assert abs(chordal_distance(1, -1) - 1) < mpfr(2) ** -250
    assert chordal_distance(INF, INF) == 0


def test_chordal_metric_axioms_on_random_triples():
    rng = random.Random(11)
    bits = 128
    tol = mpfr(2) ** (-bits + 8)

    def point():
        if rng.random() < 0.05:
            return INF
        return mpc(rng.gauss(0, 3), rng.gauss(0, 3))

    for _ in range(1000):
        a, b, c = point(), point(), point()
        with working_precision(bits):
            dab = chordal_distance(a, b, bits)
            assert abs(dab - chordal_distance(b, a, bits)) <= tol
            assert dab <= chordal_distance(a, c, bits) + chordal_distance(c, b, bits) + tol
            assert 0 <= dab <= 2


def test_doubling_precision_refines():
    x = cyc(9, [1, 3, 0, -2, 5])
    ref = cyclotomic_embed(x, 1024)
    prev = None
    for bits in (64, 128, 256):
        with working_precision(1024):
            err = abs(cyclotomic_embed(x, bits) - ref)
        if prev is not None and prev > 0:
            assert err <= prev / 2
        prev = err


def test_exp_2pi_i_reduces_exactly():
    with working_precision(128):
        assert abs(exp_2pi_i(Fraction(7, 4), 128) - mpc(0, -1)) < mpfr(2) ** -120


def test_certification_helpers():
    val = certify(lambda p: exp_2pi_i(Fraction(1, 3), p), 64)
    assert abs(val.real + mpfr(0.5)) < mpfr(2) ** -60
    assert certified_sign(lambda p: gmpy2.sqrt(mpfr(2, p)) - mpfr(1.4, p)) == 1
    with pytest.raises(PrecisionExhausted):
        certified_sign(lambda p: mpfr(0, p), max_bits=256)
