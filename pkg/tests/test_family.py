import cmath
import json
import random
from fractions import Fraction

import pytest
from gmpy2 import mpc, mpfr

from qcfrac.family import (ConfigError, FamilySpec, Indeterminate, builtin_families,
                           dump_family, get_family, iterate_unit_circle, load_family,
                           moebius_apply, moebius_invert, partial_denominator,
                           partial_numerator, partial_terms, recurrence_at, run_recurrence)
from qcfrac.scalars import INF, CyclotomicElement, UnitPoint, cyclotomic_embed, working_precision
from qcfrac.symbolic import QPolynomial, expand

FAMILIES = {f.name: f for f in builtin_families()}
TABLE_FAMILIES = ["K", "S1", "S2", "S3"]


def fib(n):
    a, b = 0, 1
    for _ in range(n):
        a, b = b, a + b
    return a


def test_builtin_entries():
    K, S3, GG = FAMILIES["K"], FAMILIES["S3"], FAMILIES["GG"]
    assert (K.k, K.eta, K.s, K.d) == (1, Fraction(1, 5), 1, 5)
    assert (S3.k, S3.eta, S3.s, S3.d) == (1, Fraction(1, 3), 1, 6)
    assert GG.experimental and not K.experimental
    assert [partial_denominator(GG, n, 1) for n in range(3)] == [2, 2, 2]


def test_rogers_ramanujan_partial_terms():
    a7, b6 = partial_terms(FAMILIES["K"], 7)
    assert a7 == QPolynomial({7: 1})
    assert b6 == QPolynomial({0: 1})


def test_s1_second_numerator():
    a2, _ = partial_terms(FAMILIES["S1"], 2)
    assert a2 == QPolynomial({1: 1, 2: 1})


def test_gg_terms():
    GG = FAMILIES["GG"]
    bs = [partial_terms(GG, n)[1] for n in range(1, 4)]
    assert bs == [QPolynomial({0: 1, 1: 1}), QPolynomial({0: 1, 3: 1}), QPolynomial({0: 1, 5: 1})]
    assert [partial_terms(GG, n)[0] for n in (1, 2)] == [QPolynomial({2: 1}), QPolynomial({4: 1})]


@pytest.mark.parametrize("name", list(FAMILIES))
def test_value_at_one_is_coefficient_sum(name):
    spec = FAMILIES[name]
    for n in range(1, 8):
        a, _ = partial_terms(spec, n)
        assert partial_numerator(spec, n, 1) == sum(a.coeffs.values())


def test_first_step_symbolic():
    ex = expand(FAMILIES["K"], 1)
    assert ex.P[1] == QPolynomial({0: 1, 1: 1})
    assert ex.Q[1] == QPolynomial({0: 1})


def test_fibonacci_ratios_at_one():
    states = run_recurrence(FAMILIES["K"], 1, 10)
    for st in states:
        assert st.value == Fraction(fib(st.n + 2), fib(st.n + 1))
    assert states[10].value == Fraction(144, 89)


def test_worpitzky_region():
    rng = random.Random(3)
    K = FAMILIES["K"]
    for _ in range(20):
        rho, th = 0.25 * rng.random(), 2 * cmath.pi * rng.random()
        q = mpc(cmath.rect(rho, th))
        states = run_recurrence(K, q, 60, bits=128)
        vals = [st.P / st.Q for st in states[1:]]
        for v in vals:
            assert abs(v - 1) < 0.5          # tail K_{n>=1}(a_n/1) = value - b0
        assert abs(vals[-1] - vals[-2]) < mpfr(2) ** -100


@pytest.mark.parametrize("name", TABLE_FAMILIES + ["GG"])
def test_determinant_identity_exact(name):
    spec = FAMILIES[name]
    for m in (1, 2, 3, 4, 5, 6, 7, 9, 12, 17, 25, 36, 50):
        q = CyclotomicElement.zeta(m, 1)
        for st in run_recurrence(spec, q, 20 * spec.k * m if m <= 12 else 4 * spec.k * m):
            assert st.determinant() == st.expected_determinant()


@pytest.mark.parametrize("name", TABLE_FAMILIES)
def test_periodicity(name):
    spec = FAMILIES[name]
    for m in (3, 5, 8):
        q = CyclotomicElement.zeta(m, 1)
        km = spec.k * m
        for j in range(1, 6):
            for r in range(1, km + 1):
                assert partial_numerator(spec, j * km + r, q) == partial_numerator(spec, r, q)
                assert partial_denominator(spec, j * km + r, q) == partial_denominator(spec, r, q)


@pytest.mark.parametrize("name", TABLE_FAMILIES)
def test_float_backend_matches_exact(name):
    spec, bits, m, r = FAMILIES[name], 256, 7, 3
    exact = run_recurrence(spec, CyclotomicElement.zeta(m, r), 500)
    approx = run_recurrence(spec, UnitPoint(Fraction(r, m)), 500, bits)
    with working_precision(bits):
        for e, a in zip(exact, approx):
            for x, y in ((e.P, a.P), (e.Q, a.Q)):
                xv = cyclotomic_embed(x, bits)
                assert abs(xv - y) <= max(abs(xv), 1) * mpfr(2) ** (-bits + 16)


@pytest.mark.parametrize("name", list(FAMILIES))
def test_unit_circle_iterator_matches_general_recurrence(name):
    spec, t, bits = FAMILIES[name], Fraction(5, 13), 192
    ref = run_recurrence(spec, UnitPoint(t), 300, bits)
    with working_precision(bits):
        for (n, P, Pp, Q, Qp), st in zip(iterate_unit_circle(spec, t, 300, bits, resync=64), ref):
            assert n == st.n
            for x, y in ((P, st.P), (Q, st.Q), (Pp, st.P_prev)):
                assert abs(x - y) <= max(abs(y), 1) * mpfr(2) ** (-bits + 24)


def test_moebius_examples():
    st = run_recurrence(FAMILIES["K"], 1, 6)[6]
    assert moebius_apply(st, 0) == Fraction(st.P, st.Q)
    assert moebius_apply(st, INF) == Fraction(st.P_prev, st.Q_prev)
    assert moebius_apply(st, Fraction(-st.Q, st.Q_prev)) is INF
    assert moebius_invert(st, Fraction(st.P, st.Q)) == 0
    assert moebius_invert(st, Fraction(st.P_prev, st.Q_prev)) is INF
    assert moebius_invert(st, INF) == Fraction(-st.Q, st.Q_prev)
    g = Fraction(3, 7)
    assert moebius_apply(st, moebius_invert(st, g)) == g


def test_moebius_indeterminate_on_degenerate_state():
    from qcfrac.family import ApproximantState
    st = ApproximantState(1, 0, 0, 0, 0, 0)
    with pytest.raises(Indeterminate):
        moebius_apply(st, 1)


def test_zero_numerator_is_flagged():
    K = FAMILIES["K"]
    assert not run_recurrence(K, CyclotomicElement.zeta(5, 1), 10)[-1].any_zero
    # f(x) = x + x^2 vanishes at x = -1, so a_1 = 0 at q = -1
    spec = FamilySpec("Z", 1, FAMILIES["S3"].f, K.g, K.b0, Fraction(1, 3),
                      d=6, s=1, r=1, u=2, f_shift=1)
    assert run_recurrence(spec, -1, 3)[-1].any_zero


def test_config_round_trip(tmp_path):
    for spec in builtin_families():
        path = tmp_path / f"{spec.name}.json"
        dump_family(spec, path)
        again = load_family(path)
        assert again.to_dict() == spec.to_dict()
        assert recurrence_at(again, Fraction(1, 3), [5])[5].P == \
            run_recurrence(spec, Fraction(1, 3), 5)[5].P


def test_bad_configs(tmp_path):
    good = FAMILIES["K"].to_dict()
    for patch in ({"r": 1, "u": 1}, {"s": 0}, {"k": 2}, {"eta": "x"}):
        bad = dict(good, **patch)
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(bad))
        with pytest.raises(ConfigError):
            load_family(path)
    with pytest.raises(ConfigError):
        get_family("nope")
