import dataclasses
import math
from fractions import Fraction

import gmpy2
import pytest
from gmpy2 import mpfr

from qcfrac.family import builtin_families, get_family
from qcfrac.pointgen import (LevelTooLarge, PointRecipe, PowerOfTwo, RegularCF, SteeringFailed,
                             build_sdiamond_point, convergents, decimal_digits, demo_threshold,
                             exceeds_phi_power, quotient_exceeds, s_membership_prefix, steer,
                             tower_point, tower_quotient, verify_recipe)
from qcfrac.scalars import working_precision
from qcfrac.symbolic import growth_bound, lipschitz_constants

K = get_family("K")
K_NPRIME = 8


@pytest.fixture(scope="module")
def certified():
    return build_sdiamond_point(K, 2, K_NPRIME)


@pytest.fixture(scope="module")
def demo():
    return build_sdiamond_point(K, 4, K_NPRIME, demo=True, theta=0.01)


def test_convergents_examples():
    assert convergents([2, 16]) == [(1, 2), (16, 33)]
    assert convergents([1, 1, 1, 1]) == [(1, 1), (1, 2), (2, 3), (3, 5)]
    with pytest.raises(ValueError):
        convergents([0])


@pytest.mark.parametrize("q", [[2], [3, 7, 15, 1, 292], [1] * 30, [5, 1, 9, 2, 2, 8]])
def test_determinant_identity(q):
    assert RegularCF(q).determinant_ok()
    cs = [(0, 1)] + convergents(q)
    for i in range(1, len(cs)):
        (c0, d0), (c1, d1) = cs[i - 1], cs[i]
        assert c1 * d0 - c0 * d1 == (-1) ** (i - 1)


def test_exceeds_phi_power_against_float():
    phi = (1 + 5 ** 0.5) / 2
    for n in range(0, 18):
        for e in range(1, 3 * int(phi ** n) + 3):
            # skip values within float noise of the boundary
            if abs(e - phi ** n) > 1e-6 * phi ** n:
                assert exceeds_phi_power(e, n) == (e >= phi ** n)


def test_s_membership_examples():
    tower = [2, 16, PowerOfTwo(256)]
    assert all(s_membership_prefix(tower, i) for i in range(3))
    assert not s_membership_prefix([1, 1], 1)         # 1 < phi
    assert s_membership_prefix([2, 3], 1)              # d_1 = 2 and 3 > phi^2
    assert not s_membership_prefix([2, 2], 1)          # 2 < phi^2
    assert s_membership_prefix([2, 16, 1 << 256], 2)   # big quotient via bit-length bracket


def test_tower_quotients():
    assert [tower_quotient(i) for i in (1, 2)] == [2, 16]
    assert tower_quotient(3) == 1 << 256


def test_tower_levels():
    assert tower_point(1).decimal == "0.5"
    t2 = tower_point(2)
    assert t2.cf.value == Fraction(16, 33)
    assert t2.decimal == "0.484"
    printed = ("484848484848484848484848484848484848484848484848484848484"
               "84848484848484848484849277885083112437522992318812011")
    t3 = tower_point(3)
    assert t3.decimal[2:].startswith(printed)
    d = t3.cf.convergents()[-1][1]
    assert t3.digits == math.floor(2 * math.log10(d))
    with pytest.raises(LevelTooLarge):
        tower_point(4)


def test_decimal_digits_truncates():
    assert decimal_digits(Fraction(2, 3), 4) == "0.6666"
    assert decimal_digits(Fraction(1, 100), 3) == "0.010"


def test_certified_recipe_verifies(certified):
    assert verify_recipe(K, certified) == []
    assert all(s.certified and s.growth_ok for s in certified.stages)
    assert [s.kind for s in certified.stages] == ["f", "g"]
    for s in certified.stages:
        want = K.r if s.kind == "f" else K.u
        assert s.c % K.d == want % K.d and s.d % K.d == K.s % K.d


def test_certified_growth_inequality(certified):
    gb = growth_bound(K)
    first = certified.stages[0]
    n = K.k * K_NPRIME * first.d ** 2
    e_next = certified.quotients[first.index]
    assert e_next > 2 * gmpy2.const_pi(128) * gb.gamma_bar(n)
    assert gb.gamma_bar(n) >= n
    assert isinstance(certified.final_quotient, PowerOfTwo)
    # exact gamma below the overestimate wherever it can be expanded
    table = lipschitz_constants(K, 80)
    assert all(table.gamma(m) <= gb.gamma_bar(m) for m in range(81))


def test_gamma_dominates_index():
    # gamma(n) >= n, so sum 1/(2 pi gamma(k N' n^2)) is dominated by sum 1/n^2
    for spec in builtin_families():
        table = lipschitz_constants(spec, 60)
        assert all(table.gamma(n) >= n for n in range(61))


def test_recipe_replay(certified, demo):
    for rec in (certified, demo):
        text = rec.dumps()
        again = PointRecipe.loads(text)
        assert again.dumps() == text
        assert verify_recipe(K, again) == []
        rebuilt = build_sdiamond_point(K, len(rec.stages), K_NPRIME, demo=rec.demo,
                                       theta=rec.theta or 0.01)
        assert rebuilt.dumps() == text


def test_tampered_recipe_is_rejected(certified):
    bad = PointRecipe.loads(certified.dumps())
    bad.quotients[0] += 1
    assert verify_recipe(K, bad)


def test_demo_schedule(demo):
    assert len(demo.stages) == 4
    j1 = demo.demo_j[0]
    assert demo.demo_j == [j1, j1 + 1, j1 + 2, j1 + 3]
    assert j1 <= K_NPRIME
    assert not any(s.certified for s in demo.stages)
    table = lipschitz_constants(K, K.k * max(demo.demo_j))
    for s, j in zip(demo.stages, demo.demo_j):
        assert s.n_index == K.k * j * s.d
        thr = demo_threshold(table.gamma(K.k * j), 0.01)
        nxt = demo.quotients[s.index] if s.index < len(demo.quotients) else demo.final_quotient
        assert nxt >= thr
    assert verify_recipe(K, demo) == []


def test_approximation_inequality(demo):
    q = demo.quotients
    t = demo.t_hat
    cs = convergents(q)
    with working_precision(4096):
        t_mp = mpfr(t.numerator) / t.denominator
        for i in range(len(q) - 1):
            c, d = cs[i]
            bound = Fraction(1, d * d * q[i + 1])
            assert abs(t - Fraction(c, d)) < bound
            assert abs(t_mp - mpfr(c) / d) < mpfr(bound.numerator) / bound.denominator


def test_denominators_at_least_fibonacci(demo):
    fib = [1, 1]
    for _ in range(len(demo.quotients)):
        fib.append(fib[-1] + fib[-2])
    for i, (_, d) in enumerate(convergents(demo.quotients), start=1):
        assert d >= fib[i]


def test_free_quotients_are_kept():
    rec = build_sdiamond_point(K, 2, K_NPRIME, free_quotients=[[3, 4]], demo=True)
    assert rec.quotients[:2] == [3, 4]
    assert verify_recipe(K, rec) == []


def test_steering_failure_reports_reachable_set():
    # every convergent c/d has gcd(c, d) = 1, so (c, d) = (2, 4) mod 4 is unreachable
    spec = dataclasses.replace(K, d=4, s=4, r=2, u=1)
    with pytest.raises(SteeringFailed) as info:
        build_sdiamond_point(spec, 1, 2)
    assert info.value.reachable
    with pytest.raises(LookupError):
        steer((1, 0, 0, 1), (2, 0), 4, range(1, 5), range(1, 5), max_depth=6)


def test_quotient_comparison_with_symbols():
    assert quotient_exceeds(PowerOfTwo(10), 1000)
    assert not quotient_exceeds(PowerOfTwo(9), 1000)
    assert quotient_exceeds(1 << 20, PowerOfTwo(20))
    assert quotient_exceeds(PowerOfTwo(5), PowerOfTwo(5))
