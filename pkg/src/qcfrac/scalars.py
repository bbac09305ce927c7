"""Numeric foundations: exact cyclotomic arithmetic and big-float helpers.

Two scalar backends are used throughout the package:

* :class:`CyclotomicElement` -- exact elements of Q(zeta_m), stored densely
  modulo ``x**m - 1``.  Zero and equality tests reduce modulo the m-th
  cyclotomic polynomial.
* ``gmpy2.mpc`` -- complex big-floats.  Precision is carried by each value
  and by the active ``gmpy2`` context (thread local), see
  :func:`working_precision`.

The point at infinity of the extended plane is the singleton :data:`INF`;
finite projective points are plain scalars.
"""

from __future__ import annotations

import math
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Iterable, Sequence, Union

import gmpy2
from gmpy2 import mpc, mpfr

Rational = Union[int, Fraction]


class PrecisionExhausted(ArithmeticError):
    """A numeric decision could not be certified within the precision cap."""


# ---------------------------------------------------------------------------
# cyclotomic polynomials
# ---------------------------------------------------------------------------

def _mobius(n: int) -> int:
    result, p = 1, 2
    while p * p <= n:
        if n % p == 0:
            n //= p
            if n % p == 0:
                return 0
            result = -result
        p += 1
    return -result if n > 1 else result


@lru_cache(maxsize=None)
def cyclotomic_polynomial(m: int) -> tuple[int, ...]:
    """Coefficients of Phi_m, lowest degree first.

    Uses Phi_m = prod_{d | m} (x^d - 1)^mu(m/d); multiplying or dividing by
    a binomial x^d - 1 is a linear pass.
    """
    if m < 1:
        raise ValueError("m must be positive")
    divisors = [d for d in range(1, m + 1) if m % d == 0]
    poly = [1]
    for d in divisors:
        if _mobius(m // d) == 1:
            out = [0] * (len(poly) + d)
            for i, c in enumerate(poly):
                out[i + d] += c
                out[i] -= c
            poly = out
    for d in divisors:
        if _mobius(m // d) == -1:
            n = len(poly) - 1 - d
            q = [0] * (n + 1)
            for j in range(n + 1):
                q[j] = (q[j - d] if j >= d else 0) - poly[j]
            poly = q
    if poly[-1] < 0:
        poly = [-c for c in poly]
    return tuple(poly)


def _reduce_mod_phi(coeffs: Sequence[Rational], m: int) -> list[Rational]:
    """Remainder modulo Phi_m, computed over the integers after clearing denominators."""
    phi = cyclotomic_polynomial(m)
    deg = len(phi) - 1
    den = 1
    for c in coeffs:
        if type(c) is Fraction and c.denominator != 1:
            den = den * c.denominator // math.gcd(den, c.denominator)
    rem = [int(c * den) for c in coeffs] if den != 1 else [int(c) for c in coeffs]
    terms = [(j, pj) for j, pj in enumerate(phi[:deg]) if pj]
    for i in range(len(rem) - 1, deg - 1, -1):
        c = rem[i]
        if c:
            rem[i] = 0
            shift = i - deg
            for j, pj in terms:
                rem[shift + j] -= c * pj
    if den == 1:
        return rem[:deg]
    return [Fraction(v, den) if v else 0 for v in rem[:deg]]


def _normalize(c: Rational) -> Rational:
    if type(c) is Fraction and c.denominator == 1:
        return c.numerator
    return c


# ---------------------------------------------------------------------------
# exact cyclotomic elements
# ---------------------------------------------------------------------------

class CyclotomicElement:
    """An element sum_j c_j zeta_m**j of Q(zeta_m), zeta_m = exp(2 pi i/m).

    Coefficients are ints or Fractions.  Instances are immutable.
    """

    __slots__ = ("m", "coeffs", "_support")

    def __init__(self, m: int, coeffs: Iterable[Rational]):
        if m < 1:
            raise ValueError("order m must be >= 1")
        c = list(coeffs)
        if len(c) > m:
            folded = [0] * m
            for j, v in enumerate(c):
                if v:
                    folded[j % m] += v
            c = folded
        else:
            c.extend([0] * (m - len(c)))
        if any(type(v) is not int for v in c):
            c = [_normalize(v) for v in c]
        self.m = m
        self.coeffs = tuple(c)
        self._support = tuple(j for j, v in enumerate(c) if v)

    # constructors -------------------------------------------------------
    @classmethod
    def zero(cls, m: int) -> "CyclotomicElement":
        return cls(m, ())

    @classmethod
    def scalar(cls, m: int, value: Rational) -> "CyclotomicElement":
        return cls(m, (value,))

    @classmethod
    def zeta(cls, m: int, power: int = 1) -> "CyclotomicElement":
        c = [0] * m
        c[power % m] = 1
        return cls(m, c)

    # structure ----------------------------------------------------------
    def lift(self, m: int) -> "CyclotomicElement":
        """Re-express in Q(zeta_m) for a multiple m of the current order."""
        if m == self.m:
            return self
        if m % self.m:
            raise ValueError(f"cannot lift order {self.m} to {m}")
        step = m // self.m
        c = [0] * m
        for j in self._support:
            c[j * step] = self.coeffs[j]
        return CyclotomicElement(m, c)

    def _coerce(self, other) -> tuple["CyclotomicElement", "CyclotomicElement"]:
        if isinstance(other, CyclotomicElement):
            if other.m == self.m:
                return self, other
            L = self.m * other.m // math.gcd(self.m, other.m)
            return self.lift(L), other.lift(L)
        if isinstance(other, (int, Fraction)):
            return self, CyclotomicElement.scalar(self.m, other)
        return NotImplemented, NotImplemented

    @property
    def is_monomial(self) -> bool:
        return len(self._support) == 1

    # ring operations ----------------------------------------------------
    def __add__(self, other):
        a, b = self._coerce(other)
        if a is NotImplemented:
            return NotImplemented
        return CyclotomicElement(a.m, [x + y for x, y in zip(a.coeffs, b.coeffs)])

    __radd__ = __add__

    def __neg__(self):
        return CyclotomicElement(self.m, [-x for x in self.coeffs])

    def __sub__(self, other):
        a, b = self._coerce(other)
        if a is NotImplemented:
            return NotImplemented
        return CyclotomicElement(a.m, [x - y for x, y in zip(a.coeffs, b.coeffs)])

    def __rsub__(self, other):
        return (-self).__add__(other)

    def __mul__(self, other):
        if isinstance(other, (int, Fraction)):
            return CyclotomicElement(self.m, [x * other for x in self.coeffs])
        a, b = self._coerce(other)
        if a is NotImplemented:
            return NotImplemented
        m = a.m
        # iterate over the sparser factor
        if len(a._support) > len(b._support):
            a, b = b, a
        out = [0] * m
        bc = b.coeffs
        for i in a._support:
            ai = a.coeffs[i]
            for j in b._support:
                out[(i + j) % m] += ai * bc[j]
        return CyclotomicElement(m, out)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, (int, Fraction)):
            return CyclotomicElement(self.m, [Fraction(x) / other for x in self.coeffs])
        return self * other.inverse()

    def __pow__(self, e: int):
        if e < 0:
            return self.inverse() ** (-e)
        if self.is_monomial:
            j = self._support[0]
            c = self.coeffs[j]
            out = [0] * self.m
            out[(j * e) % self.m] = c ** e
            return CyclotomicElement(self.m, out)
        result = CyclotomicElement.scalar(self.m, 1)
        base = self
        while e:
            if e & 1:
                result = result * base
            base = base * base
            e >>= 1
        return result

    def conjugate(self) -> "CyclotomicElement":
        """Complex conjugate: zeta**j -> zeta**(-j)."""
        m = self.m
        return CyclotomicElement(m, [self.coeffs[(-j) % m] for j in range(m)])

    def galois(self, r: int) -> "CyclotomicElement":
        """Apply the automorphism zeta -> zeta**r (gcd(r, m) = 1)."""
        if math.gcd(r, self.m) != 1:
            raise ValueError("r must be coprime to m")
        m = self.m
        out = [0] * m
        for j in self._support:
            out[(j * r) % m] = self.coeffs[j]
        return CyclotomicElement(m, out)

    def reduced(self) -> tuple[Rational, ...]:
        """Canonical coefficients modulo Phi_m (length phi(m))."""
        return tuple(_normalize(v) for v in _reduce_mod_phi(self.coeffs, self.m))

    def inverse(self) -> "CyclotomicElement":
        """Multiplicative inverse via extended Euclid modulo Phi_m."""
        if self.is_zero():
            raise ZeroDivisionError("inverse of zero cyclotomic element")
        if self.is_monomial:
            j = self._support[0]
            out = [0] * self.m
            out[(-j) % self.m] = Fraction(1) / self.coeffs[j]
            return CyclotomicElement(self.m, out)
        inv = _poly_inverse_mod([Fraction(v) for v in self.reduced()],
                                [Fraction(v) for v in cyclotomic_polynomial(self.m)])
        return CyclotomicElement(self.m, inv)

    # predicates ---------------------------------------------------------
    def is_zero(self) -> bool:
        if not self._support:
            return True
        return not any(_reduce_mod_phi(self.coeffs, self.m))

    def __eq__(self, other):
        if isinstance(other, (CyclotomicElement, int, Fraction)):
            return (self - other).is_zero()
        return NotImplemented

    __hash__ = None  # equality is only decidable after reduction

    def is_real(self) -> bool:
        return self == self.conjugate()

    def as_rational(self) -> Fraction | None:
        """The rational value of this element, or None if it is irrational."""
        red = self.reduced()
        if any(red[1:]):
            return None
        return Fraction(red[0]) if red else Fraction(0)

    def abs_coeff_sum(self) -> Rational:
        return sum(abs(c) for c in self.coeffs)

    # numerics -----------------------------------------------------------
    def embed(self, bits: int) -> mpc:
        return cyclotomic_embed(self, bits)

    def __repr__(self):
        terms = [f"{c}*z{self.m}^{j}" for j, c in enumerate(self.coeffs) if c]
        return f"Cyc[{' + '.join(terms) or '0'}]"


def _poly_trim(p: list) -> list:
    while p and not p[-1]:
        p.pop()
    return p


def _poly_divmod(a: list, b: list) -> tuple[list, list]:
    a = list(a)
    q = [Fraction(0)] * max(len(a) - len(b) + 1, 1)
    lead = b[-1]
    for i in range(len(a) - len(b), -1, -1):
        c = a[i + len(b) - 1] / lead
        q[i] = c
        if c:
            for j, bj in enumerate(b):
                a[i + j] -= c * bj
    return _poly_trim(q), _poly_trim(a[: len(b) - 1])


def _poly_mul(a: list, b: list) -> list:
    out = [Fraction(0)] * (len(a) + len(b) - 1) if a and b else []
    for i, x in enumerate(a):
        if x:
            for j, y in enumerate(b):
                out[i + j] += x * y
    return _poly_trim(out)


def _poly_sub(a: list, b: list) -> list:
    n = max(len(a), len(b))
    return _poly_trim([(a[i] if i < len(a) else 0) - (b[i] if i < len(b) else 0)
                       for i in range(n)])


def _poly_inverse_mod(a: list, mod: list) -> list:
    r0, r1 = list(mod), _poly_trim(list(a))
    s0, s1 = [], [Fraction(1)]
    while len(r1) > 1:
        q, r = _poly_divmod(r0, r1)
        r0, r1 = r1, r
        s0, s1 = s1, _poly_sub(s0, _poly_mul(q, s1))
    c = r1[0]
    return [x / c for x in s1]


# ---------------------------------------------------------------------------
# big-float helpers
# ---------------------------------------------------------------------------

def working_precision(bits: int):
    """Context manager setting the gmpy2 working precision for this thread."""
    return gmpy2.context(gmpy2.get_context(), precision=bits)


@lru_cache(maxsize=256)
def _root_powers(m: int, bits: int) -> tuple[mpc, ...]:
    with working_precision(bits):
        tau = 2 * gmpy2.const_pi()
        return tuple(mpc(gmpy2.cos(tau * j / m), gmpy2.sin(tau * j / m))
                     for j in range(m))


def exp_2pi_i(t: Fraction | int, bits: int) -> mpc:
    """exp(2 pi i t) for rational t, with exact reduction of t modulo 1."""
    t = Fraction(t)
    t -= math.floor(t)
    with working_precision(bits + 16):
        ang = 2 * gmpy2.const_pi() * mpfr(t.numerator) / t.denominator
        z = mpc(gmpy2.cos(ang), gmpy2.sin(ang))
    with working_precision(bits):
        return +z


def cyclotomic_embed(c: CyclotomicElement, bits: int) -> mpc:
    """Numerical value of c at the given precision (guard bits included)."""
    height = max(1, int(max((abs(x) for x in c.coeffs), default=1)) + 1)
    guard = 16 + height.bit_length() + c.m.bit_length()
    powers = _root_powers(c.m, bits + guard)
    with working_precision(bits + guard):
        acc = mpc(0)
        for j in c._support:
            v = c.coeffs[j]
            if isinstance(v, Fraction):
                acc += powers[j] * (mpfr(v.numerator) / v.denominator)
            else:
                acc += powers[j] * v
    with working_precision(bits):
        return +acc


def cyclotomic_is_zero(c: CyclotomicElement) -> bool:
    return c.is_zero()


def to_mpc(x, bits: int) -> mpc:
    """Coerce any supported scalar to an mpc at the given precision."""
    if isinstance(x, CyclotomicElement):
        return cyclotomic_embed(x, bits)
    with working_precision(bits):
        if isinstance(x, Fraction):
            return mpc(mpfr(x.numerator) / x.denominator)
        return mpc(x)


def mp_equal_prefix(a: mpc, b: mpc, bits: int) -> bool:
    """True when a and b agree to about ``bits`` relative bits."""
    with working_precision(bits + 16):
        scale = abs(a) + abs(b)
        if scale == 0:
            return True
        return abs(a - b) <= scale * mpfr(2) ** (-bits)


def certify(fn: Callable[[int], mpc], bits: int, max_bits: int = 8192) -> mpc:
    """Evaluate ``fn`` at doubling precisions until successive values agree.

    Agreement is required on the first ``bits`` relative bits; the higher
    precision value is returned.  Raises :class:`PrecisionExhausted` when
    ``max_bits`` is reached first.
    """
    prev = fn(bits)
    p = bits
    while p < max_bits:
        p *= 2
        cur = fn(p)
        if mp_equal_prefix(prev, cur, bits):
            return cur
        prev = cur
    raise PrecisionExhausted(f"no agreement up to {max_bits} bits")


def certified_sign(fn: Callable[[int], mpfr], bits: int = 64,
                   max_bits: int = 8192) -> int:
    """Sign of a real quantity known to be nonzero, decided by escalation."""
    p = bits
    while p <= max_bits:
        lo, hi = fn(p), fn(2 * p)
        with working_precision(2 * p):
            tol = (abs(lo) + abs(hi) + 1) * mpfr(2) ** (-(p // 2))
            if abs(hi) > tol and (lo > 0) == (hi > 0):
                return 1 if hi > 0 else -1
        p *= 2
    raise PrecisionExhausted("sign undecided")


# ---------------------------------------------------------------------------
# extended plane
# ---------------------------------------------------------------------------

class _Infinity:
    """The point at infinity of the Riemann sphere."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "INF"

    def __eq__(self, other):
        return other is self

    def __hash__(self):
        return hash("qcfrac.INF")

    def __reduce__(self):
        return (_Infinity, ())


INF = _Infinity()


def is_infinite(w) -> bool:
    return w is INF


def chordal_distance(w, z, bits: int = 256) -> mpfr:
    """Chordal metric on the extended plane.

    Finite arguments may be any scalar accepted by :func:`to_mpc`.
    """
    with working_precision(bits):
        if w is INF and z is INF:
            return mpfr(0)
        if w is INF:
            w, z = z, w
        wf = to_mpc(w, bits)
        if z is INF:
            return 1 / gmpy2.sqrt(1 + gmpy2.norm(wf))
        zf = to_mpc(z, bits)
        return abs(zf - wf) / (gmpy2.sqrt(1 + gmpy2.norm(wf)) * gmpy2.sqrt(1 + gmpy2.norm(zf)))


class UnitPoint:
    """exp(2 pi i t) for an exact rational t; powers reduce t*e exactly mod 1."""

    __slots__ = ("t",)

    def __init__(self, t):
        t = Fraction(t)
        self.t = t - math.floor(t)

    def at(self, bits: int) -> mpc:
        return exp_2pi_i(self.t, bits)

    def power(self, e: int, bits: int) -> mpc:
        return exp_2pi_i(self.t * e, bits)

    def __repr__(self):
        return f"UnitPoint({self.t})"
