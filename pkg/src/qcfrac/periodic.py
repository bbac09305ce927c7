"""Exact analysis of the continued fraction at a primitive root of unity.

At q = exp(2 pi i r/m) the partial quotients are periodic with period km, so
the approximants at indices jkm + r are governed by powers of the block
matrix

    M = [[P_{km-1}, a_{km} P_{km-2}],
         [Q_{km-1}, a_{km} Q_{km-2}]].

Eigenvalues live in Q(zeta_m)(sqrt(K5)), K5 = T**2 - 4D; they are handled by
:class:`QuadElement` with the square root kept symbolic.  The square root is
embedded numerically as the principal branch everywhere, so a sign attached
to the symbol is meaningful.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import gmpy2
import numpy as np
from gmpy2 import mpc, mpfr

from .family import FamilySpec, partial_numerator, run_recurrence
from .scalars import (
    INF,
    CyclotomicElement,
    certified_sign,
    cyclotomic_embed,
    working_precision,
)


class DegenerateBlock(ArithmeticError):
    """det M = 0: some partial numerator a_i vanishes in the first period."""


class UndefinedH(ArithmeticError):
    """H(q) = q**eta / G(q) is undefined (divergent or zero limit)."""


class TableMismatch(AssertionError):
    def __init__(self, m, r, fieldname, detail=""):
        super().__init__(f"m={m} r={r} field={fieldname} {detail}".strip())
        self.m, self.r, self.field = m, r, fieldname


def _cyc(x, m: int = 1) -> CyclotomicElement:
    if isinstance(x, CyclotomicElement):
        return x
    return CyclotomicElement.scalar(m, x)


def _common(*xs: CyclotomicElement) -> list[CyclotomicElement]:
    L = 1
    for x in xs:
        L = L * x.m // math.gcd(L, x.m)
    return [x.lift(L) for x in xs]


# ---------------------------------------------------------------------------
# Q(zeta_m)(sqrt K)
# ---------------------------------------------------------------------------

class QuadElement:
    """alpha + beta * sqrt(radicand) with alpha, beta, radicand cyclotomic.

    A radicand that is a rational number is kept at order 1 so that
    elements built at different m share the same square root.
    """

    __slots__ = ("alpha", "beta", "radicand")

    def __init__(self, alpha, beta, radicand):
        radicand = _cyc(radicand)
        rat = radicand.as_rational()
        if rat is not None:
            radicand = CyclotomicElement.scalar(1, rat)
        alpha, beta = _cyc(alpha), _cyc(beta)
        alpha, beta = _common(alpha, beta)
        self.alpha, self.beta, self.radicand = alpha, beta, radicand

    @property
    def order(self) -> int:
        return self.alpha.m

    def _like(self, other) -> "QuadElement":
        if isinstance(other, QuadElement):
            if not _same_radicand(self.radicand, other.radicand):
                raise ValueError("incompatible square roots")
            return other
        return QuadElement(_cyc(other), 0, self.radicand)

    def __add__(self, other):
        o = self._like(other)
        return QuadElement(self.alpha + o.alpha, self.beta + o.beta, self.radicand)

    __radd__ = __add__

    def __neg__(self):
        return QuadElement(-self.alpha, -self.beta, self.radicand)

    def __sub__(self, other):
        return self + (-self._like(other))

    def __rsub__(self, other):
        return self._like(other) - self

    def __mul__(self, other):
        if isinstance(other, (int, Fraction, CyclotomicElement)):
            return QuadElement(self.alpha * other, self.beta * other, self.radicand)
        o = self._like(other)
        K = self.radicand
        return QuadElement(self.alpha * o.alpha + self.beta * o.beta * K,
                           self.alpha * o.beta + self.beta * o.alpha, K)

    __rmul__ = __mul__

    def __pow__(self, e: int):
        result = QuadElement(1, 0, self.radicand)
        base = self
        while e:
            if e & 1:
                result = result * base
            base = base * base
            e >>= 1
        return result

    def scale(self, c) -> "QuadElement":
        """Divide by a nonzero cyclotomic or rational scalar."""
        if isinstance(c, (int, Fraction)):
            inv = Fraction(1) / c
        else:
            inv = c.inverse()
        return self * inv

    def divide_by_root(self) -> "QuadElement":
        """self / sqrt(radicand)."""
        K = self.radicand
        return QuadElement(self.beta * K, self.alpha, K).scale(K)

    def embed(self, bits: int) -> mpc:
        guard = bits + 32
        with working_precision(guard):
            s = gmpy2.sqrt(cyclotomic_embed(self.radicand, guard))
            v = cyclotomic_embed(self.alpha, guard) + cyclotomic_embed(self.beta, guard) * s
        with working_precision(bits):
            return +v

    def is_rational_part_only(self) -> bool:
        return self.beta.is_zero()

    def _clearly_nonzero(self) -> bool:
        # embedding error at 96 bits is far below 2**-40 times the coefficient mass
        mass = self.alpha.abs_coeff_sum() + self.beta.abs_coeff_sum() * (
            1 + self.radicand.abs_coeff_sum())
        if mass == 0:
            return False
        with working_precision(96):
            return abs(self.embed(96)) > mpfr(mass) * mpfr(2) ** -40

    def is_zero(self) -> bool:
        if self._clearly_nonzero():
            return False
        if self.beta.is_zero():
            return self.alpha.is_zero()
        if self.alpha.is_zero():
            return self.radicand.is_zero()
        if not (self.alpha * self.alpha - self.beta * self.beta * self.radicand).is_zero():
            return False
        # alpha = +-beta*sqrt(K); exactly one sign vanishes, the other is 2*alpha
        bits = 128
        while True:
            with working_precision(bits):
                plus = abs(self.embed(bits))
                minus = abs((QuadElement(self.alpha, -self.beta, self.radicand)).embed(bits))
                if abs(plus - minus) > (plus + minus) * mpfr(2) ** (-bits // 2):
                    return plus < minus
            bits *= 2

    def __eq__(self, other):
        if isinstance(other, (QuadElement, CyclotomicElement, int, Fraction)):
            return (self - other).is_zero()
        return NotImplemented

    __hash__ = None

    def conjugate_root(self) -> "QuadElement":
        return QuadElement(self.alpha, -self.beta, self.radicand)

    def __repr__(self):
        return f"Quad({self.alpha!r} + {self.beta!r}*sqrt({self.radicand!r}))"


def _same_radicand(a: CyclotomicElement, b: CyclotomicElement) -> bool:
    return a is b or a == b


@dataclass
class QuadFraction:
    """num / den, both QuadElements (den usually a plain cyclotomic)."""

    num: QuadElement
    den: QuadElement

    def embed(self, bits: int) -> mpc:
        with working_precision(bits + 16):
            v = self.num.embed(bits + 16) / self.den.embed(bits + 16)
        with working_precision(bits):
            return +v

    def equals(self, other: "QuadFraction") -> bool:
        return (self.num * other.den - other.num * self.den).is_zero()

    def is_zero(self) -> bool:
        return self.num.is_zero()


# ---------------------------------------------------------------------------
# roots of unity and the block matrix
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RootOfUnity:
    m: int
    r: int = 1

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("m must be positive")
        if self.m == 1:
            object.__setattr__(self, "r", 0)
        elif not (0 < self.r < self.m) or math.gcd(self.r, self.m) != 1:
            raise ValueError(f"r={self.r} is not a unit modulo m={self.m}")

    @property
    def q(self) -> CyclotomicElement:
        return CyclotomicElement.zeta(self.m, self.r)

    @property
    def t(self) -> Fraction:
        return Fraction(self.r, self.m)

    def power_eta(self, eta: Fraction) -> CyclotomicElement:
        """q**eta on the principal lift r/m in [0, 1)."""
        e = Fraction(self.r, self.m) * eta
        order = e.denominator
        return CyclotomicElement.zeta(order, e.numerator % order)


def units(m: int) -> list[int]:
    if m == 1:
        return [0]
    return [r for r in range(1, m) if math.gcd(r, m) == 1]


class Classification(enum.Enum):
    EQUAL_EIGENVALUES = "EqualEigenvalues"
    DISTINCT_MODULUS = "DistinctModulus"
    EQUAL_MODULUS_DISTINCT = "EqualModulusDistinct"


@dataclass
class BlockAnalysis:
    """The period block matrix at one root of unity and everything derived from it."""

    m: int
    r: int
    k: int
    a_km: CyclotomicElement
    P1: CyclotomicElement  # P_{km-1}
    P2: CyclotomicElement  # P_{km-2}
    Q1: CyclotomicElement  # Q_{km-1}
    Q2: CyclotomicElement  # Q_{km-2}
    prod_a: CyclotomicElement | None = None
    heads: list = field(default_factory=list)  # (P_r, Q_r) for r = 0..km-1
    eta: Fraction = Fraction(0)
    family: str = "synthetic"
    # filled by classify()
    classification: Classification | None = None
    divergent: bool = False
    reason: str = ""
    lam_dom: QuadElement | None = None
    lam_sub: QuadElement | None = None
    root_sign: int = 0
    limit: QuadFraction | None = None
    witness: dict = field(default_factory=dict)

    @property
    def matrix(self) -> list[list[CyclotomicElement]]:
        return [[self.P1, self.a_km * self.P2], [self.Q1, self.a_km * self.Q2]]

    @property
    def T(self) -> CyclotomicElement:
        return self.P1 + self.a_km * self.Q2

    @property
    def D(self) -> CyclotomicElement:
        (a, b), (c, d) = self.matrix
        return a * d - b * c

    @property
    def K5(self) -> CyclotomicElement:
        T = self.T
        return T * T - 4 * self.D

    @property
    def verdict(self) -> str:
        if self.classification is None:
            return "Unclassified"
        return "Divergent" if self.divergent else self.classification.value

    @property
    def convergent(self) -> bool:
        return self.classification is not None and not self.divergent

    @classmethod
    def from_matrix(cls, M, a_km=1, eta=Fraction(1)) -> "BlockAnalysis":
        """Synthetic block from a 2x2 matrix [[a, a_km*P2], [c, a_km*Q2]]."""
        (a, b), (c, d) = [[_cyc(x) for x in row] for row in M]
        a_km = _cyc(a_km)
        a, b, c, d, a_km = _common(a, b, c, d, a_km)
        return cls(m=a.m, r=0, k=1, a_km=a_km, P1=a, P2=b * a_km.inverse(),
                   Q1=c, Q2=d * a_km.inverse(), eta=Fraction(eta))

    def galois(self, r: int) -> "BlockAnalysis":
        """The block at zeta_m**r, obtained from the block at zeta_m."""
        g = lambda x: x.galois(r) if x is not None else None
        return BlockAnalysis(self.m, r, self.k, g(self.a_km), g(self.P1), g(self.P2),
                             g(self.Q1), g(self.Q2), g(self.prod_a),
                             [(g(P), g(Q)) for P, Q in self.heads], self.eta, self.family)


def _canon(x: CyclotomicElement) -> CyclotomicElement:
    """Reduced representative; keeps coefficients small for later numerics."""
    return CyclotomicElement(x.m, x.reduced())


def block_matrix(spec: FamilySpec, root: RootOfUnity, rec2_checks: int = 5) -> BlockAnalysis:
    """Assemble M from an exact recurrence run to index km.

    With ``rec2_checks`` > 0 the block is also checked against a direct
    recurrence run over that many further periods.
    """
    km = spec.k * root.m
    q = root.q
    states = run_recurrence(spec, q, km)
    a_km = partial_numerator(spec, km, q)
    st1 = states[km - 1]
    blk = BlockAnalysis(
        m=root.m, r=root.r, k=spec.k, a_km=_canon(a_km), P1=_canon(st1.P),
        P2=_canon(st1.P_prev), Q1=_canon(st1.Q), Q2=_canon(st1.Q_prev),
        prod_a=_canon(states[km].prod_a),
        heads=[(_canon(s.P), _canon(s.Q)) for s in states[:km]],
        eta=spec.eta, family=spec.name)
    if blk.D.is_zero():
        raise DegenerateBlock(f"{spec.name}: det M = 0 at m={root.m}, r={root.r}")
    if rec2_checks and not verify_rec2(spec, root, blk, rec2_checks):
        raise ArithmeticError("block powers disagree with the recurrence")
    return blk


def detint_holds(blk: BlockAnalysis) -> bool:
    """det M = (-1)**km * prod_{i<=km} a_i."""
    sign = 1 if (blk.k * blk.m) % 2 == 0 else -1
    return blk.D == blk.prod_a * sign


# ---------------------------------------------------------------------------
# classification
# ---------------------------------------------------------------------------

def _real_part_sign(x: QuadElement) -> int:
    return certified_sign(lambda p: x.embed(p).real)


def classify(blk: BlockAnalysis) -> BlockAnalysis:
    """Decide the eigenvalue trichotomy and the limit G(q); fills ``blk`` in place."""
    D = blk.D
    if D.is_zero():
        raise DegenerateBlock("det M = 0")
    T, K5 = blk.T, blk.K5
    a, dd, c = blk.P1, blk.a_km * blk.Q2, blk.Q1
    if K5.is_zero():
        blk.classification = Classification.EQUAL_EIGENVALUES
        lam = QuadElement(T * Fraction(1, 2), 0, K5)
        blk.lam_dom = blk.lam_sub = lam
        if c.is_zero():
            blk.divergent = True
            blk.reason = "Q_{km-1} = 0"
            return blk
        blk.limit = QuadFraction(QuadElement(a - dd, 0, K5), QuadElement(2 * c, 0, K5))
        return blk
    # distinct eigenvalues (T +- s)/2, s = sqrt(K5)
    half = Fraction(1, 2)
    plus = QuadElement(T * half, half, K5)
    minus = QuadElement(T * half, -half, K5)
    equal_modulus = False
    if T.is_zero():
        equal_modulus = True
    else:
        w = T * T * K5.conjugate()
        if w.is_real():
            sgn = certified_sign(lambda p: w.embed(p).real)
            equal_modulus = sgn < 0
    if equal_modulus:
        blk.classification = Classification.EQUAL_MODULUS_DISTINCT
        blk.divergent = True
        blk.reason = "|lambda1| = |lambda2|, lambda1 != lambda2"
        blk.lam_dom, blk.lam_sub = plus, minus
        blk.witness = _equal_modulus_witness(blk, plus, minus)
        return blk
    # sign of Re(T * conj(s)) decides which root dominates
    sign = certified_sign(lambda p: _re_t_sbar(T, K5, p))
    blk.root_sign = sign
    blk.lam_dom, blk.lam_sub = (plus, minus) if sign > 0 else (minus, plus)
    blk.classification = Classification.DISTINCT_MODULUS
    if c.is_zero():
        blk.divergent = True
        blk.reason = "Q_{km-1} = 0"
        return blk
    # residues whose start vector has no dominant component converge elsewhere
    idx = _first_subdominant_head(blk, c, dd, T, K5)
    if idx is not None:
        blk.divergent = True
        blk.reason = f"start vector r={idx} lies on the subdominant eigenvector"
        return blk
    blk.limit = QuadFraction(blk.lam_dom - dd, QuadElement(c, 0, K5))
    return blk


def _first_subdominant_head(blk, c, dd, T, K5) -> int | None:
    """First r with c P_r = (lam_sub - d) Q_r, or None.

    A float64 pass screens all start vectors at once; only values that are
    numerically small are settled by the exact test
    ((T - 2d) Q_r - 2c P_r) + sigma Q_r sqrt(K5) = 0.
    """
    if not blk.heads:
        return None
    m = blk.m
    sub_sign = 1 if blk.lam_sub.beta == Fraction(1, 2) else -1
    zeta = np.exp(2j * np.pi * np.arange(m) / m)
    Pc = np.array([P.coeffs for P, _ in blk.heads], dtype=float)
    Qc = np.array([Q.coeffs for _, Q in blk.heads], dtype=float)
    Pv, Qv = Pc @ zeta, Qc @ zeta
    cv, dv = complex(cyclotomic_embed(c, 64)), complex(cyclotomic_embed(dd, 64))
    lv = complex(blk.lam_sub.embed(64))
    vals = np.abs(cv * Pv - (lv - dv) * Qv)
    mass = (abs(cv) + 1) * np.abs(Pc).sum(axis=1) + (abs(lv - dv) + 1) * np.abs(Qc).sum(axis=1)
    # float64 dot products of length m: error below (m + 4) * 2**-50 * mass
    tol = (m + 4) * 2.0 ** -50 * mass
    for idx in np.nonzero(vals <= tol)[0]:
        P, Q = blk.heads[idx]
        test = QuadElement((T - 2 * dd) * Q - 2 * c * P, Q * sub_sign, K5)
        if test.is_zero():
            return int(idx)
    return None


def _re_t_sbar(T: CyclotomicElement, K5: CyclotomicElement, bits: int) -> mpfr:
    with working_precision(bits + 16):
        s = gmpy2.sqrt(cyclotomic_embed(K5, bits + 16))
        v = cyclotomic_embed(T, bits + 16) * mpc(s.real, -s.imag)
        return v.real


def _equal_modulus_witness(blk: BlockAnalysis, l1: QuadElement, l2: QuadElement,
                           bits: int = 64) -> dict:
    """Coordinates (p_r, q_r) of the start vectors in the eigenbasis."""
    out = {"lambda1": _c2s(l1.embed(bits)), "lambda2": _c2s(l2.embed(bits)), "coords": []}
    if blk.Q1.is_zero():
        return out
    dd = blk.a_km * blk.Q2
    with working_precision(bits):
        c = cyclotomic_embed(blk.Q1, bits)
        x1 = (l1.embed(bits) - cyclotomic_embed(dd, bits)) / c
        y1 = (l2.embed(bits) - cyclotomic_embed(dd, bits)) / c
        for idx, (P, Q) in enumerate(blk.heads[:2]):
            Pn, Qn = cyclotomic_embed(P, bits), cyclotomic_embed(Q, bits)
            p = (Pn - y1 * Qn) / (x1 - y1)
            qq = Qn - p
            out["coords"].append({"r": idx, "p": _c2s(p), "q": _c2s(qq)})
    return out


def _c2s(z: mpc) -> list[str]:
    return [f"{float(z.real):.12g}", f"{float(z.imag):.12g}"]


# ---------------------------------------------------------------------------
# verification of the block data
# ---------------------------------------------------------------------------

def eigenvector_residuals(blk: BlockAnalysis) -> list[bool]:
    """Exact check M (lam - d, c)^T = lam (lam - d, c)^T for each eigenvalue."""
    (a, b), (c, d) = blk.matrix
    out = []
    for lam in (blk.lam_dom, blk.lam_sub):
        if lam is None:
            continue
        v0 = lam - d
        top = v0 * a + QuadElement(b * c, 0, lam.radicand) - lam * v0
        bottom = v0 * c + QuadElement(d * c, 0, lam.radicand) - lam * c
        out.append(top.is_zero() and bottom.is_zero())
    return out


def matmul(A, B):
    return [[A[0][0] * B[0][0] + A[0][1] * B[1][0], A[0][0] * B[0][1] + A[0][1] * B[1][1]],
            [A[1][0] * B[0][0] + A[1][1] * B[1][0], A[1][0] * B[0][1] + A[1][1] * B[1][1]]]


def matrix_power(M, j: int):
    """M**j by repeated multiplication (the reference for the closed forms)."""
    if j < 1:
        raise ValueError("j must be >= 1")
    R = M
    for _ in range(j - 1):
        R = matmul(R, M)
    return R


def verify_rec2(spec: FamilySpec, root: RootOfUnity, blk: BlockAnalysis, jmax: int = 5,
                residues: list[int] | None = None) -> bool:
    """(P_{jkm+r}, Q_{jkm+r}) = M^j (P_r, Q_r) against a direct recurrence run."""
    km = blk.k * blk.m
    states = run_recurrence(spec, root.q, (jmax + 1) * km)
    M = blk.matrix
    Mj = M
    rs = range(km) if residues is None else residues
    for j in range(1, jmax + 1):
        for r in rs:
            P, Q = blk.heads[r]
            st = states[j * km + r]
            if not (Mj[0][0] * P + Mj[0][1] * Q == st.P and Mj[1][0] * P + Mj[1][1] * Q == st.Q):
                return False
        Mj = matmul(Mj, M)
    return True


def block_power_closed_form(blk: BlockAnalysis, j: int):
    """M**j from the eigen-decomposition; entries are exact cyclotomic elements."""
    if j < 1:
        raise ValueError("j must be >= 1")
    if blk.classification is None:
        classify(blk)
    (a, b), (c, d) = blk.matrix
    if blk.classification is Classification.EQUAL_EIGENVALUES:
        if c.is_zero():
            lam = blk.T * Fraction(1, 2)
            # upper triangular with a = d = lam
            return [[lam ** j, lam ** (j - 1) * b * j], [c, lam ** j]]
        s = a + d
        diff = a - d
        pref = s ** (j - 1) * Fraction(1, 2 ** (j + 1))
        cinv = c.inverse()
        return [[pref * (diff * j + s) * 2, pref * (-j) * diff * diff * cinv],
                [pref * 4 * j * c, pref * (s - diff * j) * 2]]
    l1, l2 = blk.lam_dom, blk.lam_sub
    X1, Y1 = l1 - d, l2 - d          # x1 = X1/c, y1 = Y1/c
    p1, p2 = l1 ** j, l2 ** j
    den = X1 - Y1                    # = +-sqrt(K5), never zero here
    entries = [[X1 * p1 - Y1 * p2, None], [(p1 - p2) * c, X1 * p2 - Y1 * p1]]
    if c.is_zero():
        # upper triangular: eigenvectors are not of the form (x, 1)
        lam_a, lam_d = a, d
        top = (lam_a ** j - lam_d ** j) * b * (lam_a - lam_d).inverse()
        return [[lam_a ** j, top], [c, lam_d ** j]]
    entries[0][1] = -(X1 * Y1 * (p1 - p2)).scale(c)
    out = []
    for row in entries:
        out_row = []
        for e in row:
            v = (e * den.conjugate_root()).scale(den.alpha * den.alpha - den.beta * den.beta * den.radicand)
            if not v.beta.is_zero():
                raise ArithmeticError("closed form left the base field")
            out_row.append(v.alpha)
        out.append(out_row)
    return out


def matrices_equal(A, B) -> bool:
    return all(A[i][j] == B[i][j] for i in range(2) for j in range(2))


# ---------------------------------------------------------------------------
# limits, H values
# ---------------------------------------------------------------------------

@dataclass
class HValue:
    m: int
    r: int
    exact: QuadFraction
    numeric: mpc


def limit_value(blk: BlockAnalysis, bits: int = 256):
    """G(q) as an mpc, or None when divergent."""
    if blk.classification is None:
        classify(blk)
    if blk.divergent:
        return None
    return blk.limit.embed(bits)


def h_value(spec: FamilySpec, root: RootOfUnity, blk: BlockAnalysis | None = None,
            bits: int = 256) -> HValue:
    """H(q) = q**eta / G(q) with the principal lift of r/m."""
    if blk is None:
        blk = classify(block_matrix(spec, root, rec2_checks=0))
    elif blk.classification is None:
        classify(blk)
    if blk.divergent:
        raise UndefinedH(f"G diverges at m={root.m}, r={root.r}")
    if blk.limit.is_zero():
        raise UndefinedH(f"G vanishes at m={root.m}, r={root.r}")
    qeta = root.power_eta(spec.eta)
    K = blk.limit.num.radicand
    exact = QuadFraction(blk.limit.den * qeta, blk.limit.num)
    exact = QuadFraction(QuadElement(exact.num.alpha, exact.num.beta, K),
                         QuadElement(exact.den.alpha, exact.den.beta, K))
    return HValue(root.m, root.r, exact, exact.embed(bits))


class HValueTable:
    """H values keyed by (m mod d, r mod d)."""

    def __init__(self, family: str, d: int):
        self.family, self.d = family, d
        self.values: dict[tuple[int, int], HValue] = {}

    def record(self, h: HValue) -> bool:
        """Store ``h``; returns False when it contradicts a stored value of its class."""
        key = (h.m % self.d, h.r % self.d)
        old = self.values.get(key)
        if old is None:
            self.values[key] = h
            return True
        return old.exact.equals(h.exact)

    def distinct_values(self) -> list[HValue]:
        reps: list[HValue] = []
        for h in self.values.values():
            if not any(h.exact.equals(x.exact) for x in reps):
                reps.append(h)
        return reps

    def __len__(self):
        return len(self.values)


# ---------------------------------------------------------------------------
# the Rogers-Ramanujan closed evaluation
# ---------------------------------------------------------------------------

PHI = QuadElement(Fraction(1, 2), Fraction(1, 2), 5)
PHI_INV = QuadElement(Fraction(-1, 2), Fraction(1, 2), 5)


@dataclass
class SchurValue:
    m: int
    r: int
    divergent: bool
    legendre: int = 0
    sigma: int = 0
    exponent: int = 0
    value: QuadFraction | None = None


def legendre5(m: int) -> int:
    res = m % 5
    if res == 0:
        return 0
    return 1 if res in (1, 4) else -1


def schur_value(root: RootOfUnity) -> SchurValue:
    """K(q) = lambda * q**((1 - lambda*sigma*m)/5) * K(lambda), or divergence for 5 | m."""
    m, r = root.m, root.r
    lam = legendre5(m)
    if lam == 0:
        return SchurValue(m, r, True)
    sigma = m % 5
    num = 1 - lam * sigma * m
    if num % 5:
        raise ArithmeticError("non-integral exponent")
    e = num // 5
    base = PHI if lam == 1 else PHI_INV
    qe = CyclotomicElement.zeta(m, r * e)
    val = base * (qe * lam)
    return SchurValue(m, r, False, lam, sigma, e,
                      QuadFraction(val, QuadElement(CyclotomicElement.scalar(m, 1), 0, 5)))


@dataclass
class SchurReport:
    m_max: int
    tolerance_bits: int
    compared: int = 0
    divergent: int = 0
    mismatches: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"m_max": self.m_max, "tolerance_bits": self.tolerance_bits,
                "compared": self.compared, "divergent": self.divergent,
                "mismatches": self.mismatches}


def schur_check(spec: FamilySpec, m_max: int, bits: int = 256,
                tolerance_bits: int = 200) -> SchurReport:
    """Compare block classification of K with the closed evaluation at every root of order <= m_max."""
    report = SchurReport(m_max, tolerance_bits)
    tol = mpfr(2) ** -tolerance_bits
    for m in range(1, m_max + 1):
        for r, blk in blocks_at_all_residues(spec, m):
            root = RootOfUnity(m, r)
            classify(blk)
            sv = schur_value(root)
            report.compared += 1
            if sv.divergent or blk.divergent:
                report.divergent += int(sv.divergent and blk.divergent)
                if sv.divergent != blk.divergent:
                    report.mismatches.append({"m": m, "r": r, "field": "verdict",
                                              "block": blk.verdict})
                continue
            with working_precision(bits):
                g, want = blk.limit.embed(bits), sv.value.embed(bits)
                err = abs(g - want) / abs(want)
            if err > tol:
                report.mismatches.append({"m": m, "r": r, "field": "value",
                                          "relative_error": format(err, ".6g")})
    return report


# ---------------------------------------------------------------------------
# the tabulated progressions
# ---------------------------------------------------------------------------

def _qpow(root: RootOfUnity, e: Fraction, sign: int = 1) -> CyclotomicElement:
    if Fraction(e).denominator != 1:
        raise ArithmeticError(f"non-integral exponent {e}")
    return CyclotomicElement.zeta(root.m, root.r * int(e)) * sign


def _eps(m: int) -> int:
    return -1 if ((m - 1) // 4) % 2 else 1


@dataclass(frozen=True)
class TableRow:
    """Constants fixed along the progression m = s mod d."""

    K0: int
    K1: int
    K2: int
    K3: int
    K4: int
    radicand: int
    q1: Callable[[RootOfUnity], CyclotomicElement]
    p2: Callable[[RootOfUnity], CyclotomicElement]
    h: Callable[[int], tuple[QuadElement, QuadElement]]


def _qe(alpha, beta, K) -> QuadElement:
    return QuadElement(alpha, beta, K)


PROGRESSION_TABLE: dict[str, TableRow] = {
    "K": TableRow(
        1, 1, 0, 1, 1, 5,
        q1=lambda rt: _qpow(rt, Fraction(rt.m - 1, 5)),
        p2=lambda rt: _qpow(rt, Fraction(1 - rt.m, 5)),
        h=lambda r: (_qe(CyclotomicElement.zeta(5, r) * 2, 0, 5), _qe(1, 1, 5))),
    "S1": TableRow(
        2, 2, 1, 1, 1, 8,
        q1=lambda rt: _qpow(rt, Fraction(rt.m ** 2 - 1, 8), _eps(rt.m)),
        p2=lambda rt: _qpow(rt, Fraction((rt.m - 1) ** 2, 8), _eps(rt.m)),
        # 1/(sqrt2 * zeta8^-r) = 2 zeta8^r / sqrt8
        h=lambda r: (_qe(CyclotomicElement.zeta(8, r) * 2, 0, 8), _qe(0, 1, 8))),
    "S2": TableRow(
        1, 3, 1, 1, 1, 8,
        q1=lambda rt: _qpow(rt, Fraction(rt.m - 1, 2)),
        p2=lambda rt: _qpow(rt, Fraction(rt.m + 1, 2)),
        # 1/((1 + sqrt8/2) (-1)^r)
        h=lambda r: (_qe(2 * (-1) ** r, 0, 8), _qe(2, 1, 8))),
    "S3": TableRow(
        2, 1, 0, 1, 1, 9,
        q1=lambda rt: _qpow(rt, Fraction(rt.m - 1, 3)),
        p2=lambda rt: _qpow(rt, Fraction(2 * rt.m + 1, 3)),
        h=lambda r: (_qe(CyclotomicElement.zeta(3, -2 * r), 0, 9), _qe(2, 0, 9))),
}


@dataclass
class TableReport:
    family: str
    exploratory: bool
    checked: list[tuple[int, int]] = field(default_factory=list)
    observations: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"family": self.family, "exploratory": self.exploratory,
                "checked": [list(x) for x in self.checked],
                "observations": self.observations}


def progression(spec: FamilySpec, m_max: int) -> list[int]:
    return [m for m in range(spec.s, m_max + 1, spec.d) if m >= 1]


def blocks_at_all_residues(spec: FamilySpec, m: int, rec2_checks: int = 0):
    base = block_matrix(spec, RootOfUnity(m, 1 if m > 1 else 0), rec2_checks=rec2_checks)
    for r in units(m):
        yield r, (base if r in (0, 1) else base.galois(r))


def table_check(spec: FamilySpec, m_max: int, residues: int | None = None) -> TableReport:
    """Verify the tabulated block data exactly along the family's progression.

    ``residues`` limits the number of residues r examined per m (all by
    default).  Families without a table entry are run in exploratory mode:
    the same quantities are recorded, and nothing is asserted.
    """
    row = PROGRESSION_TABLE.get(spec.name)
    report = TableReport(spec.name, exploratory=row is None or spec.experimental)
    for m in progression(spec, m_max):
        for count, (r, blk) in enumerate(blocks_at_all_residues(spec, m)):
            if residues is not None and count >= residues:
                break
            root = RootOfUnity(m, r)
            if report.exploratory:
                report.observations.append(_observe(blk, m, r))
                continue
            _check_row(spec, row, root, blk)
            report.checked.append((m, r))
    return report


def _observe(blk: BlockAnalysis, m: int, r: int) -> dict:
    prod = blk.Q1 * blk.P2
    obs = {"m": m, "r": r}
    for name, val in (("a_km", blk.a_km), ("P_km-1", blk.P1), ("Q_km-2", blk.Q2),
                      ("Q_km-1*P_km-2", prod), ("|Q_km-1|^2", blk.Q1 * blk.Q1.conjugate())):
        rat = val.as_rational()
        obs[name] = str(rat) if rat is not None else "irrational"
    return obs


def _check_row(spec: FamilySpec, row: TableRow, root: RootOfUnity, blk: BlockAnalysis) -> None:
    m, r = root.m, root.r
    checks = [
        ("a_km", blk.a_km == row.K0),
        ("P_km-1", blk.P1 == row.K1),
        ("Q_km-2", blk.Q2 == row.K2),
        ("Q_km-1*P_km-2", blk.Q1 * blk.P2 == row.K3),
        ("|Q_km-1|", blk.Q1 * blk.Q1.conjugate() == row.K4 ** 2),
        ("|P_km-2|", blk.P2 * blk.P2.conjugate() == row.K4 ** 2),
        ("Q_km-1 closed form", blk.Q1 == row.q1(root)),
        ("P_km-2 closed form", blk.P2 == row.p2(root)),
    ]
    for name, ok in checks:
        if not ok:
            raise TableMismatch(m, r, name)
    if blk.classification is None:
        classify(blk)
    h = h_value(spec, root, blk)
    num, den = row.h(r)
    if not (h.exact.num * den - num * h.exact.den).is_zero():
        raise TableMismatch(m, r, "H", f"computed {h.numeric}")


# ---------------------------------------------------------------------------
# constants controlling the approach to the limit
# ---------------------------------------------------------------------------

@dataclass
class ConstantsReport:
    case: str                        # "equal" or "distinct"
    constants: dict[str, mpfr]
    indices: dict[str, int]
    N_prime: int
    bits: int

    def to_dict(self) -> dict:
        return {"case": self.case, "N_prime": self.N_prime,
                "constants": {k: f"{float(v):.17g}" for k, v in self.constants.items()},
                "indices": dict(self.indices)}

    def __getitem__(self, name: str):
        if name in self.constants:
            return self.constants[name]
        return self.indices[name]


def _first(pred: Callable[[int], bool], after: int = 0, at_least: int = 1,
           limit: int = 1 << 20) -> int:
    n = max(after + 1, at_least)
    while not pred(n):
        n += 1
        if n > limit:
            raise ArithmeticError("index search did not terminate")
    return n


def growth_constants(blk: BlockAnalysis, bits: int = 256) -> ConstantsReport:
    """The explicit constants and thresholds for the convergent cases."""
    if blk.classification is None:
        classify(blk)
    if blk.divergent:
        raise ValueError("no constants for a divergent block")
    if blk.classification is Classification.EQUAL_EIGENVALUES:
        return _equal_constants(blk, bits)
    return _distinct_constants(blk, bits)


def _num(x, bits):
    if isinstance(x, QuadElement):
        return x.embed(bits)
    return cyclotomic_embed(x, bits)


def _equal_constants(blk: BlockAnalysis, bits: int) -> ConstantsReport:
    eta = abs(mpfr(blk.eta.numerator) / blk.eta.denominator) if blk.eta else mpfr(0)
    with working_precision(bits):
        a = _num(blk.P1, bits)
        c = _num(blk.Q1, bits)
        dd = _num(blk.a_km * blk.Q2, bits)
        akm = abs(_num(blk.a_km, bits))
        lam = (a + dd) / 2
        G = abs((a - dd) / (2 * c))
        D1 = abs(lam)
        D2 = abs(c / lam)
        diff = abs(dd - a)
        ssum = abs(a + dd)
        D4 = (2 * abs(lam) + diff) / (2 * akm * abs(lam))
        N1 = _first(lambda n: 2 * abs(lam) / n < diff)
        D3 = (diff - 2 * abs(lam) / N1) / (2 * akm * abs(lam))
        D5, D6 = D2 / D4, D2 / D3
        D7 = abs((a + dd) / (2 * c))
        N3 = _first(lambda n: ssum / n < diff, after=N1)
        sq = abs(dd * dd - a * a)
        D8 = sq / (2 * abs(c) * (ssum + diff))
        D9 = sq / (2 * abs(c) * (diff - ssum / N3))
        Mp, mp = max(D7, D9), min(D7, D8)
        N4 = _first(lambda n: G > Mp / n, after=N3)
        D10 = mp / (G * (G + Mp))
        D11 = Mp / (G * (G - Mp / N4))
        D12 = max(D7, D9)
        D2p = min(D2, D3)
        N7 = _first(lambda n: True, after=N4, at_least=int(gmpy2.ceil(1 / D2p)))
        D13p = 3 + G + D12 / N7
        D13 = 2 * D13p / D2p
        N8 = _first(lambda n: min(G - D12 / n, G - D12 / n - D13 / (2 * n)) >= G / 2, after=N7)
        D14 = max(4 / G, 4 * eta / G)
        D15 = 4 * D13 / (G * G)
    consts = dict(D1=D1, D2=D2, D3=D3, D4=D4, D5=D5, D6=D6, D7=D7, D8=D8, D9=D9,
                  D10=D10, D11=D11, D12=D12, D13=D13, D14=D14, D15=D15, G_abs=G)
    idx = dict(N1=N1, N3=N3, N4=N4, N7=N7, N8=N8)
    return ConstantsReport("equal", consts, idx, N8, bits)


def _distinct_constants(blk: BlockAnalysis, bits: int) -> ConstantsReport:
    eta = abs(mpfr(blk.eta.numerator) / blk.eta.denominator) if blk.eta else mpfr(0)
    with working_precision(bits):
        c = _num(blk.Q1, bits)
        dd = _num(blk.a_km * blk.Q2, bits)
        akm = abs(_num(blk.a_km, bits))
        l1, l2 = _num(blk.lam_dom, bits), _num(blk.lam_sub, bits)
        x1, y1 = (l1 - dd) / c, (l2 - dd) / c
        G = abs(x1)
        C1 = abs(l1)
        C8 = abs(l2 / l1)
        sep = abs(x1 - y1)
        y1_zero = (blk.lam_sub - blk.a_km * blk.Q2).is_zero()
        ratio = None if y1_zero else abs(x1 / y1)
        C2 = (1 - C8) / sep
        C3 = (1 + C8) / sep
        C9 = sep / (1 + C8)
        C10 = sep / (1 - C8)
        if ratio is None:
            # y1 = 0: Q_{jkm-2} is a pure dominant multiple; reuse the crude bounds
            N2 = N5 = 1
            C4, C5 = C2, C3
            C11, C12 = C9, C10
        else:
            # a margin keeps exact ties (ratio * C8**n == 1) from passing by rounding
            margin = 1 - mpfr(2) ** (-(bits // 2))
            N2 = _first(lambda n: ratio * C8 ** n < margin)
            fac = abs(y1) / (akm * sep)
            C4 = fac * (1 - ratio * C8 ** N2)
            C5 = fac * (1 + ratio * C8)
            N5 = _first(lambda n: C8 ** n < margin / ratio, after=N2)
            C11 = sep / (1 / ratio + C8)
            C12 = sep / (1 / ratio - C8 ** N5)
        C6, C7 = C2 / C5, C3 / C4
        Mp, mp = max(C10, C12), min(C9, C11)
        N6 = _first(lambda n: G > Mp * C8 ** n, after=N5)
        C13 = mp / (G * (G + Mp))
        C14 = Mp / (G * (G - Mp * C8 ** N6))
        C10p = max(C10, C12)
        C2p = min(C2, C4)
        N9 = _first(lambda n: C2p * C1 ** n > 1, after=N6)
        C15p = 3 + G + C10p * C8 ** N9
        C15 = 2 * C15p / C2p
        N10 = _first(lambda n: min(G - C10p * C8 ** n,
                                   G - C10p * C8 ** n - C15 / (2 * C1 ** n)) >= G / 2, after=N9)
        C16 = max(4 * eta / G, 4 / G)
        C17 = 4 * C15 / (G * G)
    consts = dict(C1=C1, C2=C2, C3=C3, C4=C4, C5=C5, C6=C6, C7=C7, C8=C8, C9=C9, C10=C10,
                  C11=C11, C12=C12, C13=C13, C14=C14, C15=C15, C16=C16, C17=C17, G_abs=G)
    idx = dict(N2=N2, N5=N5, N6=N6, N9=N9, N10=N10)
    return ConstantsReport("distinct", consts, idx, N10, bits)


# ---------------------------------------------------------------------------
# sweeps over roots of unity
# ---------------------------------------------------------------------------

SWEEP_COLUMNS = ("family", "m", "r", "classification", "K5", "G_real", "G_imag",
                 "H_real", "H_imag", "constants_ref")


def _fmt(x: mpfr, digits: int) -> str:
    return format(x, f".{digits}g")


def sweep(spec: FamilySpec, m_max: int, bits: int = 256,
          constants: Callable[[BlockAnalysis], str] | None = None) -> list[dict]:
    """Classify every primitive root of unity of order <= m_max.

    ``constants`` may persist the growth constants of a convergent block and
    return a reference string for the ``constants_ref`` column.
    """
    digits = max(15, int(bits * 0.30103) - 5)
    rows = []
    for m in range(1, m_max + 1):
        try:
            blocks = list(blocks_at_all_residues(spec, m))
        except DegenerateBlock:
            for r in units(m):
                rows.append(dict(zip(SWEEP_COLUMNS, (spec.name, m, r, "Degenerate",
                                                     "", "", "", "", "", ""))))
            continue
        for r, blk in blocks:
            classify(blk)
            rat = blk.K5.as_rational()
            if rat is not None:
                k5 = str(rat)
            else:
                z = cyclotomic_embed(blk.K5, 64)
                k5 = f"{float(z.real):.12g}{float(z.imag):+.12g}j"
            row = dict(family=spec.name, m=m, r=r, classification=blk.verdict, K5=k5,
                       G_real="", G_imag="", H_real="", H_imag="", constants_ref="")
            if not blk.divergent:
                G = blk.limit.embed(bits)
                row["G_real"], row["G_imag"] = _fmt(G.real, digits), _fmt(G.imag, digits)
                if not blk.limit.is_zero():
                    H = h_value(spec, RootOfUnity(m, r), blk, bits).numeric
                    row["H_real"], row["H_imag"] = _fmt(H.real, digits), _fmt(H.imag, digits)
                    if constants is not None:
                        row["constants_ref"] = constants(blk)
            rows.append(row)
    return rows


def write_sweep_csv(rows: list[dict], path) -> None:
    import csv
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
