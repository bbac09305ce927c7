"""The q-continued fraction family, its built-in members and the recurrence.

A family member is described by polynomials f_1..f_k, g_0..g_{k-1} in
Z[q][x].  For n = n'k + s' (1 <= s' <= k, n' = (n-1)//k) the partial
numerator is a_n = f_{s'}(q**(n' + f_shift)); for n = n'k + j
(0 <= j < k) the partial denominator is b_n = g_j(q**n').  ``f_shift`` is 0
for the block convention and 1 for single-term fractions written with
a_n = f(q**n).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterator, Sequence

from gmpy2 import mpc

from .scalars import (
    INF,
    CyclotomicElement,
    PrecisionExhausted,
    UnitPoint,
    exp_2pi_i,
    to_mpc,
    working_precision,
)


class Indeterminate(ArithmeticError):
    """0/0 in a linear fractional evaluation."""


class ConfigError(ValueError):
    """A family configuration is malformed."""


# ---------------------------------------------------------------------------
# polynomials in Z[q][x]
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BiPolynomial:
    """Sparse element of Z[q][x]; ``terms`` maps (q_exp, x_exp) -> coefficient."""

    terms: tuple[tuple[int, int, int], ...] = ()

    @classmethod
    def from_triples(cls, triples: Sequence[Sequence[int]]) -> "BiPolynomial":
        acc: dict[tuple[int, int], int] = {}
        for coeff, qe, xe in triples:
            if qe < 0 or xe < 0:
                raise ConfigError("exponents must be nonnegative")
            acc[(qe, xe)] = acc.get((qe, xe), 0) + int(coeff)
        return cls(tuple((c, qe, xe) for (qe, xe), c in sorted(acc.items()) if c))

    @classmethod
    def constant(cls, c: int) -> "BiPolynomial":
        return cls.from_triples([(c, 0, 0)])

    def triples(self) -> list[list[int]]:
        return [[c, qe, xe] for c, qe, xe in self.terms]

    def q_exponents(self, xpow: int) -> dict[int, int]:
        """Collapse to a q-polynomial after substituting x = q**xpow."""
        out: dict[int, int] = {}
        for c, qe, xe in self.terms:
            e = qe + xe * xpow
            out[e] = out.get(e, 0) + c
        return {e: c for e, c in out.items() if c}

    @property
    def abs_coeff_sum(self) -> int:
        return sum(abs(c) for c, _, _ in self.terms)

    @property
    def max_q_exp(self) -> int:
        return max((qe for _, qe, _ in self.terms), default=0)

    @property
    def max_x_exp(self) -> int:
        return max((xe for _, _, xe in self.terms), default=0)

    def __str__(self):
        parts = []
        for c, qe, xe in self.terms:
            mono = "*".join(
                f"{v}^{e}" if e > 1 else v for v, e in (("q", qe), ("x", xe)) if e)
            parts.append(mono if c == 1 and mono else f"{c}*{mono}" if mono else str(c))
        return " + ".join(parts) or "0"


# ---------------------------------------------------------------------------
# family specification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FamilySpec:
    name: str
    k: int
    f: tuple[BiPolynomial, ...]
    g: tuple[BiPolynomial, ...]
    b0: BiPolynomial
    eta: Fraction
    d: int
    s: int
    r: int
    u: int
    f_shift: int = 0
    experimental: bool = False
    description: str = ""

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError("k must be positive")
        if len(self.f) != self.k or len(self.g) != self.k:
            raise ConfigError("f and g must both have k entries")
        if self.d < 1 or not (1 <= self.s <= self.d):
            raise ConfigError("need d >= 1 and 1 <= s <= d")
        if self.r == self.u:
            raise ConfigError("residues r and u must differ")
        if not (0 <= self.r < self.d and 0 <= self.u < self.d):
            raise ConfigError("residues r, u must lie in 0..d-1")
        if any(xe for _, _, xe in self.b0.terms):
            raise ConfigError("b0 must be a polynomial in q only")

    # index bookkeeping --------------------------------------------------
    def numerator_slot(self, n: int) -> tuple[int, int]:
        """(n', s') with n = n'k + s', 1 <= s' <= k."""
        if n < 1:
            raise ValueError("partial numerators start at n = 1")
        block = (n - 1) // self.k
        return block, n - block * self.k

    def denominator_slot(self, n: int) -> tuple[int, int]:
        return divmod(n, self.k)

    def with_residues(self, r: int, u: int) -> "FamilySpec":
        """Copy with different steering residues (r == u allowed: control runs)."""
        obj = object.__new__(FamilySpec)
        for name in self.__dataclass_fields__:
            object.__setattr__(obj, name, getattr(self, name))
        object.__setattr__(obj, "r", r)
        object.__setattr__(obj, "u", u)
        return obj

    # serialization ------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "k": self.k,
            "eta": f"{self.eta.numerator}/{self.eta.denominator}",
            "d": self.d,
            "s": self.s,
            "r": self.r,
            "u": self.u,
            "f_shift": self.f_shift,
            "experimental": self.experimental,
            "b0": self.b0.triples(),
            "f": [p.triples() for p in self.f],
            "g": [p.triples() for p in self.g],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "FamilySpec":
        try:
            return cls(
                name=str(data["name"]),
                k=int(data["k"]),
                f=tuple(BiPolynomial.from_triples(p) for p in data["f"]),
                g=tuple(BiPolynomial.from_triples(p) for p in data["g"]),
                b0=BiPolynomial.from_triples(data["b0"]),
                eta=Fraction(str(data["eta"])),
                d=int(data["d"]),
                s=int(data["s"]),
                r=int(data["r"]),
                u=int(data["u"]),
                f_shift=int(data.get("f_shift", 0)),
                experimental=bool(data.get("experimental", False)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"bad family config: {exc}") from exc


def load_family(path: str | Path) -> FamilySpec:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    return FamilySpec.from_dict(data)


def dump_family(spec: FamilySpec, path: str | Path) -> None:
    Path(path).write_text(json.dumps(spec.to_dict(), indent=2) + "\n")


def _bp(*triples) -> BiPolynomial:
    return BiPolynomial.from_triples(triples)


_ONE = _bp((1, 0, 0))


def builtin_families() -> list[FamilySpec]:
    """Rogers-Ramanujan K, Ramanujan-Selberg S1..S3 and experimental GG."""
    return [
        FamilySpec("K", 1, (_bp((1, 0, 1)),), (_ONE,), _ONE, Fraction(1, 5),
                   d=5, s=1, r=1, u=2, f_shift=1,
                   description="Rogers-Ramanujan 1 + q/1 + q^2/1 + ..."),
        FamilySpec("S1", 2, (_bp((1, 1, 2)), _bp((1, 1, 1), (1, 2, 2))), (_ONE, _ONE), _ONE,
                   Fraction(1, 8), d=8, s=1, r=1, u=2,
                   description="1 + q/1 + (q+q^2)/1 + q^3/1 + (q^2+q^4)/1 + ..."),
        FamilySpec("S2", 2, (_bp((1, 1, 2), (1, 2, 4)), _bp((1, 4, 4))), (_ONE, _ONE), _ONE,
                   Fraction(1, 2), d=8, s=1, r=1, u=2,
                   description="1 + (q+q^2)/1 + q^4/1 + (q^3+q^6)/1 + q^8/1 + ..."),
        FamilySpec("S3", 1, (_bp((1, 0, 1), (1, 0, 2)),), (_ONE,), _ONE, Fraction(1, 3),
                   d=6, s=1, r=1, u=2, f_shift=1,
                   description="1 + (q+q^2)/1 + (q^2+q^4)/1 + ..."),
        FamilySpec("GG", 1, (_bp((1, 2, 2)),), (_bp((1, 0, 0), (1, 1, 2)),), _bp((1, 0, 0), (1, 1, 0)),
                   Fraction(1, 2), d=8, s=1, r=1, u=2, experimental=True,
                   description="Gollnitz-Gordon 1+q + q^2/(1+q^3) + q^4/(1+q^5) + ..."),
    ]


def get_family(name: str) -> FamilySpec:
    for spec in builtin_families():
        if spec.name.lower() == name.lower():
            return spec
    raise ConfigError(f"unknown family {name!r}")


# ---------------------------------------------------------------------------
# evaluation of partial numerators / denominators
# ---------------------------------------------------------------------------

def _eval_q_poly(coeffs: dict[int, int], q, bits: int | None):
    """Evaluate sum c q**e for scalar q (cyclotomic, UnitPoint, mpc, rational)."""
    if isinstance(q, CyclotomicElement):
        if q.is_monomial and q.coeffs[q._support[0]] == 1:
            j = q._support[0]
            out = [0] * q.m
            for e, c in coeffs.items():
                out[(j * e) % q.m] += c
            return CyclotomicElement(q.m, out)
        acc = CyclotomicElement.zero(q.m)
        for e, c in coeffs.items():
            acc = acc + (q ** e) * c
        return acc
    if isinstance(q, UnitPoint):
        with working_precision(bits):
            acc = mpc(0)
            for e, c in coeffs.items():
                acc += c * q.power(e, bits)
            return acc
    if isinstance(q, mpc):
        with working_precision(bits or q.precision[0]):
            acc = mpc(0)
            for e, c in coeffs.items():
                acc += c * q ** e
            return acc
    return sum(c * q ** e for e, c in coeffs.items())


def partial_numerator(spec: FamilySpec, n: int, q, bits: int | None = None):
    block, slot = spec.numerator_slot(n)
    return _eval_q_poly(spec.f[slot - 1].q_exponents(block + spec.f_shift), q, bits)


def partial_denominator(spec: FamilySpec, n: int, q, bits: int | None = None):
    if n == 0:
        return _eval_q_poly(spec.b0.q_exponents(0), q, bits)
    block, j = spec.denominator_slot(n)
    return _eval_q_poly(spec.g[j].q_exponents(block), q, bits)


def partial_terms(spec: FamilySpec, n: int, q=None, bits: int | None = None):
    """(a_n, b_{n-1}).  With ``q=None`` the results are QPolynomials."""
    if q is None:
        from .symbolic import QPolynomial
        block, slot = spec.numerator_slot(n)
        a = QPolynomial(spec.f[slot - 1].q_exponents(block + spec.f_shift))
        if n - 1 == 0:
            b = QPolynomial(spec.b0.q_exponents(0))
        else:
            bb, j = spec.denominator_slot(n - 1)
            b = QPolynomial(spec.g[j].q_exponents(bb))
        return a, b
    return partial_numerator(spec, n, q, bits), partial_denominator(spec, n - 1, q, bits)


# ---------------------------------------------------------------------------
# recurrence
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ApproximantState:
    """(P_n, P_{n-1}, Q_n, Q_{n-1}) and the running product of a_1..a_n."""

    n: int
    P: object
    P_prev: object
    Q: object
    Q_prev: object
    prod_a: object
    any_zero: bool = False

    def determinant(self):
        return self.P * self.Q_prev - self.P_prev * self.Q

    def expected_determinant(self):
        return self.prod_a if (self.n - 1) % 2 == 0 else -self.prod_a

    @property
    def value(self):
        return moebius_apply(self, 0)


def _is_exact(q) -> bool:
    return isinstance(q, (CyclotomicElement, int, Fraction))


def _is_zero(x) -> bool:
    if isinstance(x, CyclotomicElement):
        return x.is_zero()
    return x == 0


class _FloatTerms:
    """Incremental evaluation of a_n, b_n at a point off the exact backend."""

    def __init__(self, spec: FamilySpec, q, bits: int, max_bits: int):
        self.spec, self.q, self.bits, self.max_bits = spec, q, bits, max_bits

    def _scale(self, n: int):
        """Sum of |c| |q|^e over the monomials of a_n: the size absent cancellation."""
        block, slot = self.spec.numerator_slot(n)
        exps = self.spec.f[slot - 1].q_exponents(block + self.spec.f_shift)
        if isinstance(self.q, UnitPoint):
            return sum(abs(c) for c in exps.values())
        rho = abs(self.q)
        return sum(abs(c) * rho ** e for e, c in exps.items())

    def a(self, n: int):
        val = partial_numerator(self.spec, n, self.q, self.bits)
        with working_precision(self.bits):
            tiny = abs(val) < self._scale(n) * 2 ** (-(self.bits // 2))
        if tiny:
            bits = self.bits
            while isinstance(self.q, UnitPoint) and bits < self.max_bits:
                bits *= 2
                val2 = partial_numerator(self.spec, n, self.q, bits)
                with working_precision(bits):
                    if abs(val2) >= 2 ** (-(bits // 2)):
                        with working_precision(self.bits):
                            return +val2
            raise PrecisionExhausted(f"cannot certify a_{n} != 0")
        return val

    def b(self, n: int):
        return partial_denominator(self.spec, n, self.q, self.bits)


def iterate_recurrence(spec: FamilySpec, q, N: int, bits: int = 256,
                       max_bits: int = 4096) -> Iterator[ApproximantState]:
    """Yield ApproximantState for n = 0..N.

    ``q`` may be a CyclotomicElement or rational (exact backend), or a
    UnitPoint / mpc (float backend at ``bits`` precision).
    """
    exact = _is_exact(q)
    if exact:
        a_of = lambda n: partial_numerator(spec, n, q)
        b_of = lambda n: partial_denominator(spec, n, q)
        one, zero = (CyclotomicElement.scalar(q.m, 1), CyclotomicElement.zero(q.m)) \
            if isinstance(q, CyclotomicElement) else (1, 0)
    else:
        terms = _FloatTerms(spec, q, bits, max_bits)
        a_of, b_of = terms.a, terms.b
        with working_precision(bits):
            one, zero = mpc(1), mpc(0)
    b0 = b_of(0)
    P_prev, P, Q_prev, Q = one, b0, zero, one
    prod = one
    any_zero = False
    state = ApproximantState(0, P, P_prev, Q, Q_prev, prod, False)
    yield state
    ctx = working_precision(bits) if not exact else None
    for n in range(1, N + 1):
        a, b = a_of(n), b_of(n)
        if exact and _is_zero(a):
            any_zero = True
        if ctx is not None:
            with working_precision(bits):
                P_prev, P = P, b * P + a * P_prev
                Q_prev, Q = Q, b * Q + a * Q_prev
                prod = prod * a
        else:
            P_prev, P = P, b * P + a * P_prev
            Q_prev, Q = Q, b * Q + a * Q_prev
            prod = prod * a
        yield ApproximantState(n, P, P_prev, Q, Q_prev, prod, any_zero)


def run_recurrence(spec: FamilySpec, q, N: int, bits: int = 256,
                   max_bits: int = 4096) -> list[ApproximantState]:
    return list(iterate_recurrence(spec, q, N, bits, max_bits))


def recurrence_at(spec: FamilySpec, q, indices: Sequence[int], bits: int = 256,
                  max_bits: int = 4096) -> dict[int, ApproximantState]:
    """States at selected indices only (for long runs)."""
    wanted = set(indices)
    top = max(wanted)
    out = {}
    for st in iterate_recurrence_lean(spec, q, top, bits, max_bits):
        if st.n in wanted:
            out[st.n] = st
    return out


def iterate_recurrence_lean(spec, q, N, bits=256, max_bits=4096):
    """Like iterate_recurrence but skips the running product (float backend).

    Used by the long stage runs where only (P, Q) pairs are needed.
    """
    if _is_exact(q):
        yield from iterate_recurrence(spec, q, N, bits, max_bits)
        return
    terms = _FloatTerms(spec, q, bits, max_bits)
    with working_precision(bits):
        one, zero = mpc(1), mpc(0)
        P_prev, P, Q_prev, Q = one, terms.b(0), zero, one
    yield ApproximantState(0, P, P_prev, Q, Q_prev, None)
    for n in range(1, N + 1):
        a, b = terms.a(n), terms.b(n)
        with working_precision(bits):
            P_prev, P = P, b * P + a * P_prev
            Q_prev, Q = Q, b * Q + a * Q_prev
        yield ApproximantState(n, P, P_prev, Q, Q_prev, None)


# ---------------------------------------------------------------------------
# linear fractional maps S_n(w)
# ---------------------------------------------------------------------------

def _div(num, den):
    if isinstance(num, CyclotomicElement) or isinstance(den, CyclotomicElement):
        if not isinstance(den, CyclotomicElement):
            return num / den
        return num * den.inverse()
    if isinstance(num, int) and isinstance(den, int):
        return Fraction(num, den)
    return num / den


def moebius_apply(state: ApproximantState, w):
    """S_n(w) = (P_n + w P_{n-1}) / (Q_n + w Q_{n-1}) on the extended plane."""
    if w is INF:
        num, den = state.P_prev, state.Q_prev
    else:
        num, den = state.P + w * state.P_prev, state.Q + w * state.Q_prev
    if _is_zero(den):
        if _is_zero(num):
            raise Indeterminate(f"0/0 at n={state.n}")
        return INF
    return _div(num, den)


def moebius_invert(state: ApproximantState, g):
    """The v with S_n(v) = g."""
    if g is INF:
        num, den = -state.Q, state.Q_prev
    else:
        num, den = state.P - g * state.Q, g * state.Q_prev - state.P_prev
    if _is_zero(den):
        if _is_zero(num):
            raise Indeterminate(f"degenerate state at n={state.n}")
        return INF
    return _div(num, den)


def iterate_unit_circle(spec: FamilySpec, t: Fraction, N: int, bits: int = 256,
                        resync: int = 1024) -> Iterator[tuple[int, mpc, mpc, mpc, mpc]]:
    """(n, P_n, P_{n-1}, Q_n, Q_{n-1}) at y = exp(2 pi i t) for n = 0..N.

    The block powers y**(n' + shift) are advanced by one multiplication per
    block and recomputed exactly every ``resync`` blocks, so the drift stays
    near N * 2**-bits.  Vanishing numerators are not screened here; callers
    needing that use :func:`iterate_recurrence`.
    """
    t = Fraction(t)
    k = spec.k
    work = bits + 16
    f_terms = [f.triples() for f in spec.f]
    g_terms = [g.triples() for g in spec.g]
    max_q = max([e for poly in f_terms + g_terms for _, e, _ in poly] + [0])
    with working_precision(work):
        qpow = [exp_2pi_i(t * e, work) for e in range(max_q + 1)]
        step = exp_2pi_i(t, work)

        def x_at(block):
            return exp_2pi_i(t * block, work)

        def poly_at(terms, x):
            acc = mpc(0)
            for c, qe, xe in terms:
                acc += c * qpow[qe] * x ** xe
            return acc

        b0 = poly_at(spec.b0.triples(), mpc(1))
        P_prev, P, Q_prev, Q = mpc(1), b0, mpc(0), mpc(1)
        yield 0, P, P_prev, Q, Q_prev
        # numerator block n' uses x = y**(n' + f_shift); denominator block uses y**n'
        xa_block, xa = spec.f_shift, x_at(spec.f_shift)
        xb_block, xb = 0, mpc(1)
        for n in range(1, N + 1):
            blk_a, slot = divmod(n - 1, k)
            want_a = blk_a + spec.f_shift
            if want_a != xa_block:
                xa_block = want_a
                xa = x_at(want_a) if want_a % resync == 0 else xa * step
            a = poly_at(f_terms[slot], xa)
            blk_b, j = divmod(n, k)
            if blk_b != xb_block:
                xb_block = blk_b
                xb = x_at(blk_b) if blk_b % resync == 0 else xb * step
            b = poly_at(g_terms[j], xb)
            P_prev, P = P, b * P + a * P_prev
            Q_prev, Q = Q, b * Q + a * Q_prev
            yield n, P, P_prev, Q, Q_prev
