"""Exact expansion of P_n(q), Q_n(q) over Z[q] and their Lipschitz constants.

kappa_n and nu_n bound |Q_n(x) - Q_n(y)| and |P_n(x) - P_n(y)| by
const * |x - y| on the unit circle.  They come from the weighted coefficient
sums sum_i i |c_i| with the floor delta_n >= max(1, delta_{n-1} + 1),
delta_{-1} = 0.  gamma(n) = max(kappa_n, nu_n).
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Sequence

import gmpy2
from gmpy2 import mpc, mpfr

from .family import FamilySpec
from .scalars import to_mpc, working_precision

DEFAULT_TERM_BUDGET = 500_000
# rational upper bound for 2*pi
TWO_PI_UPPER = Fraction(710, 113)


class BudgetExceeded(RuntimeError):
    """Polynomial expansion grew past the configured term budget."""


class QPolynomial:
    """Integer polynomial in q, stored densely (lowest degree first)."""

    __slots__ = ("dense",)

    def __init__(self, coeffs=None):
        if coeffs is None:
            dense = []
        elif isinstance(coeffs, dict):
            top = max((e for e, c in coeffs.items() if c), default=-1)
            dense = [0] * (top + 1)
            for e, c in coeffs.items():
                if c:
                    dense[e] += c
        else:
            dense = list(coeffs)
        while dense and not dense[-1]:
            dense.pop()
        self.dense = dense

    @property
    def coeffs(self) -> dict[int, int]:
        return {e: c for e, c in enumerate(self.dense) if c}

    @property
    def degree(self) -> int:
        return len(self.dense) - 1

    def __eq__(self, other):
        if isinstance(other, QPolynomial):
            return self.dense == other.dense
        if isinstance(other, int):
            return self.dense == ([other] if other else [])
        return NotImplemented

    def __repr__(self):
        return f"QPolynomial({self.coeffs})"

    def weighted_sum(self) -> int:
        """sum_i i |c_i|."""
        return sum(i * abs(c) for i, c in enumerate(self.dense))

    def abs_sum(self) -> int:
        return sum(abs(c) for c in self.dense)

    def at(self, x):
        """Evaluate at an exact scalar (int, Fraction, CyclotomicElement)."""
        acc = 0
        for c in reversed(self.dense):
            acc = acc * x + c
        return acc

    def at_mpc(self, x: mpc, bits: int) -> mpc:
        with working_precision(bits + 32):
            xx = +x
            acc = mpc(0)
            for c in reversed(self.dense):
                acc = acc * xx + c
        with working_precision(bits):
            return +acc


def _axpy_sparse(out: list[int], poly: list[int], sparse: dict[int, int]) -> None:
    """out += poly * sparse, in place (out is long enough)."""
    for e, c in sparse.items():
        if c == 1:
            for i, v in enumerate(poly):
                if v:
                    out[i + e] += v
        else:
            for i, v in enumerate(poly):
                if v:
                    out[i + e] += c * v


@dataclass
class Expansion:
    spec: FamilySpec
    P: list[QPolynomial]
    Q: list[QPolynomial]


def _numerator_exps(spec: FamilySpec, n: int) -> dict[int, int]:
    block, slot = spec.numerator_slot(n)
    return spec.f[slot - 1].q_exponents(block + spec.f_shift)


def _denominator_exps(spec: FamilySpec, n: int) -> dict[int, int]:
    if n == 0:
        return spec.b0.q_exponents(0)
    block, j = spec.denominator_slot(n)
    return spec.g[j].q_exponents(block)


def expand(spec: FamilySpec, N: int, term_budget: int = DEFAULT_TERM_BUDGET) -> Expansion:
    """P_n(q), Q_n(q) for n = 0..N as exact integer polynomials."""
    return _expand_cached(spec, N, term_budget)


@lru_cache(maxsize=32)
def _expand_cached(spec: FamilySpec, N: int, term_budget: int) -> Expansion:
    b0 = _denominator_exps(spec, 0)
    P_prev, P = [1], QPolynomial(b0).dense or [0]
    Q_prev, Q = [0], [1]
    Ps, Qs = [QPolynomial(P)], [QPolynomial(Q)]
    for n in range(1, N + 1):
        a = _numerator_exps(spec, n)
        b = _denominator_exps(spec, n)
        da = max(a, default=0)
        db = max(b, default=0)
        size = max(len(P) + db, len(P_prev) + da, len(Q) + db, len(Q_prev) + da)
        if size > term_budget:
            raise BudgetExceeded(f"degree {size} at n={n} exceeds budget {term_budget}")
        newP, newQ = [0] * size, [0] * size
        _axpy_sparse(newP, P, b)
        _axpy_sparse(newP, P_prev, a)
        _axpy_sparse(newQ, Q, b)
        _axpy_sparse(newQ, Q_prev, a)
        P_prev, P = P, QPolynomial(newP).dense
        Q_prev, Q = Q, QPolynomial(newQ).dense
        Ps.append(QPolynomial(P))
        Qs.append(QPolynomial(Q))
    return Expansion(spec, Ps, Qs)


@dataclass(frozen=True)
class LipschitzRow:
    n: int
    kappa: int
    nu: int

    @property
    def gamma(self) -> int:
        return max(self.kappa, self.nu)


class LipschitzTable(list):
    """List of LipschitzRow indexed by n."""

    def kappa(self, n: int) -> int:
        return self[n].kappa

    def nu(self, n: int) -> int:
        return self[n].nu

    def gamma(self, n: int) -> int:
        return self[n].gamma

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "kappa", "nu", "gamma"])
        for row in self:
            w.writerow([row.n, row.kappa, row.nu, row.gamma])
        return buf.getvalue()


def _deltas(polys: Sequence[QPolynomial]) -> list[int]:
    out, prev = [], 0
    for p in polys:
        prev = max(p.weighted_sum(), 1, prev + 1)
        out.append(prev)
    return out


def lipschitz_constants(spec: FamilySpec, N: int,
                        term_budget: int = DEFAULT_TERM_BUDGET) -> LipschitzTable:
    ex = expand(spec, N, term_budget)
    kappas, nus = _deltas(ex.Q), _deltas(ex.P)
    return LipschitzTable(LipschitzRow(n, kappas[n], nus[n]) for n in range(N + 1))


def lipschitz_check(spec: FamilySpec, n: int, x: mpc, y: mpc, bits: int = 256,
                    table: LipschitzTable | None = None) -> bool:
    """Check both Lipschitz inequalities at index n for x, y on the unit circle."""
    table = table or lipschitz_constants(spec, n)
    ex = expand(spec, n)
    P, Q = ex.P[n], ex.Q[n]
    with working_precision(bits):
        dist = abs(x - y)
        slack = mpfr(2) ** (-(bits - 24))
        dq = abs(Q.at_mpc(x, bits) - Q.at_mpc(y, bits))
        dp = abs(P.at_mpc(x, bits) - P.at_mpc(y, bits))
        ok_q = dq <= table.kappa(n) * dist + slack * (1 + table.kappa(n))
        ok_p = dp <= table.nu(n) * dist + slack * (1 + table.nu(n))
    return bool(ok_q and ok_p)


# ---------------------------------------------------------------------------
# certified overestimates of gamma at indices too large to expand
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GrowthBound:
    """gamma(n) <= deg_bound(n) * C * R**(n+1) + n for all n >= 0."""

    R: int
    C: int
    deg_b0: int
    f_q: int
    f_x: int
    g_q: int
    g_x: int
    k: int
    f_shift: int

    def deg_bound(self, n: int) -> int:
        fa = self.f_q + self.f_x * (max(n - 1, 0) // self.k + self.f_shift)
        gb = self.g_q + self.g_x * (n // self.k)
        return self.deg_b0 + n * max(fa, gb, 0)

    def gamma_bar(self, n: int) -> int:
        w = self.deg_bound(n) * self.C * self.R ** (n + 1)
        return max(w, 1) + n

    def log2_gamma_bar(self, n: int) -> int:
        """Integer E with gamma_bar(n) <= 2**E, computable for huge n."""
        ceil_log_r = (self.R - 1).bit_length()
        return (self.deg_bound(n).bit_length() + self.C.bit_length()
                + (n + 1) * ceil_log_r + 1 + max(n, 1).bit_length())


def growth_bound(spec: FamilySpec) -> GrowthBound:
    A = max(p.abs_coeff_sum for p in spec.f)
    B = max([p.abs_coeff_sum for p in spec.g] + [spec.b0.abs_coeff_sum, 1])
    R = 1
    while R * R < B * R + A:
        R += 1
    x0 = max(spec.b0.abs_coeff_sum, 1)
    C = max(1, -(-x0 // R))
    return GrowthBound(
        R=R, C=C, deg_b0=spec.b0.max_q_exp,
        f_q=max(p.max_q_exp for p in spec.f), f_x=max(p.max_x_exp for p in spec.f),
        g_q=max(p.max_q_exp for p in spec.g), g_x=max(p.max_x_exp for p in spec.g),
        k=spec.k, f_shift=spec.f_shift)


EXACT_GAMMA_LIMIT = 160


def gamma_value(spec: FamilySpec, n: int, exact_limit: int = EXACT_GAMMA_LIMIT) -> tuple[int, bool]:
    """(value, exact): exact gamma(n) when cheap, else the certified overestimate."""
    if n <= exact_limit:
        return lipschitz_constants(spec, n).gamma(n), True
    return growth_bound(spec).gamma_bar(n), False


def growth_threshold(gamma: int) -> int:
    """Least integer e with e > 2*pi*gamma, certified via 2*pi < 710/113."""
    return (TWO_PI_UPPER * gamma).__floor__() + 1
