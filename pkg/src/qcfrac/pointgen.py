"""Regular continued fractions and the construction of divergence points.

A point t = [0; e1, e2, ...] is assembled stage by stage: at each stage a
convergent c/d is steered into a prescribed residue pair modulo the
family's d, and the following partial quotient is made large enough that
exp(2 pi i t) is very close to exp(2 pi i c/d) relative to the growth of
the approximants.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Sequence

from .family import FamilySpec
from .symbolic import GrowthBound, growth_bound, growth_threshold, lipschitz_constants


class LevelTooLarge(ValueError):
    pass


class SteeringFailed(RuntimeError):
    def __init__(self, stage: int, reachable):
        super().__init__(f"no admissible quotient sequence at stage {stage}; "
                         f"reachable (c, d) residues: {sorted(reachable)}")
        self.stage, self.reachable = stage, reachable


# ---------------------------------------------------------------------------
# convergents
# ---------------------------------------------------------------------------

def convergents(e: Sequence[int]) -> list[tuple[int, int]]:
    """[(c_1, d_1), (c_2, d_2), ...] for t = [0; e_1, e_2, ...]."""
    c_prev, d_prev, c, d = 1, 0, 0, 1
    out = []
    for q in e:
        if q < 1:
            raise ValueError("partial quotients must be positive")
        c_prev, c = c, q * c + c_prev
        d_prev, d = d, q * d + d_prev
        out.append((c, d))
    return out


@dataclass
class RegularCF:
    quotients: list[int] = field(default_factory=list)

    def convergents(self) -> list[tuple[int, int]]:
        return convergents(self.quotients)

    def determinant_ok(self) -> bool:
        cs = [(0, 1)] + self.convergents()
        prev = (1, 0)
        for i, (c, d) in enumerate(cs):
            if c * prev[1] - prev[0] * d != (-1) ** (i - 1):
                return False
            prev = (c, d)
        return True

    @property
    def value(self) -> Fraction:
        c, d = self.convergents()[-1] if self.quotients else (0, 1)
        return Fraction(c, d)


# ---------------------------------------------------------------------------
# golden-ratio growth test
# ---------------------------------------------------------------------------

def _fib_lucas(n: int) -> tuple[int, int]:
    """(F_n, L_n) by fast doubling."""
    def fib_pair(k):
        if k == 0:
            return 0, 1
        a, b = fib_pair(k >> 1)
        c = a * (2 * b - a)
        d = a * a + b * b
        return (d, c + d) if k & 1 else (c, d)
    F, F1 = fib_pair(n)
    return F, 2 * F1 - F


def exceeds_phi_power(e: int, n: int) -> bool:
    """e >= phi**n, decided exactly; phi**n = (L_n + F_n sqrt5)/2."""
    if n == 0:
        return e >= 1
    F, L = _fib_lucas(n)
    lhs = 2 * e - L
    return lhs >= 0 and lhs * lhs >= 5 * F * F


# log2(phi) lies in [LOG2_PHI_LO, LOG2_PHI_HI]
LOG2_PHI_LO = Fraction(69424191363, 10 ** 11)
LOG2_PHI_HI = Fraction(69424191364, 10 ** 11)
EXACT_PHI_LIMIT = 1 << 16


@dataclass(frozen=True)
class PowerOfTwo:
    """The integer 2**exponent, kept symbolic."""

    exponent: int

    def __str__(self):
        return f"2^{self.exponent}"


def s_membership_prefix(quotients: Sequence, i: int) -> bool:
    """True iff e_{i+1} >= phi**{d_i}; ``quotients`` may end in a PowerOfTwo."""
    if len(quotients) <= i:
        raise ValueError("prefix too short")
    finite = [q for q in quotients[:i] if not isinstance(q, PowerOfTwo)]
    if len(finite) != i:
        raise ValueError("symbolic quotient inside the prefix")
    d = convergents(finite)[-1][1] if i else 1
    e = quotients[i]
    if isinstance(e, PowerOfTwo):
        lo, hi = Fraction(e.exponent), Fraction(e.exponent)
    else:
        if d <= EXACT_PHI_LIMIT:
            return exceeds_phi_power(e, d)
        lo, hi = Fraction(e.bit_length() - 1), Fraction(e.bit_length())
    if lo >= d * LOG2_PHI_HI:
        return True
    if hi < d * LOG2_PHI_LO:
        return False
    if isinstance(e, PowerOfTwo):
        e = 1 << e.exponent
    return exceeds_phi_power(e, d)


# ---------------------------------------------------------------------------
# the tower point
# ---------------------------------------------------------------------------

TOWER_CAP = 3


def tower_quotient(i: int) -> int:
    """A tower of i twos with i on top: 2^(2^(...^(2^i)))."""
    v = i
    for _ in range(i):
        v = 1 << v
    return v


@dataclass
class TowerPoint:
    cf: RegularCF
    digits: int
    decimal: str


def decimal_digits(x: Fraction, digits: int) -> str:
    """Truncated decimal expansion of 0 <= x < 1."""
    n = x.numerator * 10 ** digits // x.denominator
    return "0." + str(n).rjust(digits, "0")


def tower_point(levels: int) -> TowerPoint:
    if levels < 1:
        raise ValueError("levels must be >= 1")
    if levels > TOWER_CAP:
        raise LevelTooLarge(f"level {levels} quotient has more than 2^65536 bits")
    cf = RegularCF([tower_quotient(i) for i in range(1, levels + 1)])
    c, d = cf.convergents()[-1]
    digits = max(1, math.floor(2 * math.log10(d)))
    return TowerPoint(cf, digits, decimal_digits(Fraction(c, d), digits))


# ---------------------------------------------------------------------------
# steering convergents into residue classes
# ---------------------------------------------------------------------------

def _least_in_class(threshold: int, residue: int, D: int) -> int:
    e = threshold + ((residue - threshold) % D)
    return e if e >= 1 else e + D


def steer(state: tuple[int, int, int, int], target: tuple[int, int], D: int,
          first: Sequence[int], fillers: Sequence[int], max_depth: int = 12) -> list[int]:
    """Shortest quotient sequence whose last convergent hits ``target`` mod D.

    ``state`` is (c_{i-1}, d_{i-1}, c_i, d_i); ``first`` lists the candidate
    values of the first quotient (one per residue class is enough) and
    ``fillers`` those of every later one.  Raises LookupError with the
    reachable residue set when the search is exhausted.
    """
    start = tuple(x % D for x in state)
    tc, td = target[0] % D, target[1] % D

    def step(s, e):
        cp, dp, c, d = s
        return (c, d, (e * c + cp) % D, (e * d + dp) % D)

    frontier = deque((step(start, e), [e]) for e in first)
    seen = set()
    reachable = set()
    while frontier:
        s, path = frontier.popleft()
        reachable.add((s[2], s[3]))
        if (s[2], s[3]) == (tc, td):
            return path
        if s in seen or len(path) >= max_depth:
            continue
        seen.add(s)
        for e in fillers:
            frontier.append((step(s, e), path + [e]))
    raise LookupError(reachable)


# ---------------------------------------------------------------------------
# stage construction
# ---------------------------------------------------------------------------

# bit length beyond which a threshold is stored as a power of two
SYMBOLIC_BITS = 1 << 20


@dataclass
class StageCertificate:
    stage: int
    kind: str                  # "f" (c = r) or "g" (c = u)
    index: int                 # h: position of the stage convergent
    c: int
    d: int
    c_mod: int
    d_mod: int
    n_index: int               # k N' d^2 (or the demo index)
    gamma_source: str          # "overestimate" or "demo"
    log2_gamma: int            # ceil(log2) of the gamma value used
    threshold: str             # decimal or 2^E
    next_quotient: str         # decimal or 2^E
    growth_ok: bool
    certified: bool

    def to_dict(self) -> dict:
        d = asdict(self)
        d["c"], d["d"], d["n_index"] = str(self.c), str(self.d), str(self.n_index)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "StageCertificate":
        d = dict(d)
        d["c"], d["d"], d["n_index"] = int(d["c"]), int(d["d"]), int(d["n_index"])
        return cls(**d)


@dataclass
class PointRecipe:
    """A finite description of a point t together with its stage certificates.

    ``quotients`` is the finite prefix; its value is t_hat, the stand-in for
    t.  ``final_quotient`` is the partial quotient following the last stage
    convergent (possibly a symbolic power of two); it is part of t but not of
    t_hat.
    """

    family: str
    k: int
    N_prime: int
    d_mod: int
    residues: tuple[int, int]
    quotients: list[int]
    final_quotient: int | PowerOfTwo | None
    stages: list[StageCertificate]
    demo: bool = False
    theta: float | None = None
    demo_j: list[int] = field(default_factory=list)

    @property
    def t_hat(self) -> Fraction:
        return RegularCF(self.quotients).value

    def to_dict(self) -> dict:
        return {
            "family": self.family, "k": self.k, "N_prime": self.N_prime,
            "d": self.d_mod, "residues": list(self.residues),
            "quotients": [str(q) for q in self.quotients],
            "final_quotient": None if self.final_quotient is None else str(self.final_quotient),
            "demo": self.demo, "theta": self.theta,
            "demo_j": list(self.demo_j),
            "stages": [s.to_dict() for s in self.stages],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "PointRecipe":
        return cls(d["family"], d["k"], d["N_prime"], d["d"], tuple(d["residues"]),
                   [int(q) for q in d["quotients"]], parse_quotient(d.get("final_quotient")),
                   [StageCertificate.from_dict(s) for s in d["stages"]],
                   d.get("demo", False), d.get("theta"), list(d.get("demo_j", [])))

    @classmethod
    def loads(cls, text: str) -> "PointRecipe":
        return cls.from_dict(json.loads(text))


def parse_quotient(text: str | None) -> int | PowerOfTwo | None:
    if text is None:
        return None
    if text.startswith("2^"):
        return PowerOfTwo(int(text[2:]))
    return int(text)


def _stage_kind(i: int) -> str:
    return "f" if i % 2 == 0 else "g"


def certified_threshold(gb: GrowthBound, n: int) -> tuple[int | PowerOfTwo, int]:
    """(least admissible quotient, log2 of gamma-bar) for e > 2 pi gammabar(n)."""
    lg = gb.log2_gamma_bar(n)
    if lg > SYMBOLIC_BITS:
        # 2**(lg + 3) >= 8 gammabar > 2 pi gammabar
        return PowerOfTwo(lg + 3), lg
    return growth_threshold(gb.gamma_bar(n)), lg


DEFAULT_DEMO_BUDGET = 5 * 10 ** 6


def demo_threshold(gamma: int, theta: float) -> int:
    """Moderated growth bound theta * 2 pi gamma used in demo mode (not a certificate)."""
    return max(1, math.ceil(theta * 2 * math.pi * gamma))


def build_sdiamond_point(spec: FamilySpec, stages: int, N_prime: int,
                         free_quotients: Sequence[Sequence[int]] = (),
                         demo: bool = False, theta: float = 0.01,
                         demo_j: Sequence[int] | None = None,
                         demo_budget: int = DEFAULT_DEMO_BUDGET,
                         max_depth: int = 12) -> PointRecipe:
    """Assemble a recipe with ``stages`` alternating f/g stages.

    ``free_quotients[i]`` are arbitrary quotients appended before steering
    stage i (the free choices that make the construction uncountable).

    Certified mode uses e > 2 pi gammabar(k N' d^2).  Demo mode uses stage
    i with block count j_i = j_1 + i - 1, stage index k j_i d and the
    moderated bound :func:`demo_threshold` applied to the exact gamma(k j_i);
    such stages are marked uncertified.  Without ``demo_j`` the largest
    j_1 <= N' whose top stage index fits ``demo_budget`` is chosen.
    """
    if stages < 1:
        raise ValueError("need at least one stage")
    if demo and demo_j is None:
        last = None
        for j1 in range(max(N_prime, 1), 0, -1):
            try:
                rec = build_sdiamond_point(spec, stages, N_prime, free_quotients, True, theta,
                                           list(range(j1, j1 + stages)), demo_budget, max_depth)
            except SteeringFailed as exc:
                last = exc
                continue
            if max(c.n_index for c in rec.stages) <= demo_budget:
                return rec
        if last is not None:
            raise last
        raise SteeringFailed(1, {"demo budget": demo_budget})
    D, s = spec.d, spec.s
    gb = growth_bound(spec)
    js = list(demo_j) if demo else []
    if demo and len(js) < stages:
        raise ValueError("one demo block count per stage is required")
    gammas = lipschitz_constants(spec, spec.k * max(js[:stages])) if demo else None
    quotients: list[int] = []
    certs: list[StageCertificate] = []
    pending: list[int] | None = None   # candidates for the quotient after the last stage
    final = None
    for i in range(stages):
        kind = _stage_kind(i)
        target_c = spec.r if kind == "f" else spec.u
        if i < len(free_quotients) and free_quotients[i]:
            if pending is not None:
                quotients.append(pending[0])
                pending = None
            quotients.extend(int(q) for q in free_quotients[i])
        cs = [(1, 0), (0, 1)] + convergents(quotients)
        state = (*cs[-2], *cs[-1])
        if pending is not None:
            first = pending
        elif quotients:
            first = list(range(1, D + 1))
        else:
            first = list(range(2, D + 2))   # keeps d >= 2 at the first convergent
        try:
            path = steer(state, (target_c, s), D, first, range(1, D + 1), max_depth)
        except LookupError as exc:
            raise SteeringFailed(i + 1, exc.args[0]) from None
        quotients.extend(path)
        c, d = convergents(quotients)[-1]
        if demo:
            j = js[i]
            n_index = spec.k * j * d
            gam = gammas.gamma(spec.k * j)
            thr: int | PowerOfTwo = demo_threshold(gam, theta)
            lg, source = gam.bit_length(), "demo"
        else:
            n_index = spec.k * N_prime * d * d
            thr, lg = certified_threshold(gb, n_index)
            source = "overestimate"
        certs.append(StageCertificate(
            stage=i + 1, kind=kind, index=len(quotients), c=c, d=d, c_mod=c % D,
            d_mod=d % D, n_index=n_index, gamma_source=source, log2_gamma=lg,
            threshold=str(thr), next_quotient="", growth_ok=False, certified=not demo))
        if i == stages - 1:
            final = thr
        elif isinstance(thr, PowerOfTwo):
            # nothing can be steered past a symbolic quotient
            raise SteeringFailed(i + 2, {"symbolic quotient": str(thr)})
        else:
            pending = [_least_in_class(thr, rho, D) for rho in range(D)]
    for cert in certs:
        nxt = quotients[cert.index] if cert.index < len(quotients) else final
        cert.next_quotient = str(nxt)
        cert.growth_ok = quotient_exceeds(nxt, parse_quotient(cert.threshold))
    return PointRecipe(spec.name, spec.k, N_prime, D, (spec.r, spec.u), quotients, final,
                       certs, demo, theta if demo else None, js[:stages])


def quotient_exceeds(e: int | PowerOfTwo, thr: int | PowerOfTwo) -> bool:
    """e >= thr for possibly symbolic operands."""
    if isinstance(e, PowerOfTwo) and isinstance(thr, PowerOfTwo):
        return e.exponent >= thr.exponent
    if isinstance(e, PowerOfTwo):
        return e.exponent >= thr.bit_length()
    if isinstance(thr, PowerOfTwo):
        return e.bit_length() > thr.exponent
    return e >= thr


def verify_recipe(spec: FamilySpec, recipe: PointRecipe) -> list[str]:
    """Replay a recipe from its quotients alone; returns a list of problems."""
    problems = []
    cs = convergents(recipe.quotients)
    gb = growth_bound(spec)
    D = spec.d
    for cert in recipe.stages:
        c, d = cs[cert.index - 1]
        if (c, d) != (cert.c, cert.d):
            problems.append(f"stage {cert.stage}: convergent mismatch")
        want = spec.r if cert.kind == "f" else spec.u
        if c % D != want % D or d % D != spec.s % D:
            problems.append(f"stage {cert.stage}: congruences fail")
        nxt = recipe.quotients[cert.index] if cert.index < len(recipe.quotients) \
            else recipe.final_quotient
        if cert.certified:
            n_index = spec.k * recipe.N_prime * d * d
            thr, _ = certified_threshold(gb, n_index)
            if n_index != cert.n_index or not quotient_exceeds(nxt, thr):
                problems.append(f"stage {cert.stage}: growth inequality fails")
        else:
            j = recipe.demo_j[cert.stage - 1]
            thr = demo_threshold(lipschitz_constants(spec, spec.k * j).gamma(spec.k * j),
                                 recipe.theta)
            if cert.n_index != spec.k * j * d or not quotient_exceeds(nxt, thr):
                problems.append(f"stage {cert.stage}: demo bound fails")
    if not RegularCF(recipe.quotients).determinant_ok():
        problems.append("determinant identity fails")
    return problems
