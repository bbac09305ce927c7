"""Desk-scale experiments: two-limit behaviour, bound audits, divergence witness."""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from fractions import Fraction

import gmpy2
from gmpy2 import mpc, mpfr

from .family import FamilySpec, iterate_unit_circle
from .periodic import (
    _canon,
    BlockAnalysis,
    Classification,
    ConstantsReport,
    QuadFraction,
    RootOfUnity,
    block_matrix,
    classify,
    growth_constants,
    h_value,
    matmul,
    units,
)
from .pointgen import DEFAULT_DEMO_BUDGET, PointRecipe
from .scalars import chordal_distance, cyclotomic_embed, exp_2pi_i, working_precision
from .symbolic import EXACT_GAMMA_LIMIT, growth_bound, lipschitz_constants

DEFAULT_INDEX_BUDGET = 10 ** 6


class IndexBudgetExceeded(RuntimeError):
    pass


class InsufficientStages(RuntimeError):
    pass


class WitnessRefused(InsufficientStages):
    """The two subsequence limits coincide, so there is nothing to witness."""


def _cstr(z: mpc, digits: int = 30) -> list[str]:
    return [format(z.real, f".{digits}g"), format(z.imag, f".{digits}g")]


def _rstr(x, digits: int = 17) -> str:
    return format(mpfr(x), f".{digits}g")


# ---------------------------------------------------------------------------
# pilot data
# ---------------------------------------------------------------------------

def pilot_block(spec: FamilySpec, m: int | None = None, r: int | None = None) -> BlockAnalysis:
    """The classified block at the smallest modulus of the progression (or a given one)."""
    m = spec.s if m is None else m
    if r is None:
        r = units(m)[0]
    return classify(block_matrix(spec, RootOfUnity(m, r), rec2_checks=0))


def pilot_constants(spec: FamilySpec, bits: int = 256) -> tuple[BlockAnalysis, ConstantsReport]:
    blk = pilot_block(spec)
    return blk, growth_constants(blk, bits)


def class_representative(spec: FamilySpec, c_mod: int) -> RootOfUnity:
    """Smallest root of unity with m = s and r = c_mod (mod d)."""
    D = spec.d
    m = spec.s if spec.s > 1 else spec.s + D
    while True:
        for r in range(c_mod % D, m, D):
            if r > 0 and math.gcd(r, m) == 1:
                return RootOfUnity(m, r)
        m += D


def target_h(spec: FamilySpec, c_mod: int):
    root = class_representative(spec, c_mod)
    return h_value(spec, root), root


# ---------------------------------------------------------------------------
# two-limit experiment
# ---------------------------------------------------------------------------

@dataclass
class StageRecord:
    stage: int
    kind: str
    c: int
    d: int
    j: int
    indices: tuple[int, int]
    feasible: bool
    certified: bool
    notice: str = ""
    H: tuple[mpc, mpc] | None = None
    target: mpc | None = None
    deviation: mpfr | None = None
    bound: mpfr | None = None
    within_bound: bool | None = None
    q_ratio: mpfr | None = None
    oracle_discrepancy: mpfr | None = None
    state: tuple | None = None  # (P_n, P_{n-1}, Q_n, Q_{n-1}) at n = indices[0]

    def to_dict(self) -> dict:
        out = {"stage": self.stage, "kind": self.kind, "c": str(self.c), "d": str(self.d),
               "j": str(self.j), "indices": [str(i) for i in self.indices],
               "feasible": self.feasible, "certified": self.certified, "notice": self.notice}
        if self.feasible:
            out.update({
                "root_t": f"{self.c}/{self.d}",
                "H_measured": [_cstr(h) for h in self.H],
                "H_target": _cstr(self.target),
                "deviation": _rstr(self.deviation),
                "bound": None if self.bound is None else _rstr(self.bound),
                "within_bound": self.within_bound,
                "q_ratio": _rstr(self.q_ratio),
                "oracle_discrepancy": None if self.oracle_discrepancy is None
                else _rstr(self.oracle_discrepancy, 6),
            })
        return out


@dataclass
class TwoLimitReport:
    family: str
    demo: bool
    bits: int
    t_hat: Fraction
    N_prime: int
    case: str
    stages: list[StageRecord]
    targets: dict[str, mpc] = field(default_factory=dict)
    limit_gap: mpfr = mpfr(0)
    limit_gap_exact_zero: bool = False
    centroid_gap: mpfr | None = None
    clusters_match: bool | None = None
    deviations_monotone: bool | None = None
    q_ratio_sup: mpfr | None = None
    q_ratio_interval: tuple[mpfr, mpfr] | None = None
    series: list[tuple[int, mpfr, mpfr]] = field(default_factory=list)
    exact_targets: dict[str, QuadFraction] = field(default_factory=dict)

    @property
    def feasible(self) -> list[StageRecord]:
        return [s for s in self.stages if s.feasible]

    def to_dict(self) -> dict:
        return {
            "family": self.family, "demo": self.demo,
            "label": "demo (not certified)" if self.demo else "certified stages",
            "precision_bits": self.bits,
            "t_hat": f"{self.t_hat.numerator}/{self.t_hat.denominator}",
            "N_prime": self.N_prime, "case": self.case,
            "stages": [s.to_dict() for s in self.stages],
            "targets": {k: _cstr(v) for k, v in sorted(self.targets.items())},
            "summary": {
                "limit_gap": _rstr(self.limit_gap),
                "limit_gap_exact_zero": self.limit_gap_exact_zero,
                "centroid_gap": None if self.centroid_gap is None else _rstr(self.centroid_gap),
                "clusters_match_stage_kinds": self.clusters_match,
                "deviations_monotone": self.deviations_monotone,
                "q_ratio_sup": None if self.q_ratio_sup is None else _rstr(self.q_ratio_sup),
                "q_ratio_interval": None if self.q_ratio_interval is None
                else [_rstr(x) for x in self.q_ratio_interval],
            },
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def series_csv(self) -> str:
        lines = ["n,dev_a,dev_b"]
        for n, da, db in self.series:
            lines.append(f"{n},{_rstr(da, 12)},{_rstr(db, 12)}")
        return "\n".join(lines) + "\n"


def stage_bound(consts: ConstantsReport, d: int, N_prime: int, gamma_bar: int) -> mpfr:
    """The deviation envelope for a certified stage with denominator d."""
    C = consts.constants
    with working_precision(consts.bits):
        d = mpfr(d)
        gb = mpfr(gamma_bar)
        if consts.case == "distinct":
            return (C["C16"] / (d * d * gb) + C["C17"] / (d * d * C["C1"] ** (N_prime * d))
                    + C["C14"] * C["C8"] ** (N_prime * d))
        return (C["D14"] / (d * d * gb) + C["D15"] / (d ** 3 * N_prime)
                + C["D11"] / (N_prime * d))


def _run_states(spec: FamilySpec, t: Fraction, wanted: set[int], bits: int,
                series_for=None, stride: int = 0):
    top = max(wanted)
    states, series = {}, []
    with working_precision(bits):
        yeta = exp_2pi_i(t * spec.eta, bits)
    for n, P, Pp, Q, Qp in iterate_unit_circle(spec, t, top, bits):
        if n in wanted:
            states[n] = (P, Pp, Q, Qp)
        if series_for is not None and stride and n % stride == 0 and n > 0:
            with working_precision(bits):
                H = yeta * Q / P
                series.append((n, abs(H - series_for[0]), abs(H - series_for[1])))
    return states, series, yeta


def _two_means(points: list[mpc]) -> list[int]:
    """Deterministic 2-means labels (seeded by the farthest pair)."""
    best, pair = mpfr(-1), (0, 1)
    for i in range(len(points)):
        for j in range(i + 1, len(points)):
            dist = abs(points[i] - points[j])
            if dist > best:
                best, pair = dist, (i, j)
    cents = [points[pair[0]], points[pair[1]]]
    labels = [0] * len(points)
    for _ in range(50):
        new = [0 if abs(p - cents[0]) <= abs(p - cents[1]) else 1 for p in points]
        for g in (0, 1):
            members = [p for p, lab in zip(points, new) if lab == g]
            if members:
                cents[g] = sum(members, mpc(0)) / len(members)
        if new == labels:
            break
        labels = new
    return labels


def two_limit_experiment(spec: FamilySpec, recipe: PointRecipe, bits: int = 512,
                         budget: int | None = None, oracle: bool = False,
                         series_points: int = 0) -> TwoLimitReport:
    """Measure H_n(y), y = exp(2 pi i t_hat), at every feasible stage index."""
    if len(recipe.stages) < 1:
        raise InsufficientStages("recipe has no stages")
    if budget is None:
        budget = DEFAULT_DEMO_BUDGET if recipe.demo else DEFAULT_INDEX_BUDGET
    blk, consts = pilot_constants(spec, min(bits, 256))
    t = recipe.t_hat
    gb = growth_bound(spec)
    kinds = {"f": recipe.residues[0], "g": recipe.residues[1]}
    targets, exact = {}, {}
    for kind, res in kinds.items():
        h, _ = target_h(spec, res)
        exact[kind] = h.exact
        targets[kind] = h.exact.embed(bits)
    records: list[StageRecord] = []
    for cert in recipe.stages:
        n_index = cert.n_index
        j = n_index // (spec.k * cert.d)
        rec = StageRecord(cert.stage, cert.kind, cert.c, cert.d, j, (n_index - 1, n_index - 2),
                          feasible=n_index <= budget, certified=cert.certified)
        if not rec.feasible:
            rec.notice = f"index {n_index} exceeds budget {budget}; stage skipped"
        records.append(rec)
    feasible = [r for r in records if r.feasible]
    if not feasible:
        raise IndexBudgetExceeded("no stage index fits the budget")
    wanted = {r.indices[0] for r in feasible}
    top = max(wanted)
    stride = max(1, top // series_points) if series_points else 0
    states, series, yeta = _run_states(spec, t, wanted, bits,
                                       (targets["f"], targets["g"]), stride)
    oracle_states = None
    if oracle:
        oracle_states, _, _ = _run_states(spec, t, wanted, 2 * bits)
    with working_precision(bits):
        for rec in feasible:
            P, Pp, Q, Qp = states[rec.indices[0]]
            rec.state = (P, Pp, Q, Qp)
            H = (yeta * Q / P, yeta * Qp / Pp)
            rec.H = H
            rec.target = targets[rec.kind]
            rec.deviation = max(abs(H[0] - rec.target), abs(H[1] - rec.target))
            rec.q_ratio = abs(Q / Qp)
            if rec.certified:
                rec.bound = stage_bound(consts, rec.d, recipe.N_prime,
                                        gb.gamma_bar(spec.k * recipe.N_prime * rec.d ** 2))
                rec.within_bound = bool(rec.deviation <= rec.bound)
            if oracle_states is not None:
                with working_precision(2 * bits):
                    P2, Pp2, Q2, Qp2 = oracle_states[rec.indices[0]]
                    y2 = exp_2pi_i(t * spec.eta, 2 * bits)
                    H2 = (y2 * Q2 / P2, y2 * Qp2 / Pp2)
                    rec.oracle_discrepancy = max(abs(H2[0] - H[0]), abs(H2[1] - H[1]))
    rep = TwoLimitReport(spec.name, recipe.demo, bits, t, recipe.N_prime, consts.case,
                         records, targets, series=series, exact_targets=exact)
    _summarize(rep, consts, bits)
    return rep


def _summarize(rep: TwoLimitReport, consts: ConstantsReport, bits: int) -> None:
    with working_precision(bits):
        same = rep.exact_targets["f"].equals(rep.exact_targets["g"])
        rep.limit_gap_exact_zero = same
        rep.limit_gap = mpfr(0) if same else abs(rep.targets["f"] - rep.targets["g"])
        feas = rep.feasible
        devs = [r.deviation for r in feas]
        rep.deviations_monotone = all(a > b for a, b in zip(devs, devs[1:])) if len(devs) > 1 else None
        rep.q_ratio_sup = max((r.q_ratio for r in feas), default=None)
        C = consts.constants
        rep.q_ratio_interval = (C["C6"], C["C7"]) if consts.case == "distinct" else (C["D5"], C["D6"])
        pts, kinds = [], []
        for r in feas:
            pts.extend(r.H)
            kinds.extend([r.kind, r.kind])
        if len(set(kinds)) == 2:
            labels = _two_means(pts)
            groups = {0: [], 1: []}
            for p, lab in zip(pts, labels):
                groups[lab].append(p)
            if groups[0] and groups[1]:
                c0 = sum(groups[0], mpc(0)) / len(groups[0])
                c1 = sum(groups[1], mpc(0)) / len(groups[1])
                rep.centroid_gap = abs(c0 - c1)
            else:
                rep.centroid_gap = mpfr(0)
            by_kind = {}
            for lab, kind in zip(labels, kinds):
                by_kind.setdefault(kind, set()).add(lab)
            rep.clusters_match = (all(len(v) == 1 for v in by_kind.values())
                                  and by_kind["f"] != by_kind["g"])


# ---------------------------------------------------------------------------
# general divergence witness
# ---------------------------------------------------------------------------

@dataclass
class Witness:
    family: str
    limit_pair: tuple[mpc, mpc]
    limit_separation: mpfr
    q_ratios: list[mpfr]
    B: mpfr
    B_interval: tuple[mpfr, mpfr]
    B_within: bool
    distances: dict[str, list[tuple[int, mpfr]]]
    decreasing: dict[str, bool]

    def to_dict(self) -> dict:
        return {
            "label": "witness at desk scale (not a proof)",
            "family": self.family,
            "limits": [_cstr(z) for z in self.limit_pair],
            "limit_separation": _rstr(self.limit_separation),
            "q_ratios": [_rstr(x) for x in self.q_ratios],
            "B": _rstr(self.B),
            "B_interval": [_rstr(x) for x in self.B_interval],
            "B_within_interval": self.B_within,
            "chordal_distances": {k: [[str(n), _rstr(v, 12)] for n, v in seq]
                                  for k, seq in sorted(self.distances.items())},
            "strictly_decreasing": dict(sorted(self.decreasing.items())),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _invert(state, g):
    P, Pp, Q, Qp = state
    return (P - g * Q) / (g * Qp - Pp)


def general_divergence_witness(spec: FamilySpec, report: TwoLimitReport) -> Witness:
    """Package the two limits, the Q-ratio bound and the chordal collapse."""
    feas = report.feasible
    by_kind = {k: [r for r in feas if r.kind == k] for k in ("f", "g")}
    if not by_kind["f"] or not by_kind["g"]:
        raise InsufficientStages("need a feasible stage of each kind")
    if report.limit_gap_exact_zero:
        raise WitnessRefused("both subsequences share one limit (gap 0)")
    bits = report.bits
    with working_precision(bits):
        yeta = exp_2pi_i(report.t_hat * spec.eta, bits)
        L = {k: yeta / report.targets[k] for k in ("f", "g")}
        ratios = [r.q_ratio for r in feas]
        B = max(ratios)
        lo, hi = report.q_ratio_interval
        within = all(lo <= x <= hi for x in ratios)
        distances, decreasing = {}, {}
        for g_kind, other in (("f", "g"), ("g", "f")):
            seq = []
            for rec in by_kind[other]:
                P, Pp, Q, Qp = rec.state
                v = _invert(rec.state, L[g_kind])
                seq.append((rec.indices[0], chordal_distance(v, -Q / Qp, bits)))
            key = f"g=L_{g_kind}"
            distances[key] = seq
            vals = [x for _, x in seq]
            decreasing[key] = all(a > b for a, b in zip(vals, vals[1:]))
    return Witness(spec.name, (L["f"], L["g"]), abs(L["f"] - L["g"]), ratios, B,
                   (lo, hi), within, distances, decreasing)


# ---------------------------------------------------------------------------
# bound audit
# ---------------------------------------------------------------------------

AUDIT_GUARD_BITS = 40


@dataclass
class AuditRow:
    j: int
    n: int
    check: str
    value: mpfr
    lower: mpfr | None
    upper: mpfr | None
    ok: bool

    def to_dict(self) -> dict:
        return {"j": self.j, "n": self.n, "check": self.check, "value": _rstr(self.value),
                "lower": None if self.lower is None else _rstr(self.lower),
                "upper": None if self.upper is None else _rstr(self.upper), "ok": self.ok}


@dataclass
class AuditReport:
    family: str
    m: int
    r: int
    case: str
    j_range: tuple[int, int]
    constants: ConstantsReport
    rows: list[AuditRow]
    seed: int

    @property
    def violations(self) -> list[AuditRow]:
        return [row for row in self.rows if not row.ok]

    @property
    def passed(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {"family": self.family, "m": self.m, "r": self.r, "case": self.case,
                "j_range": list(self.j_range), "seed": self.seed,
                "constants": self.constants.to_dict(),
                "checks": len(self.rows), "violations": [v.to_dict() for v in self.violations],
                "passed": self.passed}

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


class _Auditor:
    def __init__(self, bits: int):
        self.rows: list[AuditRow] = []
        self.tol = mpfr(2) ** (-(bits - AUDIT_GUARD_BITS))

    def check(self, j, n, name, value, lower=None, upper=None):
        ok = True
        if lower is not None and value < lower * (1 - self.tol):
            ok = False
        if upper is not None and value > upper * (1 + self.tol):
            ok = False
        self.rows.append(AuditRow(j, n, name, value, lower, upper, ok))

    def equal(self, j, n, name, value, target):
        ok = abs(value - target) <= self.tol * max(abs(target), 1)
        self.rows.append(AuditRow(j, n, name, value, target, target, ok))


def _block_powers(blk: BlockAnalysis, j_max: int):
    """Exact M**j for j = 1..j_max."""
    M = blk.matrix
    cur = M
    yield 1, cur
    for j in range(2, j_max + 1):
        cur = [[_canon(x) for x in row] for row in matmul(cur, M)]
        yield j, cur


def _disk_point(rng: random.Random, radius: float) -> mpc:
    rho = radius * math.sqrt(rng.random())
    phi = 2 * math.pi * rng.random()
    return mpc(rho * math.cos(phi), rho * math.sin(phi))


def _perturbed_y_states(spec: FamilySpec, root: RootOfUnity, indices: set[int], bits: int):
    """P_n, Q_n at a point y within the Lipschitz radius of q, with y^eta and |q - y|."""
    n_max = max(indices)
    if n_max <= EXACT_GAMMA_LIMIT:
        gam = max(lipschitz_constants(spec, n_max).gamma(n) for n in indices)
    else:
        gam = growth_bound(spec).gamma_bar(n_max)
    # 2 pi gamma delta <= 1/4 keeps every epsilon below 1/2
    delta = Fraction(1, 8 * (gam * 355 // 113 + 1) + 8)   # 355/113 > pi
    work = bits + 2 * gam.bit_length() + 64
    t = root.t + delta
    states = {}
    for n, P, Pp, Q, Qp in iterate_unit_circle(spec, t, n_max, work):
        if n in indices:
            states[n] = (P, Q)
    with working_precision(work):
        y_eta = exp_2pi_i(t * spec.eta, work)
        dist = abs(exp_2pi_i(root.t, work) - exp_2pi_i(t, work))
    return states, y_eta, dist, work


def bound_audit(blk: BlockAnalysis, j_range: tuple[int, int] | None = None, bits: int = 256,
                seed: int = 0, samples: int = 3, spec: FamilySpec | None = None,
                root: RootOfUnity | None = None) -> AuditReport:
    """Check every growth and approximation envelope on exact block powers.

    ``j`` runs over ``j_range`` (default [N', 3N']).  The perturbation
    envelopes are exercised with seeded random offsets of modulus below 1/2
    and, when ``spec`` and ``root`` are given, at a nearby point y on the
    unit circle with the offsets actually measured.
    """
    if blk.classification is None:
        classify(blk)
    consts = growth_constants(blk, bits)
    C, N = consts.constants, consts.indices
    lo, hi = j_range or (consts.N_prime, 3 * consts.N_prime)
    if consts.case == "distinct":
        # tails shrink like C8**j and must stay resolvable
        with working_precision(bits):
            bits += int(gmpy2.ceil(hi * -gmpy2.log2(C["C8"]))) + 32
    rng = random.Random(seed)
    aud = _Auditor(bits)
    km = blk.k * blk.m
    eta_abs = abs(blk.eta)
    with working_precision(bits):
        if root is not None:
            qeta = cyclotomic_embed(root.power_eta(blk.eta), bits)
            q = exp_2pi_i(root.t, bits)
            t0 = root.t
        else:
            qeta, q, t0 = mpc(1), mpc(1), Fraction(0)
        G = blk.limit.embed(bits)
        H = qeta / G
        akm = cyclotomic_embed(blk.a_km, bits)
    measured = None
    if spec is not None and root is not None:
        wanted = set()
        for j in range(lo, hi + 1):
            wanted |= {j * km - 1, j * km - 2}
        measured = _perturbed_y_states(spec, root, wanted, bits)
    distinct = consts.case == "distinct"
    for j, Mj in _block_powers(blk, hi):
        if j < lo:
            continue
        with working_precision(bits):
            P1 = cyclotomic_embed(Mj[0][0], bits)
            Q1 = cyclotomic_embed(Mj[1][0], bits)
            P2 = cyclotomic_embed(Mj[0][1], bits) / akm
            Q2 = cyclotomic_embed(Mj[1][1], bits) / akm
            n1, n2 = j * km - 1, j * km - 2
            G1, G2 = P1 / Q1, P2 / Q2
            if distinct:
                growth = C["C1"] ** j
                aud.check(j, n1, "Q_last_growth", abs(Q1), C["C2"] * growth, C["C3"] * growth)
                if j >= N["N2"]:
                    aud.check(j, n2, "Q_prev_growth", abs(Q2), C["C4"] * growth, C["C5"] * growth)
                    aud.check(j, n1, "Q_ratio", abs(Q1 / Q2), C["C6"], C["C7"])
                tail = C["C8"] ** j
                aud.check(j, n1, "G_tail_last", abs(G - G1), C["C9"] * tail, C["C10"] * tail)
                if j >= N["N5"]:
                    aud.check(j, n2, "G_tail_prev", abs(G - G2), C["C11"] * tail, C["C12"] * tail)
                if j >= N["N6"]:
                    for n, Gn in ((n1, G1), (n2, G2)):
                        aud.check(j, n, "H_tail", abs(H - qeta / Gn), C["C13"] * tail,
                                  C["C14"] * tail)
                g_pert = (N["N9"], C["C15"] / growth)
                h_pert = (N["N10"], C["C16"], C["C17"] / growth, C["C14"] * tail)
            else:
                D1j = C["D1"] ** j
                aud.equal(j, n1, "Q_last_growth", abs(Q1), j * C["D2"] * D1j)
                if j >= N["N1"]:
                    aud.check(j, n2, "Q_prev_growth", abs(Q2), C["D3"] * j * D1j,
                              C["D4"] * j * D1j)
                    aud.check(j, n1, "Q_ratio", abs(Q1 / Q2), C["D5"], C["D6"])
                aud.equal(j, n1, "G_tail_last", abs(G - G1), C["D7"] / j)
                if j >= N["N3"]:
                    aud.check(j, n2, "G_tail_prev", abs(G - G2), C["D8"] / j, C["D9"] / j)
                if j >= N["N4"]:
                    for n, Gn in ((n1, G1), (n2, G2)):
                        aud.check(j, n, "H_tail", abs(H - qeta / Gn), C["D10"] / j, C["D11"] / j)
                g_pert = (N["N7"], C["D13"] / j)
                h_pert = (N["N8"], C["D14"], C["D15"] / j, C["D11"] / j)
            trials = []
            for _ in range(samples):
                e1, e2 = _disk_point(rng, 0.49), _disk_point(rng, 0.49)
                # keep the angle from q to y below pi / (2 |eta|)
                span = min(0.24 / float(eta_abs), 0.48) if eta_abs else 0.48
                dt = Fraction(rng.uniform(-span, span)).limit_denominator(1 << 40)
                trials.append(("random", e1, e2, t0 + dt))
            for kind, e1, e2, ty in trials:
                y = exp_2pi_i(ty, bits)
                yeta = qeta * exp_2pi_i((ty - t0) * blk.eta, bits)
                dist = abs(q - y)
                eps = max(abs(e1), abs(e2))
                for n, Pn, Qn, Gn in ((n1, P1, Q1, G1), (n2, P2, Q2, G2)):
                    Gy = (Pn + e1) / (Qn + e2)
                    if j >= g_pert[0]:
                        aud.check(j, n, f"G_perturb_{kind}", abs(Gy - Gn), None, g_pert[1] * eps)
                    if j >= h_pert[0]:
                        Hy = yeta / Gy
                        env = h_pert[1] * dist + h_pert[2] * eps
                        aud.check(j, n, f"H_perturb_{kind}", abs(Hy - qeta / Gn), None, env)
                        aud.check(j, n, f"H_to_limit_{kind}", abs(Hy - H), None, env + h_pert[3])
        if measured is not None:
            states, yeta_m, dist_m, work = measured
            with working_precision(work):
                for n, Pn, Qn in ((n1, P1, Q1), (n2, P2, Q2)):
                    Py, Qy = states[n]
                    eps = max(abs(Py - Pn), abs(Qy - Qn))
                    Gn, Gy = Pn / Qn, Py / Qy
                    if j >= g_pert[0]:
                        aud.check(j, n, "G_perturb_measured", abs(Gy - Gn), None, g_pert[1] * eps)
                    if j >= h_pert[0]:
                        env = h_pert[1] * dist_m + h_pert[2] * eps
                        Hy = yeta_m / Gy
                        aud.check(j, n, "H_perturb_measured", abs(Hy - qeta / Gn), None, env)
                        aud.check(j, n, "H_to_limit_measured", abs(Hy - H), None, env + h_pert[3])
    return AuditReport(blk.family, blk.m, blk.r, consts.case, (lo, hi), consts, aud.rows, seed)


def family_audit(spec: FamilySpec, m: int, r: int | None = None, j_range=None,
                 bits: int = 256, seed: int = 0) -> AuditReport:
    root = RootOfUnity(m, units(m)[0] if r is None else r)
    blk = classify(block_matrix(spec, root, rec2_checks=0))
    if blk.divergent:
        raise ValueError(f"{spec.name} diverges at m={m}, r={root.r}")
    return bound_audit(blk, j_range, bits, seed, spec=spec, root=root)
