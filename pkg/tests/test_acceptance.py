"""Acceptance suite: one pass/fail line per criterion.

Runs under pytest (lines are repeated in the terminal summary) or directly
with ``python3 tests/test_acceptance.py``.
"""

from __future__ import annotations

import random
import subprocess
import sys
import time
from fractions import Fraction

import gmpy2
import pytest
from gmpy2 import mpfr

from qcfrac.family import builtin_families, get_family
from qcfrac.harness import (WitnessRefused, bound_audit, family_audit,
                            general_divergence_witness, pilot_constants, two_limit_experiment)
from qcfrac.periodic import (BlockAnalysis, RootOfUnity, block_matrix, block_power_closed_form,
                             classify, limit_value, matrices_equal, matmul, schur_check,
                             table_check, units)
from qcfrac.pointgen import build_sdiamond_point, tower_point
from qcfrac.scalars import exp_2pi_i, working_precision
from qcfrac.symbolic import lipschitz_check, lipschitz_constants

# pinned tolerances and sizes
SCHUR_M_MAX = 100
SCHUR_TOL_BITS = 200
SCHUR_SECONDS = 300
TABLE_M_MAX = 49
TABLE_SECONDS = 120
ENDPOINT_TOL = mpfr(2) ** -200
CLOSED_FORM_J = 50
TOWER_TAIL = "9277885083112437522992318812011"
TOWER_PRINTED = ("484848484848484848484848484848484848484848484848484848484"
                 "84848484848484848484849277885083112437522992318812011")
TOWER_SECONDS = 60
LIPSCHITZ_PAIRS = 1000
LIPSCHITZ_N = 60
LIPSCHITZ_SEED = 20240601
AUDIT_SEED = 0
TWO_LIMIT_BITS = 512
DEMO_THETA = 0.01
DEMO_STAGES = 4
CENTROID_REL_TOL = 0.10
CONTROL_GAP = mpfr(2) ** -(TWO_LIMIT_BITS // 4)
TWO_LIMIT_SECONDS = 1800
ORACLE_AGREEMENT = mpfr(2) ** -100

RESULTS: list[str] = []
K = get_family("K")
SYNTHETIC = [[2, -1], [1, 0]]


def _record(n: int, ok: bool, detail: str) -> None:
    line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS.append(line)
    print(line)


_cache: dict = {}


def _n_prime() -> int:
    if "np" not in _cache:
        _cache["np"] = pilot_constants(K)[1].N_prime
    return _cache["np"]


def _demo_report():
    if "demo" not in _cache:
        recipe = build_sdiamond_point(K, DEMO_STAGES, _n_prime(), demo=True, theta=DEMO_THETA)
        _cache["demo"] = (recipe, two_limit_experiment(K, recipe, bits=TWO_LIMIT_BITS))
    return _cache["demo"]


def criterion_1() -> bool:
    t0 = time.time()
    rep = schur_check(K, SCHUR_M_MAX, bits=256, tolerance_bits=SCHUR_TOL_BITS)
    elapsed = time.time() - t0
    # independent count of roots with 5 | m
    expected_div = sum(len(units(m)) for m in range(5, SCHUR_M_MAX + 1, 5))
    expected_all = sum(len(units(m)) for m in range(1, SCHUR_M_MAX + 1))
    ok = (not rep.mismatches and rep.divergent == expected_div
          and rep.compared == expected_all and elapsed < SCHUR_SECONDS)
    _record(1, ok, f"Schur agreement m<={SCHUR_M_MAX}: {rep.compared} roots, "
                   f"{rep.divergent} divergent (expected {expected_div}), "
                   f"{len(rep.mismatches)} mismatches at 2^-{SCHUR_TOL_BITS}, {elapsed:.0f}s")
    return ok


def criterion_2() -> bool:
    t0 = time.time()
    counts, ok = {}, True
    for name in ("K", "S1", "S2", "S3"):
        try:
            rep = table_check(get_family(name), TABLE_M_MAX)
            counts[name] = len(rep.checked)
            ok &= not rep.exploratory and bool(rep.checked)
        except AssertionError as exc:
            counts[name] = f"mismatch: {exc}"
            ok = False
    elapsed = time.time() - t0
    ok &= elapsed < TABLE_SECONDS
    _record(2, ok, f"table exactness m<={TABLE_M_MAX}: checked {counts}, {elapsed:.0f}s")
    return ok


def criterion_3() -> bool:
    with working_precision(256):
        phi = (1 + gmpy2.sqrt(5)) / 2
        e1 = abs(limit_value(classify(block_matrix(K, RootOfUnity(1, 1)))) - phi)
        e2 = abs(limit_value(classify(block_matrix(K, RootOfUnity(2, 1)))) - 2 / (1 + gmpy2.sqrt(5)))
    ok = e1 < ENDPOINT_TOL and e2 < ENDPOINT_TOL
    _record(3, ok, f"K(1)=phi err {float(e1):.1e}, K(-1)=1/phi err {float(e2):.1e} "
                   f"(tol 2^-200)")
    return ok


def _closed_form_blocks():
    blocks = [("synthetic", classify(BlockAnalysis.from_matrix(SYNTHETIC)))]
    for name in ("K", "S1", "S2", "S3"):
        spec = get_family(name)
        for m in (spec.s, spec.s + spec.d):
            for r in units(m):
                blocks.append((f"{name}(m={m},r={r})",
                               classify(block_matrix(spec, RootOfUnity(m, r), rec2_checks=0))))
    return blocks


def criterion_4() -> bool:
    bad, count = [], 0
    for label, blk in _closed_form_blocks():
        if blk.divergent:
            continue
        power = blk.matrix
        for j in range(1, CLOSED_FORM_J + 1):
            if j > 1:
                power = matmul(power, blk.matrix)
            count += 1
            if not matrices_equal(block_power_closed_form(blk, j), power):
                bad.append((label, j))
    ok = not bad
    _record(4, ok, f"closed-form block powers j<={CLOSED_FORM_J}: {count} exact comparisons, "
                   f"{len(bad)} mismatches")
    return ok


def criterion_5() -> bool:
    t0 = time.time()
    proc = subprocess.run([sys.executable, "-m", "qcfrac.cli", "tower", "--levels", "3"],
                          capture_output=True, text=True, timeout=TOWER_SECONDS)
    elapsed = time.time() - t0
    digits = proc.stdout.strip()
    ok = (proc.returncode == 0 and digits.startswith("0." + TOWER_PRINTED)
          and TOWER_TAIL in digits and elapsed < TOWER_SECONDS
          and digits == tower_point(3).decimal)
    _record(5, ok, f"tower(3): {len(digits) - 2} digits, printed {len(TOWER_PRINTED)} matched, "
                   f"{elapsed:.1f}s")
    return ok


def criterion_6() -> bool:
    rng = random.Random(LIPSCHITZ_SEED)
    summary, ok = {}, True
    for spec in builtin_families():
        table = lipschitz_constants(spec, LIPSCHITZ_N)
        fails = 0
        for _ in range(LIPSCHITZ_PAIRS):
            n = rng.randint(0, LIPSCHITZ_N)
            tx = Fraction(rng.getrandbits(48), 1 << 48)
            ty = Fraction(rng.getrandbits(48), 1 << 48)
            x, y = exp_2pi_i(tx, 256), exp_2pi_i(ty, 256)
            fails += not lipschitz_check(spec, n, x, y, 256, table)
        summary[spec.name] = fails
        ok &= fails == 0
    _record(6, ok, f"Lipschitz {LIPSCHITZ_PAIRS} pairs/family, n<={LIPSCHITZ_N}: "
                   f"violations {summary}")
    return ok


def criterion_7() -> bool:
    reports = [("synthetic", bound_audit(BlockAnalysis.from_matrix(SYNTHETIC), seed=AUDIT_SEED))]
    for m in (1, 6):
        reports.append((f"K m={m}", family_audit(K, m, seed=AUDIT_SEED)))
    parts, ok = [], True
    for label, rep in reports:
        parts.append(f"{label} [{rep.case}, j {rep.j_range[0]}..{rep.j_range[1]}]: "
                     f"{len(rep.rows)} checks, {len(rep.violations)} violations")
        ok &= rep.passed and bool(rep.rows) and rep.j_range == (rep.constants.N_prime,
                                                                3 * rep.constants.N_prime)
    _record(7, ok, "bound audit " + "; ".join(parts))
    return ok


def criterion_8() -> bool:
    t0 = time.time()
    recipe = build_sdiamond_point(K, 2, _n_prime())
    cert = two_limit_experiment(K, recipe, bits=TWO_LIMIT_BITS, oracle=True)
    first = cert.stages[0]
    ok_a = (first.feasible and first.certified and first.within_bound is True
            and first.oracle_discrepancy < ORACLE_AGREEMENT)
    _, demo = _demo_report()
    rel = abs(demo.centroid_gap - demo.limit_gap) / demo.limit_gap
    ok_b = (len(demo.feasible) == DEMO_STAGES and demo.clusters_match
            and rel < CENTROID_REL_TOL)
    ctrl_spec = K.with_residues(K.r, K.r)
    ctrl_recipe = build_sdiamond_point(ctrl_spec, DEMO_STAGES, _n_prime(), demo=True,
                                       theta=DEMO_THETA)
    ctrl = two_limit_experiment(ctrl_spec, ctrl_recipe, bits=TWO_LIMIT_BITS)
    with working_precision(TWO_LIMIT_BITS):
        ctrl_numeric = abs(ctrl.targets["f"] - ctrl.targets["g"])
    ok_c = ctrl.limit_gap < CONTROL_GAP and ctrl_numeric < CONTROL_GAP
    elapsed = time.time() - t0
    ok = ok_a and ok_b and ok_c and elapsed < TWO_LIMIT_SECONDS
    _record(8, ok, f"(a) stage 1 d={first.d}: deviation {float(first.deviation):.3e} <= bound "
                   f"{float(first.bound):.3e}, oracle diff {float(first.oracle_discrepancy):.1e}; "
                   f"(b) centroid gap {float(demo.centroid_gap):.4f} vs exact "
                   f"{float(demo.limit_gap):.4f} (rel {rel:.3f}); control gap "
                   f"{float(ctrl.limit_gap):.1e} < 2^-{TWO_LIMIT_BITS // 4}; {elapsed:.0f}s")
    return ok


def criterion_9() -> bool:
    _, demo = _demo_report()
    w = general_divergence_witness(K, demo)
    lo, hi = w.B_interval
    ok = bool(w.B_within and lo <= w.B <= hi and w.decreasing and all(w.decreasing.values()))
    ctrl_spec = K.with_residues(K.r, K.r)
    ctrl_recipe = build_sdiamond_point(ctrl_spec, 2, _n_prime(), demo=True, theta=DEMO_THETA)
    ctrl = two_limit_experiment(ctrl_spec, ctrl_recipe, bits=256)
    try:
        general_divergence_witness(ctrl_spec, ctrl)
        refused = False
    except WitnessRefused:
        refused = True
    ok &= refused
    seqs = "; ".join(f"{k}: " + " > ".join(f"{float(v):.2e}" for _, v in s)
                     for k, s in sorted(w.distances.items()))
    _record(9, ok, f"witness B={float(w.B):.4f} in [{float(lo):.4f}, {float(hi):.4f}]; {seqs}; "
                   f"control refused={refused}")
    return ok


def _cli(*argv) -> bytes:
    return subprocess.run([sys.executable, "-m", "qcfrac.cli", *argv], capture_output=True,
                          check=True, timeout=600).stdout


def criterion_10(tmp_dir=None) -> bool:
    import tempfile
    from pathlib import Path
    with tempfile.TemporaryDirectory(dir=tmp_dir) as d:
        recipe = Path(d) / "recipe.json"
        outs = []
        for _ in range(2):
            rec = _cli("build-point", "--family", "K", "--stages", "3", "--demo")
            recipe.write_bytes(rec)
            outs.append([
                rec,
                _cli("verify", "--recipe", str(recipe), "--precision-bits", "256"),
                _cli("audit", "--family", "K", "--m", "1", "--seed", "11"),
                _cli("lipschitz", "--family", "S1", "--n", "30", "--pairs", "50", "--seed", "5"),
                _cli("sweep", "--family", "S2", "--m-max", "10"),
            ])
    ok = outs[0] == outs[1] and all(outs[0])
    _record(10, ok, f"determinism: {len(outs[0])} reports byte-identical across two runs "
                    f"({sum(len(x) for x in outs[0])} bytes)")
    return ok


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6,
            criterion_7, criterion_8, criterion_9, criterion_10]


@pytest.mark.parametrize("n", range(1, 11))
def test_criterion(n):
    try:
        ok = CRITERIA[n - 1]()
    except Exception as exc:
        _record(n, False, f"error {type(exc).__name__}: {exc}")
        raise
    assert ok, RESULTS[-1]


if __name__ == "__main__":
    failed = 0
    for fn in CRITERIA:
        try:
            failed += not fn()
        except Exception as exc:  # report and continue with the next criterion
            failed += 1
            _record(int(fn.__name__.split("_")[1]), False, f"error {type(exc).__name__}: {exc}")
    sys.exit(1 if failed else 0)
