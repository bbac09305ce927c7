"""Command-line entry point: ``qcfrac <command> [flags]``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import random
import sys
from fractions import Fraction
from pathlib import Path

from gmpy2 import mpc

from .family import ConfigError, builtin_families, get_family, load_family, run_recurrence
from .harness import (IndexBudgetExceeded, InsufficientStages, WitnessRefused, bound_audit,
                      family_audit, general_divergence_witness, pilot_constants,
                      two_limit_experiment)
from .periodic import (BlockAnalysis, DegenerateBlock, TableMismatch, UndefinedH, schur_check,
                       sweep, table_check, SWEEP_COLUMNS)
from .pointgen import (LevelTooLarge, PointRecipe, SteeringFailed, build_sdiamond_point,
                       tower_point, verify_recipe)
from .scalars import (INF, CyclotomicElement, PrecisionExhausted, UnitPoint, exp_2pi_i,
                      working_precision)
from .symbolic import BudgetExceeded, lipschitz_check, lipschitz_constants

EXIT_OK, EXIT_VERIFY, EXIT_BUDGET, EXIT_CONFIG = 0, 2, 3, 4
DEFAULT_SEED = 20240601
SYNTHETIC = "synthetic-equal"


class VerificationFailed(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def _spec(args):
    if args.config:
        return load_family(args.config)
    if not args.family:
        raise ConfigError("--family or --config is required")
    try:
        return get_family(args.family)
    except KeyError as exc:
        raise ConfigError(f"unknown family {args.family!r}") from exc


def _emit(args, text: str) -> None:
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def parse_q(text: str):
    """Rational ``p/q``, exact root ``zeta:r/m``, unit-circle point ``circle:t`` or complex ``a+bj``."""
    text = text.strip()
    if text.startswith("zeta:"):
        r, m = text[5:].split("/")
        return CyclotomicElement.zeta(int(m), int(r))
    if text.startswith("circle:"):
        return UnitPoint(Fraction(text[7:]))
    try:
        return Fraction(text)
    except ValueError:
        pass
    try:
        z = complex(text)
    except ValueError as exc:
        raise ConfigError(f"cannot parse q={text!r}") from exc
    return mpc(z)


def _show(x, bits: int) -> str:
    if isinstance(x, (int, Fraction)):
        return str(x)
    if isinstance(x, CyclotomicElement):
        rat = x.as_rational()
        return str(rat) if rat is not None else repr(x)
    digits = max(15, int(bits * 0.30103) - 5)
    with working_precision(bits):
        z = mpc(x)
        return f"{format(z.real, f'.{digits}g')}{'+' if z.imag >= 0 else '-'}" \
               f"{format(abs(z.imag), f'.{digits}g')}j"


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_families(args) -> int:
    _emit(args, _json([f.to_dict() for f in builtin_families()]))
    return EXIT_OK


def cmd_eval(args) -> int:
    spec = _spec(args)
    q = parse_q(args.q)
    states = run_recurrence(spec, q, args.n, args.precision_bits)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n", "P_n", "Q_n", "P_n/Q_n"])
    for st in states:
        try:
            val = st.value
            val_s = "inf" if val is INF else _show(val, args.precision_bits)
        except ArithmeticError:
            val_s = "indeterminate"
        w.writerow([st.n, _show(st.P, args.precision_bits), _show(st.Q, args.precision_bits), val_s])
    _emit(args, buf.getvalue())
    return EXIT_OK


def cmd_sweep(args) -> int:
    rows = sweep(_spec(args), args.m_max, args.precision_bits)
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    _emit(args, buf.getvalue())
    return EXIT_OK


def cmd_schur_check(args) -> int:
    rep = schur_check(get_family("K"), args.m_max, max(args.precision_bits, 256))
    _emit(args, _json(rep.to_dict()))
    return EXIT_VERIFY if rep.mismatches else EXIT_OK


def cmd_table_check(args) -> int:
    rep = table_check(_spec(args), args.m_max)
    _emit(args, _json(rep.to_dict()))
    return EXIT_OK


def cmd_lipschitz(args) -> int:
    spec = _spec(args)
    table = lipschitz_constants(spec, args.n)
    if not args.pairs:
        _emit(args, table.to_csv())
        return EXIT_OK
    rng = random.Random(args.seed)
    failures = []
    bits = args.precision_bits
    for _ in range(args.pairs):
        n = rng.randint(0, args.n)
        tx = Fraction(rng.getrandbits(48), 1 << 48)
        ty = Fraction(rng.getrandbits(48), 1 << 48)
        x, y = exp_2pi_i(tx, bits), exp_2pi_i(ty, bits)
        if not lipschitz_check(spec, n, x, y, bits, table):
            failures.append({"n": n, "tx": str(tx), "ty": str(ty)})
    _emit(args, _json({"family": spec.name, "pairs": args.pairs, "n_max": args.n,
                       "seed": args.seed, "violations": failures}))
    return EXIT_VERIFY if failures else EXIT_OK


def cmd_build_point(args) -> int:
    spec = _spec(args)
    _, consts = pilot_constants(spec)
    free = [[int(x) for x in part.split(",") if x] for part in args.free.split(";")] \
        if args.free else ()
    recipe = build_sdiamond_point(spec, args.stages, consts.N_prime, free, demo=args.demo,
                                  theta=args.theta)
    _emit(args, recipe.dumps())
    return EXIT_OK


def cmd_tower(args) -> int:
    tp = tower_point(args.levels)
    _emit(args, tp.decimal + "\n")
    return EXIT_OK


def cmd_verify(args) -> int:
    recipe = PointRecipe.loads(Path(args.recipe).read_text())
    spec = load_family(args.config) if args.config else get_family(recipe.family)
    spec = spec.with_residues(*recipe.residues) if tuple(recipe.residues) != (spec.r, spec.u) \
        else spec
    problems = verify_recipe(spec, recipe)
    report = two_limit_experiment(spec, recipe, args.precision_bits, budget=args.budget,
                                  oracle=args.oracle, series_points=args.series_points)
    out = {"recipe_problems": problems, "two_limit": report.to_dict()}
    try:
        out["witness"] = general_divergence_witness(spec, report).to_dict()
    except WitnessRefused as exc:
        out["witness"] = {"refused": str(exc)}
    except InsufficientStages as exc:
        out["witness"] = {"insufficient": str(exc)}
    if args.series:
        Path(args.series).write_text(report.series_csv())
    _emit(args, _json(out))
    envelope_fail = any(s.within_bound is False for s in report.stages)
    return EXIT_VERIFY if problems or envelope_fail else EXIT_OK


def _parse_range(text: str | None):
    if not text:
        return None
    lo, hi = text.split(":")
    return int(lo), int(hi)


def cmd_audit(args) -> int:
    j_range = _parse_range(args.j_range)
    if args.family == SYNTHETIC and not args.config:
        blk = BlockAnalysis.from_matrix([[2, -1], [1, 0]])
        rep = bound_audit(blk, j_range, args.precision_bits, args.seed)
    else:
        spec = _spec(args)
        m = spec.s if args.m is None else args.m
        rep = family_audit(spec, m, args.r, j_range, args.precision_bits, args.seed)
    _emit(args, rep.dumps())
    return EXIT_VERIFY if rep.violations else EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--family", help="built-in family name (K, S1, S2, S3, GG)")
    common.add_argument("--config", help="family configuration file (JSON)")
    common.add_argument("--precision-bits", type=int, default=256)
    common.add_argument("--m-max", type=int, default=20)
    common.add_argument("--stages", type=int, default=2)
    common.add_argument("--levels", type=int, default=3)
    common.add_argument("--demo", action="store_true", help="moderated, uncertified stages")
    common.add_argument("--theta", type=float, default=None)
    common.add_argument("--seed", type=int, default=DEFAULT_SEED)
    common.add_argument("--out", help="output file (default: stdout)")

    p = argparse.ArgumentParser(prog="qcfrac", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("families", parents=[common], help="list built-in families")
    e = sub.add_parser("eval", parents=[common], help="approximant table")
    e.add_argument("--q", required=True, help="p/q, zeta:r/m, circle:t or a+bj")
    e.add_argument("--n", type=int, default=10)
    sub.add_parser("sweep", parents=[common], help="classification CSV over roots of unity")
    sub.add_parser("schur-check", parents=[common], help="block analysis vs closed evaluation")
    sub.add_parser("table-check", parents=[common], help="tabulated progression data")
    lp = sub.add_parser("lipschitz", parents=[common], help="Lipschitz table or random check")
    lp.add_argument("--n", type=int, default=60)
    lp.add_argument("--pairs", type=int, default=0)
    bp = sub.add_parser("build-point", parents=[common], help="divergence point recipe")
    bp.add_argument("--free", help="free quotients per stage, e.g. '3,4;;7'")
    sub.add_parser("tower", parents=[common], help="decimal digits of the tower point")
    v = sub.add_parser("verify", parents=[common], help="two-limit and witness reports")
    v.add_argument("--recipe", required=True)
    v.add_argument("--budget", type=int, default=None)
    v.add_argument("--oracle", action="store_true", help="rerun at doubled precision")
    v.add_argument("--series", help="CSV path for the deviation series")
    v.add_argument("--series-points", type=int, default=0)
    a = sub.add_parser("audit", parents=[common], help="bound audit")
    a.add_argument("--m", type=int, default=None)
    a.add_argument("--r", type=int, default=None)
    a.add_argument("--j-range", help="lo:hi (default N':3N')")
    return p


COMMANDS = {
    "families": cmd_families, "eval": cmd_eval, "sweep": cmd_sweep,
    "schur-check": cmd_schur_check, "table-check": cmd_table_check,
    "lipschitz": cmd_lipschitz, "build-point": cmd_build_point, "tower": cmd_tower,
    "verify": cmd_verify, "audit": cmd_audit,
}


def _validate(args) -> None:
    if args.precision_bits < 32:
        raise ConfigError("--precision-bits must be at least 32")
    if args.m_max < 1 or args.stages < 1 or args.levels < 1:
        raise ConfigError("--m-max, --stages and --levels must be positive")
    if args.theta is not None:
        if not args.demo:
            raise ConfigError("--theta requires --demo")
        if not 0 < args.theta <= 1:
            raise ConfigError("--theta must lie in (0, 1]")
    elif args.demo:
        args.theta = 0.01
    if getattr(args, "budget", None) is not None and args.budget < 1:
        raise ConfigError("--budget must be positive")


_ERROR_CODES = (
    ((ConfigError, LevelTooLarge, FileNotFoundError, json.JSONDecodeError, KeyError,
      ValueError), EXIT_CONFIG),
    ((IndexBudgetExceeded, BudgetExceeded, PrecisionExhausted, SteeringFailed), EXIT_BUDGET),
    ((TableMismatch, VerificationFailed, DegenerateBlock, UndefinedH, InsufficientStages,
      ArithmeticError), EXIT_VERIFY),
)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _validate(args)
        return COMMANDS[args.command](args)
    except Exception as exc:  # structured record for every module error
        for types, code in _ERROR_CODES:
            if isinstance(exc, types):
                record = {"error": type(exc).__name__, "message": str(exc), "exit_code": code,
                          "command": args.command}
                sys.stderr.write(json.dumps(record, sort_keys=True) + "\n")
                return code
        raise


if __name__ == "__main__":
    sys.exit(main())
