"""apep_tool: generate, solve, export and check Valued APEP instances.

    python apep_tool.py generate --n 80 --k 8 --tau 4 --seed 1 --out inst.json
    python apep_tool.py solve --in inst.json --solver profile --threads 4
    python apep_tool.py export-mip --in inst.json --form up --out inst.lp
    python apep_tool.py check-resilience --wsp flow.json --plan result.json --tau 1
    python apep_tool.py bench --grid "n=20,40,80;k=3;seeds=10" --out bench.csv

Exit codes: 0 ok, 2 usage or invalid input, 3 a search bound was exceeded,
1 anything else. APEP_LOG sets the log level (default WARNING).
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from bench import parse_grid, run_grid, write_report
from constraints import BoDE, BoDU, SoDU
from documents import (
    dumps, extended_plan_from_dict, instance_to_dict, load_instance, load_wsp, read_json,
    result_to_dict, wsp_to_dict,
)
from errors import ApepError, DomainError, GuardError
from generator import GeneratorConfig, generate_wsp, parse_alpha
from mipgen import build_naive, build_up, export_lp
from model import Instance, SolveResult
from resiliency import check_tau_resilient, encode_resilient, satisfies_encoding
from solver_brute import solve_exhaustive
from solver_profile import solve
from wsp import StepOrigin, lift_plan, reduce_bode_sodu, reduce_sodu_bodu, solve_wsp

log = logging.getLogger("apep_tool")

EXIT_OK, EXIT_INTERNAL, EXIT_USAGE, EXIT_GUARD = 0, 1, 2, 3


def _emit(text: str, out: str | None):
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")
        log.info("wrote %s", out)


def solve_by_reduction(instance: Instance) -> SolveResult:
    """Solve through Valued WSP when the constraint families allow it."""
    families = {type(c) for c in instance.constraints}
    if families <= {SoDU, BoDU}:
        w, origin = reduce_sodu_bodu(instance), StepOrigin.identity(instance.resources)
    elif families <= {SoDU, BoDE}:
        w, origin = reduce_bode_sodu(instance)
    else:
        raise DomainError("the wsp solver handles sod_u with bod_u, or sod_u with bod_e, only")
    plan, weight = solve_wsp(w)
    relation = lift_plan(plan, origin)
    return SolveResult.build(instance, relation, {"solver": "wsp", "steps": w.k, "plan_weight": weight})


def cmd_generate(args) -> int:
    cfg = GeneratorConfig(args.n, args.k, args.tau, parse_alpha(args.alpha), args.q_sod, args.seed)
    penalties = cfg.penalties()
    wsp = generate_wsp(cfg)
    instance = encode_resilient(wsp, cfg.tau, p_sod=penalties["sod"], p_card=penalties["card"],
                                p_a=penalties["auth"], coef=penalties["user_count"])
    _emit(dumps(instance_to_dict(instance)), args.out)
    if args.wsp_out:
        _emit(dumps(wsp_to_dict(wsp)), args.wsp_out)
    return EXIT_OK


def cmd_solve(args) -> int:
    instance = load_instance(args.input)
    if args.solver == "profile":
        result = solve(instance, ell=args.ell, threads=args.threads)
    elif args.solver == "brute":
        result = solve_exhaustive(instance)
    else:
        result = solve_by_reduction(instance)
    _emit(dumps(result_to_dict(instance, result, timing=args.timing)), args.out)
    return EXIT_OK


def cmd_export_mip(args) -> int:
    instance = load_instance(args.input)
    formulation = build_naive(instance) if args.form == "naive" else build_up(instance)
    _emit(export_lp(formulation), args.out)
    return EXIT_OK


def cmd_check_resilience(args) -> int:
    w = load_wsp(args.wsp)
    ext = extended_plan_from_dict(w, read_json(args.plan))
    if args.sufficient:
        report = {"tau": args.tau, "method": "sufficient", "resilient": satisfies_encoding(w, ext, args.tau),
                  "witness": None}
    else:
        ok, witness = check_tau_resilient(w, ext, args.tau, threads=args.threads)
        report = {"tau": args.tau, "method": "exhaustive", "resilient": ok,
                  "witness": list(witness) if witness is not None else None}
    _emit(dumps(report), args.out)
    return EXIT_OK


def cmd_bench(args) -> int:
    grid = parse_grid(args.grid)
    df = run_grid(grid, threads=args.threads)
    summary = write_report(df, args.out, args.xlsx)
    log.info("bench: %d runs, %d configurations", len(df), len(summary))
    return EXIT_OK


def _positive(value: str) -> int:
    n = int(value)
    if n < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return n


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="apep_tool", description="Valued APEP exact-solver toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a seeded benchmark instance")
    p.add_argument("--n", type=int, required=True, help="number of users")
    p.add_argument("--k", type=int, help="number of steps (default n // 10, at least 1)")
    p.add_argument("--tau", type=int, help="resiliency level (default n // 20)")
    p.add_argument("--alpha", default="1", help="authorization weight α, e.g. 1, 0.5 or 3/2")
    p.add_argument("--q-sod", type=int, dest="q_sod", help="separation-of-duty pairs (default k)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="-")
    p.add_argument("--wsp-out", help="also write the underlying workflow document")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("solve", help="solve an instance document")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--solver", choices=("profile", "brute", "wsp"), default="profile")
    p.add_argument("--ell", type=_positive, help="user cap for the profile solver")
    p.add_argument("--threads", type=_positive, default=1)
    p.add_argument("--timing", action="store_true", help="include wall time in the result")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("export-mip", help="write a MIP formulation in LP format")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--form", choices=("naive", "up"), default="naive")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_export_mip)

    p = sub.add_parser("check-resilience", help="check an extended plan or solve result for τ-resiliency")
    p.add_argument("--wsp", required=True, help="workflow document")
    p.add_argument("--plan", required=True, help="extended plan or solve result document")
    p.add_argument("--tau", type=int, required=True)
    p.add_argument("--threads", type=_positive, default=1)
    p.add_argument("--sufficient", action="store_true",
                   help="check only the sufficient condition (no exhaustive search)")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_check_resilience)

    p = sub.add_parser("bench", help="run a benchmark grid and write CSV")
    p.add_argument("--grid", required=True)
    p.add_argument("--out", required=True, help="CSV path; the summary goes next to it")
    p.add_argument("--xlsx", help="also write an Excel workbook")
    p.add_argument("--threads", type=_positive, default=1)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    level = os.environ.get("APEP_LOG", "WARNING").upper()
    logging.basicConfig(
        level=level if level in ("DEBUG", "INFO", "WARNING", "ERROR") else "WARNING",
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except GuardError as exc:
        print(f"apep_tool: error: {exc}", file=sys.stderr)
        return EXIT_GUARD
    except DomainError as exc:
        print(f"apep_tool: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ApepError as exc:
        print(f"apep_tool: error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:
        log.debug("unexpected failure", exc_info=True)
        print(f"apep_tool: error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
