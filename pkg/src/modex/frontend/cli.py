"""Command line: ``modex solve`` and ``modex check``.

Exit codes: 0 when models were found (solve) or all engines agree
(check), 1 for zero models or a disagreement, 2 for usage, parse and
input errors.
"""
from __future__ import annotations

import argparse
import json
import sys

from ..algebra import (
    ExprError,
    SelectTheta,
    entailed_equalities,
    project_models,
)
from ..engines import ENGINES, STRATEGIES, EngineConfig, make_engine_input, parse_restart, run_engine
from ..lattice import F, PartialStructure, U
from ..propagators import COUNTERS, reset_counters
from .check import DEFAULT_BUDGET, OracleBudgetError, cross_check
from .io import StructureFormatError, format_model, read_structure, write_models
from .parser import ParseError, ProblemSpec, parse_problem


class _UsageError(Exception):
    pass


def _positive(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return v


def _restart(text: str) -> str:
    try:
        parse_restart(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    return text


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="modex", description="Model expansion for modular systems.")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="enumerate models of the goal expression")
    s.add_argument("--problem", required=True, help="problem file in the modex DSL")
    s.add_argument("--input", help="initial partial structure (JSON); overrides the problem's init")
    s.add_argument("--engine", choices=ENGINES, default="cdl")
    s.add_argument("--strategy", choices=STRATEGIES, default="best")
    lim = s.add_mutually_exclusive_group()
    lim.add_argument("--all", action="store_true", help="enumerate all models (default)")
    lim.add_argument("--first", type=_positive, metavar="K", help="stop after K models")
    s.add_argument("--project-output", action="store_true",
                   help="restrict models to the goal vocabulary and drop duplicates")
    s.add_argument("--restart", type=_restart, default="off", help="off, conflict or luby:<n>")
    s.add_argument("--trace", metavar="FILE", help="write the search trace to FILE ('-' for stderr)")
    s.add_argument("--stats", action="store_true", help="print statistics as JSON on stderr")
    s.add_argument("--seed", type=int, default=0, help="reserved; branching is deterministic")
    s.add_argument("--output", metavar="FILE", help="also write the models as JSON to FILE")

    c = sub.add_parser("check", help="cross-check engines against each other or the oracle")
    c.add_argument("--problem", required=True)
    c.add_argument("--input")
    c.add_argument("--engines", default=",".join(ENGINES), help="comma separated engine list")
    c.add_argument("--strategy", choices=STRATEGIES + ("both",), default="both")
    c.add_argument("--oracle", action="store_true", help="compare with brute-force enumeration")
    c.add_argument("--budget", type=_positive, default=DEFAULT_BUDGET,
                   help=f"largest signature the oracle accepts (default {DEFAULT_BUDGET} atoms)")
    c.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)
    return ap


def _load(args) -> tuple[ProblemSpec, PartialStructure]:
    try:
        with open(args.problem, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise _UsageError(f"cannot read problem file: {exc}") from None
    try:
        spec = parse_problem(text)
    except ParseError as exc:
        raise _UsageError(f"{args.problem}: {exc}") from None
    if args.input:
        try:
            b = read_structure(args.input, spec.sig)
        except OSError as exc:
            raise _UsageError(f"cannot read input file: {exc}") from None
        except StructureFormatError as exc:
            raise _UsageError(f"{args.input}: {exc}") from None
    else:
        b = spec.initial()
    return spec, b


def _theta_equalities(e) -> list[str]:
    out = []
    stack = [e]
    while stack:
        x = stack.pop()
        if isinstance(x, SelectTheta):
            out.extend(f"{q}=={r}" for q, r in sorted(entailed_equalities(x.theta)))
        for attr in ("expr", "left", "right"):
            child = getattr(x, attr, None)
            if child is not None:
                stack.append(child)
    return sorted(set(out))


def pin_outside(b: PartialStructure, voc) -> PartialStructure:
    """Set unknown atoms outside ``voc`` to false (one witness per projected model)."""
    keep = set(b.sig.indices(voc))
    buf = bytearray(b.data)
    for k, v in enumerate(buf):
        if v == U and k not in keep:
            buf[k] = F
    return PartialStructure(b.sig, bytes(buf))


def cmd_solve(args) -> int:
    spec, b = _load(args)
    cfg = EngineConfig(engine=args.engine, strategy=args.strategy, limit=args.first, restart=args.restart,
                       trace=bool(args.trace), seed=args.seed)
    goal = spec.goal
    reset_counters()
    inp = make_engine_input(goal, spec.interp, cfg, sig=spec.sig)
    voc = spec.goal_vocabulary()
    if args.project_output:
        # membership only depends on voc(goal), so fixing the other atoms loses nothing
        res = run_engine(inp, pin_outside(b, voc), cfg)
        models = project_models(res.models, voc)
    else:
        res = run_engine(inp, b, cfg)
        models = res.models
    print(f"{len(models)} models")
    for m in models:
        print(format_model(m))
    if args.output:
        write_models(models, spec.sig, args.output)
    if args.trace:
        lines = [f"ENTAIL {eq}" for eq in _theta_equalities(goal)] + res.trace
        text = "\n".join(lines) + ("\n" if lines else "")
        if args.trace == "-":
            sys.stderr.write(text)
        else:
            with open(args.trace, "w", encoding="utf-8") as fh:
                fh.write(text)
    if args.stats:
        stats = dict(res.stats)
        stats["models"] = len(models)
        stats["seed"] = args.seed
        stats["counters"] = dict(sorted(COUNTERS.items()))
        sys.stderr.write(json.dumps(stats, sort_keys=True) + "\n")
    return 0 if models else 1


def cmd_check(args) -> int:
    spec, b = _load(args)
    engines = tuple(x.strip() for x in args.engines.split(",") if x.strip())
    bad = [x for x in engines if x not in ENGINES]
    if bad or not engines:
        raise _UsageError(f"unknown engine(s) {bad}; expected a comma separated subset of {', '.join(ENGINES)}")
    strategies = STRATEGIES if args.strategy == "both" else (args.strategy,)
    if not args.oracle and len(engines) * len(strategies) < 2 and not args.inject_fault:
        raise _UsageError("nothing to compare: give --oracle or at least two engine runs")
    try:
        report = cross_check(spec, b, engines, strategies, oracle=args.oracle, budget=args.budget,
                             fault=args.inject_fault)
    except OracleBudgetError as exc:
        print(f"modex check: refusing to run the oracle: {exc}", file=sys.stderr)
        return 2
    print(report.format())
    return 0 if report.ok else 1


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "solve":
            return cmd_solve(args)
        return cmd_check(args)
    except _UsageError as exc:
        print(f"modex {args.command}: {exc}", file=sys.stderr)
        return 2
    except (ExprError, ValueError) as exc:
        print(f"modex {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
