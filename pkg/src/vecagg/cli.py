"""Command-line front end.

Exit codes: 0 success / all checks pass, 1 a verification check failed,
2 bad input (parse errors, budget refusal, invalid flags).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import oracle
from .harness import run_many
from .linalg import conditional_rank, rank, vstack
from .problem import ProblemError, parse_problem
from .scheme import (
    EXPORT_HEADER,
    SchemeFormatError,
    build_section6_symmetrized,
    construct,
    export_scheme,
    load_scheme,
    rate_report,
)

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2

log = logging.getLogger("vecagg")


def _count(text: str) -> int:
    try:
        v = int(float(text)) if any(c in text for c in ".eE") else int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a count: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _read(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    return Path(path).read_text()


def _load_problem(path: str):
    return parse_problem(_read(path))


def cmd_analyze(args) -> int:
    spec = _load_problem(args.problem)
    r_all = rank(vstack([spec.F, spec.G]))
    r_cond = conditional_rank(spec.F, spec.G)
    print(f"q={spec.q} K={spec.K} M={spec.M} N={spec.N} L={spec.L}")
    print(f"rank(F)={rank(spec.F)} rank(G)={rank(spec.G)} rank([F;G])={r_all}")
    print(f"rank(G|F)={r_cond}")
    print(f"R=1 R_ZSigma={r_cond}")
    return EXIT_OK


def cmd_verify(args) -> int:
    if args.section6:
        scheme = build_section6_symmetrized(args.q)
    else:
        if args.problem is None:
            raise ProblemError("verify needs a problem file (or --section6)")
        scheme = construct(_load_problem(args.problem))
    if args.inject_fault:
        if scheme.n_keys == 0:
            raise ProblemError("--inject-fault needs at least one key symbol to drop")
        scheme = scheme.drop_key_coordinate(scheme.n_keys - 1)
    report = oracle.verify(scheme, budget=args.budget, workers=args.threads)
    sys.stdout.write(report.text())
    print(oracle.rates_line(scheme))
    return EXIT_OK if report.passed else EXIT_FAIL


def _load_scheme_or_problem(path: str):
    text = _read(path)
    if text.lstrip().startswith(EXPORT_HEADER):
        return load_scheme(text)
    return construct(parse_problem(text))


def cmd_simulate(args) -> int:
    scheme = _load_scheme_or_problem(args.problem)
    summary = run_many(scheme, args.rounds, seed=args.seed, keep_logs=args.show_rounds > 0)
    for lg in summary.logs[: args.show_rounds]:
        print(lg.text())
    print(summary.text())
    return EXIT_OK if summary.passed == summary.rounds else EXIT_FAIL


def cmd_construct(args) -> int:
    scheme = construct(_load_problem(args.problem))
    text = export_scheme(scheme)
    if args.out:
        Path(args.out).write_text(text)
        rr = rate_report(scheme)
        print(f"wrote {args.out} (L_ZSigma={scheme.L_ZSigma}, R_ZSigma={rr.R_ZSigma})")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vecagg", description="Key-optimal vector linear secure aggregation toolkit")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="ranks and optimal rates for a problem file")
    a.add_argument("problem")
    a.set_defaults(func=cmd_analyze)

    v = sub.add_parser("verify", help="construct the scheme and check it exhaustively")
    v.add_argument("problem", nargs="?")
    v.add_argument("--budget", type=_count, default=oracle.DEFAULT_BUDGET, help="max states to enumerate")
    v.add_argument("--threads", type=_count, default=oracle.default_workers(), help="worker processes")
    v.add_argument("--inject-fault", action="store_true", help="drop one source-key symbol before checking")
    v.add_argument("--section6", action="store_true", help="check the three-block K=3 scheme instead")
    v.add_argument("--q", type=int, default=5, help="field for --section6 (default 5)")
    v.add_argument("--seed", type=int, default=0, help="unused by exhaustive checks; accepted for symmetry")
    v.set_defaults(func=cmd_verify)

    s = sub.add_parser("simulate", help="run the dealer/users/server protocol")
    s.add_argument("problem", help="problem file or exported scheme")
    s.add_argument("--rounds", type=_count, default=100)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--show-rounds", type=int, default=0, metavar="N", help="print the first N round logs")
    s.set_defaults(func=cmd_simulate)

    c = sub.add_parser("construct", help="export the constructed scheme")
    c.add_argument("problem")
    c.add_argument("--out")
    c.set_defaults(func=cmd_construct)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except (ProblemError, SchemeFormatError, oracle.BudgetExceededError, oracle.KeyWidthError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
