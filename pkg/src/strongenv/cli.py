"""Command-line entry point.

Exit codes: 0 all checks pass, 1 a check failed, 2 usage or parse error.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from . import report
from .engine import NonConvergence
from .instances import ConfigError, load_config
from .suite import SuiteSizes, Tolerances

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _write(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _load(path: str):
    return load_config(path).resolve()


def cmd_envelope(args) -> int:
    rep = report.envelope_report(_load(args.config))
    _write(report.dumps(rep), args.out)
    return EXIT_OK if rep["passed"] else EXIT_FAIL


def cmd_verify(args) -> int:
    tol = Tolerances.parse(os.environ.get("STRONGENV_TOL", ""))
    tol = Tolerances.parse(args.tol, base=tol)
    instances = []
    if args.config:
        instances.append(("config", _load(args.config), [0, 2]))
    for s in range(args.seeds):
        instances.append((f"seed={s}", report.random_instance(s), [s, 1]))
    if not instances:
        print("verify: nothing to do (give --config and/or --seeds > 0)", file=sys.stderr)
        return EXIT_USAGE
    rep = report.verify_report(instances, SuiteSizes(), tol)
    _write(report.dumps(rep), args.out)
    for f in rep["failures"]:
        print(f"FAIL {f['instance']} {f['name']}: {f['witness']}", file=sys.stderr)
    return EXIT_OK if rep["passed"] else EXIT_FAIL


def cmd_convergence(args) -> int:
    rows = report.convergence_rows(_load(args.config), args.beta_max)
    _write(report.convergence_csv(rows), args.out)
    return EXIT_OK


def cmd_oracle(args) -> int:
    rep = report.oracle_report(args.max_nodes, args.seeds)
    _write(report.dumps(rep), args.out)
    return EXIT_OK if rep["passed"] else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="strongenv",
        description="Strong envelopes of processes on finite probability trees.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("envelope", help="compute U, M, A and the beta sweep")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_envelope)

    p = sub.add_parser("verify", help="run the verification suite")
    p.add_argument("--config")
    p.add_argument("--seeds", type=int, default=0, help="number of seeded random instances")
    p.add_argument("--tol", action="append", metavar="KEY=VALUE",
                   help="override residual= or estimate= tolerance (repeatable)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("convergence", help="write the beta sweep as CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--beta-max", type=float, default=None)
    p.add_argument("--out")
    p.set_defaults(func=cmd_convergence)

    p = sub.add_parser("oracle", help="compare against brute-force oracles on small trees")
    p.add_argument("--max-nodes", type=int, default=12)
    p.add_argument("--seeds", type=int, default=100)
    p.add_argument("--out")
    p.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, OSError, ValueError) as exc:
        print(f"{parser.prog} {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NonConvergence as exc:
        print(f"{parser.prog} {args.command}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
