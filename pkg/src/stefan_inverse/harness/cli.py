"""Command-line entry point ``stefan-inverse``.

Exit codes: 0 success, 2 configuration or validation failure, 3 numerical
failure (denominator guard, Picard divergence, boundary positivity),
4 I/O failure.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys

from ..errors import BoundaryPositivityError, ConfigError, NumericalError
from .config import ProblemConfig, load_config, parse_config
from .experiments import run_experiment
from .output import emit, emit_validation
from .validation import validate_assumptions

__all__ = ["main", "build_parser", "EXIT_OK", "EXIT_CONFIG", "EXIT_NUMERIC", "EXIT_IO"]

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4

log = logging.getLogger("stefan_inverse")

COMMANDS = {
    "forward": ("forward-only", None),
    "recover-r": ("round-trip", "R"),
    "recover-q": ("round-trip", "q"),
    "recover-p": ("round-trip", "P"),
    "validate": (None, None),
    "convergence": ("convergence", None),
    "stability": ("stability", None),
}
ALLOWED = {
    "recover-r": ("P1", "P2", "P4"),
    "recover-q": ("P2", "P4"),
    "recover-p": ("P3", "P4"),
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stefan-inverse",
                                description="Inverse one-phase Stefan problems by eigenfunction expansion.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="JSON problem configuration")
        sp.add_argument("--out", help="output directory (overrides output.dir)")
        sp.add_argument("--modes", type=int, help="number of modes N")
        sp.add_argument("--steps", type=int, help="number of time steps M")
        sp.add_argument("--seed", type=int, help="noise / trial seed")
    return p


def _setup_logging():
    level = os.environ.get("STEFAN_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr)
    logging.captureWarnings(True)


def _prepare(args) -> ProblemConfig:
    kind, target = COMMANDS[args.command]
    cfg = load_config(args.config)
    raw = cfg.raw
    raw.setdefault("discretization", {})
    if args.modes is not None:
        raw["discretization"]["modes"] = args.modes
    if args.steps is not None:
        raw["discretization"]["steps"] = args.steps
    if args.seed is not None:
        raw.setdefault("noise", {})["seed"] = args.seed
        raw.setdefault("experiment", {})["seed"] = args.seed
    if target is not None:
        raw["target"] = target
    exp = raw.setdefault("experiment", {})
    if kind == "stability" and exp.get("kind") == "max-principle":
        pass  # the stability command also runs the maximum-principle trials
    elif kind is not None:
        exp["kind"] = kind
    if args.command in ALLOWED and cfg.variant.value not in ALLOWED[args.command]:
        raise ConfigError(f"{args.command} does not apply to variant {cfg.variant.value}")
    return parse_config(raw)


def run(args) -> int:
    cfg = _prepare(args)
    out = args.out or cfg.output_dir
    if args.command == "validate":
        rep = validate_assumptions(cfg)
        emit_validation(rep, out)
        for c in rep.clauses:
            verdict = "n/a" if c.passed is None else ("pass" if c.passed else "FAIL")
            print(f"{c.tag:<14} {verdict:<5} {c.detail}")
        return EXIT_OK if rep.passed else EXIT_CONFIG
    report = run_experiment(cfg)
    paths = emit(report, out, {"config": cfg.raw})
    for p in paths:
        log.info("wrote %s", p)
    if report.errors:
        print(" ".join(f"{k}={v:.6g}" for k, v in report.errors.items() if isinstance(v, float)))
    if report.verdicts:
        npass = sum(v["verdict"] == "pass" for v in report.verdicts)
        print(f"{npass}/{len(report.verdicts)} verdicts pass")
    return EXIT_OK


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return run(args)
    except (NumericalError, BoundaryPositivityError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"i/o failure: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
