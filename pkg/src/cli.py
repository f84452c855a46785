"""
═══════════════════════════════════════════════════════════════════════════════
BLPP LAB COMMAND LINE
═══════════════════════════════════════════════════════════════════════════════

    blpp-lab [run] <experiment> [--flag value]...
    blpp-lab --list

Configuration precedence, highest first:
    command-line flags > --param > --config file > per-experiment defaults > src/config.py

The seed falls back to $BLPP_SEED (also read from a .env file) before the
built-in default. Exit codes: 0 all checks passed, 1 a check failed,
2 usage or configuration error.
═══════════════════════════════════════════════════════════════════════════════
"""

from __future__ import annotations

import argparse
import difflib
import logging
import os
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

from dotenv import load_dotenv

from src.config import DEFAULT_SEED, LOG_FORMAT, RESULTS_DIR, SEED_ENV_VAR, SEED_MASK
from src.errors import BlppError, ConfigurationError, DomainError, UsageError
from src.validation.experiments import EXPERIMENTS, ExperimentConfig, list_experiments, run_experiment, with_defaults
from src.validation.report import write_run

logger = logging.getLogger(__name__)

__all__ = ["ExperimentConfig", "parse_args", "resolve_config", "run", "main", "list_experiments"]

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_USAGE = 2

# config keys that map onto ExperimentConfig fields; anything else is an experiment parameter
CASTS = {"t_min": float, "t_max": float, "step": float, "levels": int, "theta": float, "lam": float,
         "replicas": int, "seed": int, "out": Path, "parallel": int}
ALIASES = {"lambda": "lam"}


# ═══════════════════════════════════════════════════════════════════════════════
# PARSING
# ═══════════════════════════════════════════════════════════════════════════════

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="blpp-lab",
        description="Numerical lab for semi-discrete Brownian last-passage percolation.",
        epilog="Run with --list to see the registered experiments.",
    )
    parser.add_argument("experiment", nargs="?", help="experiment name")
    grid = parser.add_argument_group("grid")
    grid.add_argument("--t-min", dest="t_min", type=float)
    grid.add_argument("--t-max", dest="t_max", type=float)
    grid.add_argument("--step", type=float)
    model = parser.add_argument_group("model")
    model.add_argument("--levels", type=int)
    model.add_argument("--theta", type=float)
    model.add_argument("--lambda", dest="lam", type=float)
    run_group = parser.add_argument_group("run")
    run_group.add_argument("--replicas", type=int)
    run_group.add_argument("--seed", type=int)
    run_group.add_argument("--out", type=Path)
    run_group.add_argument("--parallel", type=int, help="worker processes (0: one per core)")
    run_group.add_argument("--config", type=Path, help="key=value configuration file")
    run_group.add_argument("--param", action="append", default=[], metavar="KEY=VALUE",
                           help="experiment-specific parameter, repeatable")
    output = parser.add_mutually_exclusive_group()
    output.add_argument("--verbose", "-v", action="store_true")
    output.add_argument("--quiet", "-q", action="store_true")
    parser.add_argument("--list", action="store_true", help="list experiments and exit")
    return parser


def parse_args(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    argv = list(sys.argv[1:] if argv is None else argv)
    if argv and argv[0] == "run":
        argv = argv[1:]
    return build_parser().parse_args(argv)


def _split_pair(text: str, origin: str) -> Tuple[str, str]:
    key, sep, value = text.partition("=")
    key = key.strip().replace("-", "_")
    if not sep or not key:
        raise UsageError(f"{origin}: expected key=value, got {text!r}")
    return ALIASES.get(key, key), value.strip()


def read_config_file(path: Path) -> Dict[str, str]:
    """key=value lines; blank lines and '#' comments are skipped."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from None
    entries = {}
    for number, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if line:
            key, value = _split_pair(line, f"{path}:{number}")
            entries[key] = value
    return entries


# ═══════════════════════════════════════════════════════════════════════════════
# RESOLUTION
# ═══════════════════════════════════════════════════════════════════════════════

def check_experiment(name: Optional[str]) -> str:
    if not name:
        raise UsageError("no experiment given; use --list to see the choices")
    if name not in EXPERIMENTS:
        close = difflib.get_close_matches(name, EXPERIMENTS, n=1)
        hint = f"; did you mean {close[0]!r}?" if close else ""
        raise UsageError(f"unknown experiment {name!r}{hint}")
    return name


def _env_seed() -> Optional[int]:
    raw = os.environ.get(SEED_ENV_VAR)
    if raw is None or not raw.strip():
        return None
    try:
        return int(raw) & SEED_MASK
    except ValueError:
        raise UsageError(f"{SEED_ENV_VAR}={raw!r} is not an integer") from None


def _cast(key: str, value: Any) -> Any:
    try:
        return CASTS[key](value)
    except (TypeError, ValueError):
        raise UsageError(f"{key}={value!r} is not a valid {CASTS[key].__name__}") from None


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    """
    Merge flags, config file and defaults into one validated ExperimentConfig.

    Raises:
        UsageError: unknown experiment or malformed value
        ConfigurationError: values the experiment cannot run with
    """
    experiment = check_experiment(args.experiment)

    layered: Dict[str, Any] = read_config_file(args.config) if args.config else {}
    for text in args.param:
        key, value = _split_pair(text, "--param")
        layered[key] = value
    for key in CASTS:
        flag = getattr(args, key, None)
        if flag is not None:
            layered[key] = flag

    values = {k: _cast(k, v) for k, v in layered.items() if k in CASTS}
    params = {k: v for k, v in layered.items() if k not in CASTS}
    explicit = set(values)
    if "seed" not in values:
        env = _env_seed()
        values["seed"] = DEFAULT_SEED if env is None else env
    values.setdefault("out", RESULTS_DIR / experiment)

    cfg = ExperimentConfig(experiment, params=params, **values)
    cfg = with_defaults(cfg, explicit)
    return cfg.validate()


# ═══════════════════════════════════════════════════════════════════════════════
# ENTRY POINTS
# ═══════════════════════════════════════════════════════════════════════════════

def run(cfg: ExperimentConfig, progress: bool = False) -> int:
    """Run one resolved experiment, write its artifacts, and return the exit code."""
    result = run_experiment(cfg, progress=progress)
    write_run(result, cfg.out)
    return EXIT_PASS if result.passed else EXIT_FAIL


def _configure_logging(args: argparse.Namespace) -> None:
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format=LOG_FORMAT, force=True)


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    try:
        args = parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on bad flags and 0 on --help
        return int(exc.code or 0)
    _configure_logging(args)

    if args.list:
        print(list_experiments())
        return EXIT_PASS

    try:
        cfg = resolve_config(args)
        logger.info("resolved configuration: %s", cfg.echo())
        return run(cfg, progress=not args.quiet and sys.stderr.isatty())
    except (ConfigurationError, DomainError) as exc:
        logger.error("%s", exc)
        print(f"❌ {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BlppError as exc:
        logger.error("run aborted: %s", exc)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
