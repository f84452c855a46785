"""
═══════════════════════════════════════════════════════════════════════════════
RUN ARTIFACTS
═══════════════════════════════════════════════════════════════════════════════

Writes one experiment run to its output directory:

    config.echo    resolved configuration, one key=value per line
    replicas.csv   per-replica rows, in replica order
    summary.csv    one row per statistic or identity sweep
    report.txt     human-readable pass/fail table

Floats are written with a fixed number of significant digits and "\\n" line
endings so reruns with identical configuration are byte-identical.
═══════════════════════════════════════════════════════════════════════════════
"""

from __future__ import annotations

import logging
import math
from pathlib import Path
from typing import Dict

import pandas as pd

from src.config import CONFIG_ECHO_NAME, CSV_FLOAT_FORMAT, REPLICAS_NAME, REPORT_NAME, SUMMARY_NAME
from src.validation.experiments import RunResult

logger = logging.getLogger(__name__)

SUMMARY_COLUMNS = [
    "experiment", "statistic", "value", "threshold", "sample_size",
    "truncation_excluded", "violations", "passed",
]


def write_config_echo(echo: Dict[str, object], path: Path) -> Path:
    lines = [f"{key}={value}" for key, value in echo.items()]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def write_frame(frame: pd.DataFrame, path: Path) -> Path:
    frame.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n")
    return path


def summary_frame(result: RunResult) -> pd.DataFrame:
    return result.summary().reindex(columns=SUMMARY_COLUMNS)


def _cell(value, spec: str = ".6g") -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return "-"
    return format(value, spec) if isinstance(value, float) else str(value)


def render_report(result: RunResult) -> str:
    """Fixed-width pass/fail table for one run."""
    cfg = result.config
    summary = summary_frame(result)
    width = max(12, int(summary["statistic"].str.len().max()))
    header = f"{'statistic':<{width}}  {'value':>12}  {'threshold':>12}  {'n':>8}  {'excl':>6}  verdict"

    lines = [
        "═" * 80,
        f"{'BLPP LAB REPORT':^80}",
        "═" * 80,
        f"experiment : {cfg.experiment}",
        f"grid       : [{cfg.t_min}, {cfg.t_max}] step {cfg.step}",
        f"levels     : {cfg.levels}   theta {cfg.theta}   lambda {cfg.lam}",
        f"replicas   : {cfg.replicas}   seed {cfg.seed}",
        "─" * 80,
        header,
        "─" * 80,
    ]
    for row in summary.itertuples(index=False):
        verdict = "PASS" if row.passed else "FAIL"
        if pd.notna(row.violations) and row.violations > 0:
            verdict += f" ({int(row.violations)} violations)"
        lines.append(
            f"{row.statistic:<{width}}  {_cell(row.value):>12}  {_cell(row.threshold):>12}  "
            f"{_cell(row.sample_size):>8}  {_cell(row.truncation_excluded):>6}  {verdict}"
        )
    lines += [
        "─" * 80,
        f"overall    : {'PASS' if result.passed else 'FAIL'} "
        f"({int(summary['passed'].sum())}/{len(summary)} checks)",
    ]
    return "\n".join(lines) + "\n"


def write_run(result: RunResult, out: Path) -> Dict[str, Path]:
    """
    Write every artifact of a run.

    Args:
        result: Output of run_experiment
        out: Directory, created if missing

    Returns:
        Mapping of artifact name to written path
    """
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "config": write_config_echo(result.config.echo(), out / CONFIG_ECHO_NAME),
        "replicas": write_frame(result.rows, out / REPLICAS_NAME),
        "summary": write_frame(summary_frame(result), out / SUMMARY_NAME),
    }
    report = out / REPORT_NAME
    report.write_text(render_report(result), encoding="utf-8")
    paths["report"] = report

    print(f"✅ Results saved to: {out}")
    logger.debug("wrote %s", ", ".join(p.name for p in paths.values()))
    return paths
