#!/usr/bin/env python3
"""
Plot the per-replica output of one experiment run.

    python scripts/plot_results.py results/burke [--columns q1 Y0_future]

Writes one histogram per numeric column (truncation flags and counters are
skipped) and, for midpoint runs, the hit-probability curve, into
<run>/plots/.
"""

import argparse
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT))

from src.config import CONFIG_ECHO_NAME, REPLICAS_NAME  # noqa: E402
from src.geodesics import midpoint_curve  # noqa: E402

SKIP_SUFFIXES = ("_truncated", "_checked", "_violations", "_deviation")


def read_echo(run_dir: Path) -> dict:
    entries = {}
    for line in (run_dir / CONFIG_ECHO_NAME).read_text(encoding="utf-8").splitlines():
        key, _, value = line.partition("=")
        entries[key] = value
    return entries


def plottable(frame: pd.DataFrame) -> list:
    columns = []
    for c in frame.select_dtypes("number").columns:
        if c in ("replica", "truncated", "n") or c.endswith(SKIP_SUFFIXES):
            continue
        columns.append(c)
    return columns


def plot_histograms(frame: pd.DataFrame, columns: list, title: str, plot_dir: Path) -> list:
    written = []
    for c in columns:
        values = frame[c].dropna()
        if values.empty:
            continue
        plt.figure(figsize=(6, 3.5))
        plt.hist(values, bins=60, density=True, alpha=0.75)
        plt.xlabel(c)
        plt.ylabel("density")
        plt.title(f"{title}: {c} ({len(values)} replicas)")
        plt.grid(True, alpha=0.3)
        plt.tight_layout()
        path = plot_dir / f"hist_{c}.png"
        plt.savefig(path, dpi=140)
        plt.close()
        written.append(path)
    return written


def plot_midpoint(frame: pd.DataFrame, title: str, plot_dir: Path) -> Path:
    curve = midpoint_curve(frame)
    plt.figure(figsize=(6, 3.5))
    plt.plot(curve["n"], curve["probability"], marker="o", lw=1.6)
    plt.xlabel("n")
    plt.ylabel("P(geodesic passes the point)")
    plt.title(title)
    plt.grid(True, alpha=0.3)
    plt.tight_layout()
    path = plot_dir / "midpoint_curve.png"
    plt.savefig(path, dpi=140)
    plt.close()
    return path


def main():
    parser = argparse.ArgumentParser(description="Plot one BLPP Lab run directory.")
    parser.add_argument("run_dir", type=Path)
    parser.add_argument("--columns", nargs="*", help="columns to plot (default: every numeric sample column)")
    args = parser.parse_args()

    echo = read_echo(args.run_dir)
    frame = pd.read_csv(args.run_dir / REPLICAS_NAME)
    experiment = echo.get("experiment", args.run_dir.name)
    plot_dir = args.run_dir / "plots"
    plot_dir.mkdir(exist_ok=True)

    print(f"\n{' PLOTTING ' + experiment.upper() + ' ':═^80}")
    if experiment == "midpoint":
        written = [plot_midpoint(frame, experiment, plot_dir)]
    else:
        written = plot_histograms(frame, args.columns or plottable(frame), experiment, plot_dir)
    for path in written:
        print(f"📈 {path}")
    print(f"✅ {len(written)} plot(s) saved to: {plot_dir}")


if __name__ == "__main__":
    main()
