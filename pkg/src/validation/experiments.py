"""
═══════════════════════════════════════════════════════════════════════════════
EXPERIMENT REGISTRY
═══════════════════════════════════════════════════════════════════════════════

Every experiment is a pair of module-level functions:

    replica(config, index)  -> list of row dicts for one replica
    summarize(config, rows) -> list of TestReport / CheckReport

Replicas draw every random line from streams derived from (seed, index), so
the merged rows, and hence the summary, do not depend on how the replicas
were scheduled across worker processes.
═══════════════════════════════════════════════════════════════════════════════
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Optional, Tuple

import numpy as np
import pandas as pd
from tqdm import tqdm

from src.busemann import (
    estimate_busemann_limit,
    monotonicity_check,
    recursion_consistency_check,
    reversal_duality_check,
    sample_busemann_recursion,
    seed_depth,
    slice_invariants_check,
)
from src.config import (
    CROSSCHECK_N_LEVELS,
    DEFAULT_LAMBDA,
    DEFAULT_LEVELS,
    DEFAULT_PARALLEL,
    DEFAULT_REPLICAS,
    DEFAULT_SEED,
    DEFAULT_STEP,
    DEFAULT_T_MAX,
    DEFAULT_T_MIN,
    DEFAULT_THETA,
    DIRECTION_TOLERANCE,
    FINE_STEP,
    MIDPOINT_BATCHES,
    MIDPOINT_RISE_SIGMAS,
    MIN_BRACKETED_FRACTION,
    MIN_COALESCED_FRACTION,
    MIN_DIRECTED_FRACTION,
    MOMENT_K_SIGMA,
    RESULTS_DIR,
    SHAPE_MEAN_TOL,
    STREAM_AUX,
    STREAM_PAIR,
)
from src.distlib import (
    CheckReport,
    TestReport,
    argmax_tail,
    correlation_check,
    exponential_cdf,
    grid_max_shift,
    increment_cdf_D,
    increment_D_sample,
    ks_report,
    ks_threshold,
    normal_law_cdf,
    sup_argmax_sample,
    tail_report,
    two_sample_ks,
    two_sample_threshold,
    variance_check,
)
from src.envgen import BrownianField, GridFunction, GridSpec, derive_stream, sample_brownian, sample_field
from src.errors import ConfigurationError, InsufficientDataError
from src.geodesics import (
    LEFT,
    RIGHT,
    busemann_geodesic,
    coalescence_experiment,
    crossing_sweep,
    dual_energy_check,
    dual_geodesic,
    geodesic_direction,
    geodesic_energy_check,
    geodesic_monotonicity_check,
    midpoint_curve,
    midpoint_hits,
    near_tie_scan,
)
from src.lpp import (
    backtrack,
    brute_force_last_passage,
    brute_force_point_to_line,
    crossing_inequalities,
    energy,
    last_passage,
    point_to_line,
    shape_estimate,
    superadditivity_check,
)
from src.queueops import conservation_check, invert_check, pitman_check, queue_Q_with_flags, reflection_check
from src.stationary import (
    NEGATIVE_CONTROL,
    build_stationary,
    burke_blocks,
    burke_check,
    queue_fixed_point_check,
    sandwich_check,
    sandwich_fraction,
)

logger = logging.getLogger(__name__)

Report = Any  # TestReport | CheckReport


# ═══════════════════════════════════════════════════════════════════════════════
# CONFIGURATION
# ═══════════════════════════════════════════════════════════════════════════════

@dataclass(frozen=True)
class ExperimentConfig:
    """Fully resolved run configuration; `params` holds experiment-specific keys."""

    experiment: str
    t_min: float = DEFAULT_T_MIN
    t_max: float = DEFAULT_T_MAX
    step: float = DEFAULT_STEP
    levels: int = DEFAULT_LEVELS
    theta: float = DEFAULT_THETA
    lam: float = DEFAULT_LAMBDA
    replicas: int = DEFAULT_REPLICAS
    seed: int = DEFAULT_SEED
    out: Path = RESULTS_DIR
    parallel: int = DEFAULT_PARALLEL
    params: Mapping[str, Any] = field(default_factory=dict)

    def spec(self) -> GridSpec:
        return GridSpec(self.t_min, self.t_max, self.step)

    def param(self, key: str, default: Any, cast: Callable = float) -> Any:
        value = self.params.get(key, default)
        try:
            return cast(value)
        except (TypeError, ValueError):
            raise ConfigurationError(f"parameter {key}={value!r} is not a valid {cast.__name__}") from None

    def workers(self) -> int:
        return self.parallel if self.parallel > 0 else (os.cpu_count() or 1)

    def validate(self) -> "ExperimentConfig":
        self.spec()
        if self.replicas < 1:
            raise ConfigurationError(f"replicas must be >= 1, got {self.replicas}")
        if self.levels < 1:
            raise ConfigurationError(f"levels must be >= 1, got {self.levels}")
        if self.theta <= 0 or self.lam <= 0:
            raise ConfigurationError(f"theta and lambda must be positive, got {self.theta}, {self.lam}")
        if self.parallel < 0:
            raise ConfigurationError(f"parallel must be >= 0, got {self.parallel}")
        return self

    def echo(self) -> Dict[str, Any]:
        entries = {k: v for k, v in asdict(self).items() if k != "params"}
        entries["out"] = str(self.out)
        entries.update({f"param.{k}": v for k, v in sorted(self.params.items())})
        return entries


@dataclass(frozen=True)
class Experiment:
    name: str
    operation: str
    description: str
    replica: Callable[[ExperimentConfig, int], List[Dict[str, Any]]]
    summarize: Callable[[ExperimentConfig, pd.DataFrame], List[Report]]
    defaults: Callable[[ExperimentConfig], Dict[str, Any]] = lambda cfg: {}
    validate: Callable[[ExperimentConfig], None] = lambda cfg: None


# ═══════════════════════════════════════════════════════════════════════════════
# HELPERS
# ═══════════════════════════════════════════════════════════════════════════════

def grid_bound(x: float, step: float) -> float:
    """Smallest multiple of step that is >= x."""
    return round(math.ceil(x / step - 1e-9) * step, 12)


def _field(cfg: ExperimentConfig, replica: int, low: int, high: int) -> BrownianField:
    return sample_field(cfg.spec(), range(low, high + 1), cfg.seed, replica=replica)


def _recursion_stack(cfg: ExperimentConfig, replica: int, low: int, high: int):
    top = high + seed_depth(cfg.theta)
    bfield = _field(cfg, replica, low - 1, top - 1)
    return sample_busemann_recursion(bfield, cfg.theta, (low, high))


def _pair(cfg: ExperimentConfig, replica: int) -> Tuple[GridFunction, GridFunction]:
    """Arrivals Z with drift lambda and service B on independent pair streams."""
    spec = cfg.spec()
    Z = sample_brownian(spec, cfg.lam, derive_stream(cfg.seed, STREAM_PAIR, 0, replica))
    B = sample_brownian(spec, 0.0, derive_stream(cfg.seed, STREAM_PAIR, 1, replica))
    return Z, B


def _aux_rng(cfg: ExperimentConfig, replica: int) -> np.random.Generator:
    return np.random.default_rng(derive_stream(cfg.seed, STREAM_AUX, 0, replica))


def _check_columns(prefix: str, report: CheckReport) -> Dict[str, Any]:
    return {
        f"{prefix}_checked": report.checked,
        f"{prefix}_violations": report.violations,
        f"{prefix}_truncated": report.truncated,
        f"{prefix}_deviation": report.max_deviation,
    }


def _aggregate(rows: pd.DataFrame, prefix: str, name: Optional[str] = None) -> CheckReport:
    return CheckReport(
        name or prefix,
        checked=int(rows[f"{prefix}_checked"].sum()),
        violations=int(rows[f"{prefix}_violations"].sum()),
        truncated=int(rows[f"{prefix}_truncated"].sum()),
        max_deviation=float(rows[f"{prefix}_deviation"].max()),
    )


def _kept(rows: pd.DataFrame, value: str, flag: str) -> Tuple[np.ndarray, int]:
    """Values whose truncation flag is clear, plus the excluded count."""
    mask = ~rows[flag].astype(bool)
    return rows.loc[mask, value].to_numpy(dtype=float), int((~mask).sum())


def _fraction_report(statistic: str, fraction: float, minimum: float, n: int, excluded: int = 0) -> TestReport:
    """Passes iff fraction >= minimum."""
    return TestReport(statistic, 1.0 - fraction, 1.0 - minimum, n, excluded)


def _mean_report(statistic: str, samples: np.ndarray, target: float, excluded: int = 0) -> TestReport:
    """|mean - target| < K * sd / sqrt(n) with the sample sd."""
    x = np.asarray(samples, dtype=float)
    x = x[np.isfinite(x)]
    if len(x) < 2:
        raise InsufficientDataError(f"{statistic} needs at least 2 samples, got {len(x)}")
    threshold = MOMENT_K_SIGMA * x.std(ddof=1) / np.sqrt(len(x))
    return TestReport(statistic, float(abs(x.mean() - target)), float(threshold), len(x), excluded)


# ═══════════════════════════════════════════════════════════════════════════════
# LAST PASSAGE
# ═══════════════════════════════════════════════════════════════════════════════

def _shape_defaults(cfg: ExperimentConfig) -> Dict[str, Any]:
    n, t = cfg.param("n", 100, int), cfg.param("t", 1.0)
    return {"t_min": -1.0, "t_max": grid_bound(n * t + 1.0, FINE_STEP), "step": FINE_STEP}


def _shape_replica(cfg: ExperimentConfig, replica: int) -> List[Dict[str, Any]]:
    n, t = cfg.param("n", 100, int), cfg.param("t", 1.0)
    bfield = _field(cfg, replica, 0, n)
    return [{"estimate": shape_estimate(bfield, n, t)}]


def _shape_summary(cfg: ExperimentConfig, rows: pd.DataFrame) -> List[Report]:
    t = cfg.param("t", 1.0)
    mean = float(rows["estimate"].mean())
    return [TestReport("shape_mean", abs(mean - 2.0 * math.sqrt(t)), SHAPE_MEAN_TOL, len(rows))]


def _bruteforce_defaults(cfg: ExperimentConfig) -> Dict[str, Any]:
    return {"t_min": -0.1, "t_max": 0.2, "step": 0.02, "levels": 3}


def _bruteforce_replica(cfg: ExperimentConfig, replica: int) -> List[Dict[str, Any]]:
    n = cfg.levels
    spec = cfg.spec()
    bfield = _field(cfg, replica, 0, n + 1)
    end = (n, spec.t_max)
    report = CheckReport("lpp_bruteforce")

    value, table = last_passage(bfield, (0, 0.0), end)
    brute, _ = brute_force_last_passage(bfield, (0, 0.0), end)
    report.record(abs(value - brute) <= 1e-9, abs(value - brute), identity="dp = enumeration")
    for side in (LEFT, RIGHT):
        path = backtrack(table, end, side)
        e = energy(bfield, path)
        report.record(abs(e - value) <= 1e-9, abs(e - value), identity="backtrack energy", side=side)

    line, _ = point_to_line(bfield, (0, 0.0), bfield[n + 1], n)
    line_brute = brute_force_point_to_line(bfield, (0, 0.0), bfield[n + 1], n)
    report.record(abs(line - line_brute) <= 1e-9, abs(line - line_brute), identity="point-to-line = enumeration")

    times = spec.times[spec.zero_index:]
    s, t, T, u = times[0], times[len(times) // 4], times[len(times) // 2], times[-1]
    report = report.merge(crossing_inequalities(bfield, 0, n, s, t, T, u))
    report = report.merge(superadditivity_check(bfield, (0, s), (1, T), (n, u)))
    return [_check_columns("lpp", report)]


def _bruteforce_summary(cfg: ExperimentConfig, rows: pd.DataFrame) -> List[Report]:
    return [_aggregate(rows, "lpp", "lpp_bruteforce")]


# ═══════════════════════════════════════════════════════════════════════════════
# QUEUES
# ═══════════════════════════════════════════════════════════════════════════════

def _queue_replica(cfg: ExperimentConfig, replica: int) -> List[Dict[str, Any]]:
    Z, B = _pair(cfg, replica)
    spec = Z.spec
    report = invert_check(Z, B).merge(conservation_check(Z, B))
    if spec.is_symmetric:
        report = report.merge(reflection_check(Z, B))
    result = queue_Q_with_flags(Z, B)
    k0 = spec.zero_index
    row = _check_columns("queue", report)
    row["exact_points"] = report.details.get("exact_points", 0)
    row["q0"] = float(result.queue.values[k0]) + grid_max_shift(spec.step)
    row["q0_truncated"] = bool(result.truncated[k0])
    return [row]


def _queue_summary(cfg: ExperimentConfig, rows: pd.DataFrame) -> List[Report]:
    q0, excluded = _kept(rows, "q0", "q0_truncated")
    return [
        _aggregate(rows, "queue", "queue_identities"),
        ks_report(q0, exponential_cdf(cfg.lam), ks_threshold(len(q0)), "ks_queue_exp", excluded),
    ]


def _pitman_replica(cfg: ExperimentConfig, replica: int) -> List[Dict[str, Any]]:
    f = sample_brownian(cfg.spec(), 0.0, derive_stream(cfg.seed, STREAM_PAIR, 0, replica))
    return [_check_columns("pitman", pitman_check(f))]


def _pitman_summary(cfg: ExperimentConfig, rows: pd.DataFrame) -> List[Report]:
    return [_aggregate(rows, "pitman", "pitman_transform")]


# ═══════════════════════════════════════════════════════════════════════════════
# BUSEMANN PROCESS
# ═══════════════════════════════════════════════════════════════════════════════

def _marginals_replica(cfg: ExperimentConfig, replica: int) -> List[Dict[str, Any]]:
    t = cfg.param("t", 1.0)
    stack = _recursion_stack(cfg, replica, 0, cfg.levels - 1)
    spec = stack.spec
    k0 = spec.zero_index
    sl = stack[0]
    clean = stack.clean_until(stack.min_level, stack.max_level)
    report = slice_invariants_check(stack).merge(recursion_consistency_check(stack))
    report = report.merge(reversal_duality_check(stack))
    return [{
        "h": sl.h(t),
        "h_truncated": spec.index_of(t) >= clean or k0 >= clean,
        "v": sl.v.values[k0] + grid_max_shift(spec.step),
        "v_truncated": k0 >= clean,
        "x": sl.x_dual(t),
        **_check_columns("busemann", report),
    }]


def _marginals_summary(cfg: ExperimentConfig, rows: pd.DataFrame) -> List[Report]:
    t = cfg.param("t", 1.0)
    rate = 1.0 / math.sqrt(cfg.theta)
    h, h_out = _kept(rows, "h", "h_truncated")
    v, v_out = _kept(rows, "v", "v_truncated")
    x = rows["x"].to_numpy(dtype=float)
    return [
        ks_report(h, normal_law_cdf(rate * t, t), ks_threshold(len(h)), "ks_h_normal", h_out),
        _mean_report("mean_h", h, rate * t, h_out),
        variance_check(h, t, statistic="var_h", excluded=h_out),
        ks_report(v, exponential_cdf(rate), ks_threshold(len(v)), "ks_v_exp", v_out),
        ks_report(x, normal_law_cdf(0.0, t), ks_threshold(len(x)), "ks_dual_normal"),
        _aggregate(rows, "busemann", "busemann_structure"),
    ]


def _crosscheck_n(cfg: ExperimentConfig) -> int:
    return cfg.param("n", CROSSCHECK_N_LEVELS, int)


def _crosscheck_defaults(cfg: ExperimentConfig) -> Dict[str, Any]:
    return {"t_min": -5.0, "t_max": grid_bound(_crosscheck_n(cfg) * cfg.theta + 2.0, cfg.step)}


def _crosscheck_replica(cfg: ExperimentConfig, replica: int) -> List[Dict[str, Any]]:
    t = cfg.param("t", 1.0)
    gamma = cfg.param("gamma", cfg.theta / 2.0)
    n = _crosscheck_n(cfg)
    top = 1 + seed_depth(cfg.theta)
    bfield = _field(cfg, replica, -1, max(top - 1, n))
    stack = sample_busemann_recursion(bfield, cfg.theta, (0, 1))
    spec = bfield.spec
    k0 = spec.zero_index
    report, _, _ = monotonicity_check(bfield, gamma, cfg.theta, (0, 1), n)
    return [{
        "h_recursion": stack.h(0)(t),
        "h_limit": estimate_busemann_limit(bfield, cfg.theta, (0, 0.0), (0, t), n),
        "v_recursion": stack.v(1).values[k0],
        "v_limit": estimate_busemann_limit(bfield, cfg.theta, (0, 0.0), (1, 0.0), n),
        "truncated": max(spec.index_of(t), k0) >= stack.clean_until(0, 1),
        **_check_columns("monotone", report),
    }]


def _crosscheck_summary(cfg: ExperimentConfig, rows: pd.DataFrame) -> List[Report]:
    clean = rows[~rows["truncated"].astype(bool)]
    n = len(clean)
    threshold = two_sample_threshold(n)
    return [
        two_sample_ks(clean["h_recursion"], clean["h_limit"], threshold, "ks_h_recursion_vs_limit"),
        two_sample_ks(clean["v_recursion"], clean["v_limit"], threshold, "ks_v_recursion_vs_limit"),
        _aggregate(rows, "monotone", "busemann_monotonicity"),
    ]


def _dual_replica(cfg: ExperimentConfig, replica: int) -> List[Dict[str, Any]]:
    t = cfg.param("t", 1.0)
    stack = _recursion_stack(cfg, replica, 1, cfg.levels)
    row = {f"x_{m}": stack.x_dual(m)(t) for m in stack.levels}
    row.update(_check_columns("duality", reversal_duality_check(stack)))
    return [row]


def _dual_summary(cfg: ExperimentConfig, rows: pd.DataFrame) -> List[Report]:
    t = cfg.param("t", 1.0)
    columns = [c for c in rows.columns if c.startswith("x_")]
    reports: List[Report] = []
    for c in columns:
        x = rows[c].to_numpy(dtype=float)
        reports.append(ks_report(x, normal_law_cdf(0.0, t), ks_threshold(len(x)), f"ks_{c}_normal"))
    for a, b in zip(columns, columns[1:]):
        reports.append(correlation_check(rows[a], rows[b], statistic=f"corr({a},{b})"))
    reports.append(_aggregate(rows, "duality", "reversal_duality"))
    return reports


# ═══════════════════════════════════════════════════════════════════════════════
# GEODESICS
# ═══════════════════════════════════════════════════════════════════════════════

def _long_stack_defaults(levels: int) -> Callable[[ExperimentConfig], Dict[str, Any]]:
    def defaults(cfg: ExperimentConfig) -> Dict[str, Any]:
        return {"levels": levels, "t_min": -5.0, "t_max": grid_bound(2.0 * cfg.levels * cfg.theta + 10.0, cfg.step)}
    return defaults


def _direction_replica(cfg: ExperimentConfig, replica: int) -> List[Dict[str, Any]]:
    stack = _recursion_stack(cfg, replica, 0, cfg.levels)
    row: Dict[str, Any] = {}
    for side in (LEFT, RIGHT):
        g = busemann_geodesic(stack, (0, 0.0), side)
        try:
            row[f"slope_{side}"] = geodesic_direction(g)
        except InsufficientDataError:
            row[f"slope_{side}"] = np.nan
        if side == LEFT:
            row.update(_check_columns("energy", geodesic_energy_check(stack, g)))
    starts = [(0, -1.0), (0, 0.0), (0, 1.0)]
    row.update(_check_columns("order", geodesic_monotonicity_check(stack, starts)))
    return [row]


def _direction_summary(cfg: ExperimentConfig, rows: pd.DataFrame) -> List[Report]:
    tolerance = cfg.param("tolerance", DIRECTION_TOLERANCE)
    minimum = cfg.param("min_fraction", MIN_DIRECTED_FRACTION)
    reports: List[Report] = []
    for side in (LEFT, RIGHT):
        slopes = rows[f"slope_{side}"].to_numpy(dtype=float)
        kept = slopes[np.isfinite(slopes)]
        excluded = len(slopes) - len(kept)
        within = float(np.mean(np.abs(kept / cfg.theta - 1.0) <= tolerance)) if len(kept) else 0.0
        reports.append(_mean_report(f"direction_{side}", kept, cfg.theta, excluded))
        reports.append(_fraction_report(
            f"direction_within_{round(100 * tolerance)}pct_{side}", within, minimum, len(kept), excluded
        ))
    reports.append(_aggregate(rows, "energy", "geodesic_identities"))
    reports.append(_aggregate(rows, "order", "geodesic_monotonicity"))
    return reports


CROSSING_TIMES = (-1.0, -0.5, 0.0, 0.5, 1.0)


def _crossing_defaults(cfg: ExperimentConfig) -> Dict[str, Any]:
    return {"levels": 4}


def _crossing_replica(cfg: ExperimentConfig, replica: int) -> List[Dict[str, Any]]:
    stack = _recursion_stack(cfg, replica, -1, cfg.levels)
    crossing = CheckReport("geodesic_crossing")
    limited = 0
    for m in range(0, cfg.levels):
        for i, s in enumerate(CROSSING_TIMES):
            for t in CROSSING_TIMES[i:]:
                sub = crossing_sweep(stack, m, s, t)
                limited += sub.details.get("grid_limited", 0)
                crossing = crossing.merge(sub)

    duals = CheckReport("dual_identities")
    for side in (LEFT, RIGHT):
        duals = duals.merge(dual_energy_check(stack, dual_geodesic(stack, (cfg.levels, 0.0), side)))

    g = busemann_geodesic(stack, (0, 0.0), RIGHT, top_level=0)
    d = dual_geodesic(stack, (0, 0.0), LEFT, bottom_level=-1)
    return [{
        **_check_columns("crossing", crossing),
        "grid_limited": limited,
        **_check_columns("dual", duals),
        "tau_right": g.tau(0),
        "tau_right_truncated": g.is_truncated(0),
        "tau_dual_left": -d.tau(-1),
        "tau_dual_left_truncated": d.is_truncated(-1),
    }]


def _crossing_summary(cfg: ExperimentConfig, rows: pd.DataFrame) -> List[Report]:
    rate = 1.0 / math.sqrt(cfg.theta)
    clean = rows[~(rows["tau_right_truncated"].astype(bool) | rows["tau_dual_left_truncated"].astype(bool))]
    excluded = len(rows) - len(clean)
    forward = clean["tau_right"].to_numpy(dtype=float)
    points = np.array([0.5, 1.0, 2.0, 4.0]) * cfg.theta
    crossing = _aggregate(rows, "crossing", "geodesic_crossing")
    crossing.details["grid_limited"] = int(rows["grid_limited"].sum())
    return [
        crossing,
        _aggregate(rows, "dual", "dual_identities"),
        two_sample_ks(forward, clean["tau_dual_left"], two_sample_threshold(len(clean)), "ks_forward_vs_reflected_dual"),
        tail_report(forward, lambda x: argmax_tail(rate, x), points, statistic="tail_forward_jump", excluded=excluded),
    ]


def _coalescence_heights(cfg: ExperimentConfig) -> Tuple[int, int]:
    return max(1, cfg.levels // 2), cfg.levels


def _coalescence_replica(cfg: ExperimentConfig, replica: int) -> List[Dict[str, Any]]:
    half = cfg.param("spacing", 2.0) / 2.0
    stack = _recursion_stack(cfg, replica, 0, cfg.levels)
    met, level = coalescence_experiment(stack, (0, -half), (0, half), LEFT)
    row: Dict[str, Any] = {"coalesced": met, "level": np.nan if level is None else level}
    for height in _coalescence_heights(cfg):
        row[f"coalesced_by_{height}"] = bool(met and level <= height)
    return [row]


def _coalescence_summary(cfg: ExperimentConfig, rows: pd.DataFrame) -> List[Report]:
    minimum = cfg.param("min_fraction", MIN_COALESCED_FRACTION)
    low, high = _coalescence_heights(cfg)
    fractions = {h: float(rows[f"coalesced_by_{h}"].astype(bool).mean()) for h in (low, high)}
    trend = CheckReport("coalescence_height_trend", details={"fractions": fractions})
    trend.record(fractions[low] <= fractions[high], max(fractions[low] - fractions[high], 0.0), heights=(low, high))
    return [_fraction_report("coalesced_fraction", fractions[high], minimum, len(rows)), trend]


NEAR_TIE_WINDOWS = (0.25, 0.5, 1.0)


def _near_ties_replica(cfg: ExperimentConfig, replica: int) -> List[Dict[str, Any]]:
    Z, B = _pair(cfg, replica)
    spec = Z.spec
    f = GridFunction(spec, B.values - Z.values)
    epsilon = cfg.param("c", 1.0) * math.sqrt(spec.step)
    row = {}
    for fraction in NEAR_TIE_WINDOWS:
        cut = spec.time_at(spec.nearest_index(fraction * spec.t_max))
        g = f.restrict(spec.truncate(cut))
        row[f"exact_{fraction}"] = len(near_tie_scan(g, 0.0))
        row[f"near_{fraction}"] = len(near_tie_scan(g, epsilon))
    return [row]


def _near_ties_summary(cfg: ExperimentConfig, rows: pd.DataFrame) -> List[Report]:
    exact = int(sum(rows[f"exact_{w}"].sum() for w in NEAR_TIE_WINDOWS))
    means = [float(rows[f"near_{w}"].mean()) for w in NEAR_TIE_WINDOWS]
    drops = sum(1 for a, b in zip(means, means[1:]) if b < a)
    growth = CheckReport("near_tie_growth", details={"mean_counts": means})
    growth.record(drops == 0 and means[-1] > 0, float(drops))
    return [TestReport("exact_ties", float(exact), 0.0, len(rows)), growth]


def _midpoint_values(cfg: ExperimentConfig) -> List[int]:
    n_min = cfg.param("n_min", 5, int)
    n_max = cfg.param("n_max", 25, int)
    n_step = cfg.param("n_step", 5, int)
    if n_min < 0 or n_step < 1 or n_max < n_min:
        raise ConfigurationError(f"midpoint range n_min={n_min}, n_max={n_max}, n_step={n_step} is empty")
    return list(range(n_min, n_max + 1, n_step))


def _midpoint_defaults(cfg: ExperimentConfig) -> Dict[str, Any]:
    n_max = max(_midpoint_values(cfg))
    eta = cfg.param("eta", cfg.theta)
    return {
        "replicas": 500,
        "t_min": -grid_bound(n_max * eta + 2.0, cfg.step),
        "t_max": grid_bound(n_max * cfg.theta + 2.0, cfg.step),
    }


def _midpoint_replica(cfg: ExperimentConfig, replica: int) -> List[Dict[str, Any]]:
    n_values = _midpoint_values(cfg)
    n_max = max(n_values)
    point = (cfg.param("m", 0, int), cfg.param("t", 0.0))
    bfield = _field(cfg, replica, -n_max, n_max)
    return midpoint_hits(bfield, cfg.theta, cfg.param("eta", cfg.theta), point, n_values)


def _midpoint_summary(cfg: ExperimentConfig, rows: pd.DataFrame) -> List[Report]:
    """Median hit curve over seed batches: no rise beyond noise between consecutive n, and last < first."""
    batches = cfg.param("batches", MIDPOINT_BATCHES, int)
    replica = rows["replica"] if "replica" in rows else pd.Series(np.arange(len(rows)), index=rows.index)
    batch = replica % max(batches, 1)
    per_batch = rows.assign(batch=batch).groupby(["batch", "n"])["hit"].mean()
    median = per_batch.groupby(level="n").median().sort_index()
    pooled = midpoint_curve(rows).set_index("n")["probability"]
    n = int(replica.nunique())

    trend = CheckReport("midpoint_nonincreasing", details={"median_curve": median.round(4).to_dict()})
    for (a, pa), (b, pb) in zip(median.items(), list(median.items())[1:]):
        p = float(pooled.loc[[a, b]].mean())
        allowance = MIDPOINT_RISE_SIGMAS * math.sqrt(max(p * (1.0 - p), 1.0 / n) / n)
        trend.record(pb - pa <= allowance, max(pb - pa, 0.0), n_from=int(a), n_to=int(b))

    decay = CheckReport("midpoint_decay")
    first, last = float(median.iloc[0]), float(median.iloc[-1])
    decay.record(len(median) > 1 and last < first, max(last - first, 0.0), first=first, last=last)
    logger.info("midpoint median curve: %s", trend.details["median_curve"])
    return [trend, decay]


# ═══════════════════════════════════════════════════════════════════════════════
# STATIONARY MODEL
# ═══════════════════════════════════════════════════════════════════════════════

def _burke_times(cfg: ExperimentConfig) -> List[float]:
    spacing = cfg.param("spacing", 1.0)
    n = cfg.levels
    return [((n + 1) / 2.0 - r) * spacing for r in range(1, n + 1)]


def _burke_defaults(cfg: ExperimentConfig) -> Dict[str, Any]:
    return {"levels": 3}


def _burke_replica(cfg: ExperimentConfig, replica: int) -> List[Dict[str, Any]]:
    lag = cfg.param("lag", 1.0)
    n = cfg.levels
    bfield = _field(cfg, replica, 0, n)
    stack = build_stationary(bfield, cfg.lam, n)
    spec = bfield.spec
    k0 = spec.zero_index
    control = bool(cfg.param("negative_control", 1, int))
    row = burke_blocks(stack, _burke_times(cfg), lag, negative_control=control)
    row["aux_q"] = stack.q[n].values[k0] + grid_max_shift(spec.step)
    row["aux_q_truncated"] = bool(stack.truncated[n][k0])
    row["aux_y0"] = stack.Y[0].increment(0.0, lag)
    row["aux_yn"] = stack.Y[n].increment(0.0, lag)
    return [row]


def _burke_summary(cfg: ExperimentConfig, rows: pd.DataFrame) -> List[Report]:
    lag = cfg.param("lag", 1.0)
    blocks = rows[[c for c in rows.columns if not c.startswith("aux_") and c != "replica"]]
    burke = burke_check(blocks)
    reports: List[Report] = [burke]
    if NEGATIVE_CONTROL in blocks:
        control = CheckReport("negative_control", details={"rho": burke.details["control_rho"]})
        control.record(burke.details["control_detected"], burke.details["control_rho"])
        reports.append(control)
    q, excluded = _kept(rows, "aux_q", "aux_q_truncated")
    reports.append(ks_report(q, exponential_cdf(cfg.lam), ks_threshold(len(q)), "ks_queue_length_exp", excluded))
    reports.extend(queue_fixed_point_check(rows["aux_y0"], rows["aux_yn"], cfg.lam, lag))
    return reports


def _sandwich_params(cfg: ExperimentConfig) -> Dict[str, Any]:
    lam2 = cfg.lam ** -2
    return {
        "delta_hat": cfg.param("delta_hat", 0.5 * lam2),
        "gamma_hat": cfg.param("gamma_hat", 2.0 * lam2),
        "s": cfg.param("s", 0.0),
        "t": cfg.param("t", 1.0),
        "n": cfg.param("n", 30, int),
    }


def _sandwich_defaults(cfg: ExperimentConfig) -> Dict[str, Any]:
    p = _sandwich_params(cfg)
    return {"t_max": grid_bound(p["n"] * p["gamma_hat"] + 2.0, cfg.step)}


def _sandwich_validate(cfg: ExperimentConfig) -> None:
    p = _sandwich_params(cfg)
    if not p["delta_hat"] < cfg.lam ** -2 < p["gamma_hat"]:
        raise ConfigurationError("sandwich needs delta_hat < lambda^-2 < gamma_hat")


def _sandwich_replica(cfg: ExperimentConfig, replica: int) -> List[Dict[str, Any]]:
    p = _sandwich_params(cfg)
    bfield = _field(cfg, replica, 0, p["n"] + 1)
    return [sandwich_check(bfield, cfg.lam, p["delta_hat"], p["gamma_hat"], p["s"], p["t"], p["n"])]


def _sandwich_summary(cfg: ExperimentConfig, rows: pd.DataFrame) -> List[Report]:
    minimum = cfg.param("min_fraction", MIN_BRACKETED_FRACTION)
    fractions = sandwich_fraction(rows)
    excluded = len(rows) - fractions["replicas"]
    return [
        _fraction_report("sandwich_h_fraction", fractions["h_fraction"], minimum, fractions["replicas"], excluded),
        _fraction_report("sandwich_v_fraction", fractions["v_fraction"], minimum, fractions["replicas"], excluded),
    ]


# ═══════════════════════════════════════════════════════════════════════════════
# CLOSED-FORM LAWS
# ═══════════════════════════════════════════════════════════════════════════════

def _fine_defaults(cfg: ExperimentConfig) -> Dict[str, Any]:
    return {"t_min": -1.0, "t_max": 20.0, "step": FINE_STEP}


def _sup_replica(cfg: ExperimentConfig, replica: int) -> List[Dict[str, Any]]:
    spec = cfg.spec()
    sup, argmax, truncated = sup_argmax_sample(cfg.lam, spec, _aux_rng(cfg, replica))
    return [{"sup": sup + grid_max_shift(spec.step), "argmax": argmax, "truncated": truncated}]


def _argmax_summary(cfg: ExperimentConfig, rows: pd.DataFrame) -> List[Report]:
    argmax, excluded = _kept(rows, "argmax", "truncated")
    points = np.array([0.5, 1.0, 2.0, 4.0])
    return [tail_report(argmax, lambda x: argmax_tail(cfg.lam, x), points, statistic="tail_argmax", excluded=excluded)]


def _exp_sup_summary(cfg: ExperimentConfig, rows: pd.DataFrame) -> List[Report]:
    sup, excluded = _kept(rows, "sup", "truncated")
    return [ks_report(sup, exponential_cdf(cfg.lam), ks_threshold(len(sup)), "ks_sup_exp", excluded)]


def _increment_replica(cfg: ExperimentConfig, replica: int) -> List[Dict[str, Any]]:
    t = cfg.param("t", 1.0)
    value, truncated = increment_D_sample(cfg.lam, t, cfg.spec(), _aux_rng(cfg, replica))
    return [{"increment": value, "truncated": truncated}]


def _increment_summary(cfg: ExperimentConfig, rows: pd.DataFrame) -> List[Report]:
    t = cfg.param("t", 1.0)
    x, excluded = _kept(rows, "increment", "truncated")
    cdf = lambda z: increment_cdf_D(cfg.lam, t, z)  # noqa: E731
    return [ks_report(x, cdf, ks_threshold(len(x)), "ks_increment_cdf", excluded)]


# ═══════════════════════════════════════════════════════════════════════════════
# REGISTRY
# ═══════════════════════════════════════════════════════════════════════════════

EXPERIMENTS: Dict[str, Experiment] = {
    e.name: e
    for e in (
        Experiment("shape", "lpp.shape_estimate", "n^-1 L_{(0,0),(n,nt)} against 2 sqrt(t)",
                   _shape_replica, _shape_summary, _shape_defaults),
        Experiment("lpp-bruteforce", "lpp.brute_force_last_passage", "DP against enumeration, crossing inequalities",
                   _bruteforce_replica, _bruteforce_summary, _bruteforce_defaults),
        Experiment("queue-invert", "queueops.invert_check", "queue inversion, conservation, reflection, Exp(lambda) queue",
                   _queue_replica, _queue_summary),
        Experiment("pitman", "queueops.pitman_check", "Pitman transform identity on the grid",
                   _pitman_replica, _pitman_summary),
        Experiment("busemann-marginals", "busemann.sample_busemann_recursion", "h, v and X marginals, stack structure",
                   _marginals_replica, _marginals_summary),
        Experiment("busemann-crosscheck", "busemann.estimate_busemann_limit", "recursion sampler against finite-n limit",
                   _crosscheck_replica, _crosscheck_summary, _crosscheck_defaults),
        Experiment("dual-field", "busemann.dual_field", "X marginals, cross-level correlation, reversal duality",
                   _dual_replica, _dual_summary),
        Experiment("geodesic-direction", "geodesics.geodesic_direction", "slope of tau_n against theta",
                   _direction_replica, _direction_summary, _long_stack_defaults(50)),
        Experiment("geodesic-crossing", "geodesics.crossing_check", "geodesic/dual crossing rules, dual energy",
                   _crossing_replica, _crossing_summary, _crossing_defaults),
        Experiment("coalescence", "geodesics.coalescence_experiment", "two geodesics in one direction meet",
                   _coalescence_replica, _coalescence_summary, _long_stack_defaults(60)),
        Experiment("near-ties", "geodesics.near_tie_scan", "exact and epsilon-approximate argmax ties",
                   _near_ties_replica, _near_ties_summary),
        Experiment("midpoint", "geodesics.midpoint_experiment", "geodesics through a fixed point as n grows",
                   _midpoint_replica, _midpoint_summary, _midpoint_defaults),
        Experiment("burke", "stationary.burke_check", "Burke independence, Exp(lambda) queues, fixed point",
                   _burke_replica, _burke_summary, _burke_defaults),
        Experiment("sandwich", "stationary.sandwich_check", "W-environment LPP brackets -Y_0(s,t) and q_1(t)",
                   _sandwich_replica, _sandwich_summary, _sandwich_defaults, _sandwich_validate),
        Experiment("dist-argmax", "distlib.argmax_tail", "argmax of sqrt(2) B(s) - lambda s",
                   _sup_replica, _argmax_summary, _fine_defaults),
        Experiment("dist-increment-cdf", "distlib.increment_cdf_D", "law of D(t)",
                   _increment_replica, _increment_summary, _fine_defaults),
        Experiment("exp-sup", "distlib.exp_sup_cdf", "sup of sqrt(2) B(s) - lambda s against Exp(lambda)",
                   _sup_replica, _exp_sup_summary, _fine_defaults),
    )
}


def list_experiments() -> str:
    width = max(len(name) for name in EXPERIMENTS)
    return "\n".join(f"{e.name:<{width}}  {e.operation:<36}  {e.description}" for e in EXPERIMENTS.values())


# ═══════════════════════════════════════════════════════════════════════════════
# RUNNER
# ═══════════════════════════════════════════════════════════════════════════════

@dataclass
class RunResult:
    config: ExperimentConfig
    rows: pd.DataFrame
    reports: List[Report]

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.reports)

    def summary(self) -> pd.DataFrame:
        frame = pd.DataFrame([r.to_row() for r in self.reports])
        frame.insert(0, "experiment", self.config.experiment)
        return frame


def _run_replica(task: Tuple[ExperimentConfig, int]) -> List[Dict[str, Any]]:
    cfg, replica = task
    rows = EXPERIMENTS[cfg.experiment].replica(cfg, replica)
    return [{"replica": replica, **row} for row in rows]


def run_experiment(cfg: ExperimentConfig, progress: bool = False) -> RunResult:
    """
    Fan the replicas of one experiment out over worker processes and summarize.

    Rows are merged in replica order whatever the number of workers.
    """
    experiment = EXPERIMENTS[cfg.experiment]
    cfg.validate()
    experiment.validate(cfg)
    tasks = [(cfg, i) for i in range(cfg.replicas)]
    workers = min(cfg.workers(), cfg.replicas)

    print(f"\n{' ' + cfg.experiment.upper() + ' ':═^80}")
    print(f"🎲 Replicas: {cfg.replicas} | seed {cfg.seed} | workers {workers}")
    bar = dict(total=cfg.replicas, disable=not progress, desc=cfg.experiment, unit="replica")
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(tqdm(pool.map(_run_replica, tasks, chunksize=max(1, cfg.replicas // (8 * workers))), **bar))
    else:
        chunks = [_run_replica(task) for task in tqdm(tasks, **bar)]

    rows = pd.DataFrame([row for chunk in chunks for row in chunk])
    reports = experiment.summarize(cfg, rows)
    result = RunResult(cfg, rows, reports)
    status = "✅ All checks passed" if result.passed else "❌ Some checks failed"
    print(f"{status} ({sum(r.passed for r in reports)}/{len(reports)})")
    return result


def with_defaults(cfg: ExperimentConfig, explicit: Mapping[str, Any]) -> ExperimentConfig:
    """Apply the experiment's own defaults to every field not set explicitly."""
    experiment = EXPERIMENTS[cfg.experiment]
    overrides = {k: v for k, v in experiment.defaults(cfg).items() if k not in explicit}
    if not overrides:
        return cfg
    cfg = replace(cfg, **overrides)
    # defaults may depend on each other (levels -> t_max)
    again = {k: v for k, v in experiment.defaults(cfg).items() if k not in explicit}
    return replace(cfg, **again)
