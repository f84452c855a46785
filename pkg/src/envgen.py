"""
═══════════════════════════════════════════════════════════════════════════════
ENVIRONMENT GENERATION
═══════════════════════════════════════════════════════════════════════════════

Uniform time grids, grid-sampled functions and seeded fields of independent
two-sided Brownian motions: the environment B = {B_r} every other module
works on.

Seeding contract:
    Every line is drawn from a numpy SeedSequence whose spawn key is
    (tag, level_key, replica), extended by a side component (0 for the
    increments right of 0, 1 for those left of 0). level_key maps the
    integer level onto the naturals (0, -1, 1, -2, ... -> 0, 1, 2, 3, ...).
    The derivation depends only on these integers, so streams are stable
    across processes and independent of the order in which they are drawn.
═══════════════════════════════════════════════════════════════════════════════
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Dict, Iterable, Mapping, Optional, Tuple, Union

import numpy as np
import pandas as pd

from src.config import (
    CSV_FLOAT_FORMAT,
    CSV_SIGNIFICANT_DIGITS,
    FIELD_MANIFEST_NAME,
    GRID_SNAP_TOL,
    MIN_GRID_POINTS,
    SEED_MASK,
    STREAM_FIELD,
)
from src.errors import ConfigurationError, DomainError, WindowError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


# ═══════════════════════════════════════════════════════════════════════════════
# GRID TYPES
# ═══════════════════════════════════════════════════════════════════════════════

@dataclass(frozen=True)
class GridSpec:
    """
    Uniform time grid on [t_min, t_max] containing 0.

    Grid times are (j - zero_index) * step, so 0 is represented exactly and a
    window symmetric about 0 has exactly negated times on mirrored indices.
    """

    t_min: float
    t_max: float
    step: float
    n_points: int = field(init=False, repr=False)
    zero_index: int = field(init=False, repr=False)

    def __post_init__(self):
        t_min, t_max, step = float(self.t_min), float(self.t_max), float(self.step)
        if not np.isfinite([t_min, t_max, step]).all():
            raise ConfigurationError("grid bounds and step must be finite")
        if step <= 0:
            raise ConfigurationError(f"grid step must be positive, got {step}")
        if not t_min < 0 < t_max:
            raise ConfigurationError(f"grid must satisfy t_min < 0 < t_max, got [{t_min}, {t_max}]")

        left = -t_min / step
        right = t_max / step
        if abs(left - round(left)) > GRID_SNAP_TOL * max(1.0, left):
            raise ConfigurationError(f"0 is not on the grid: t_min={t_min} is not a multiple of step={step}")
        if abs(right - round(right)) > GRID_SNAP_TOL * max(1.0, right):
            raise ConfigurationError(f"t_max={t_max} is not a multiple of step={step}")

        zero_index = int(round(left))
        n_points = zero_index + int(round(right)) + 1
        if n_points < MIN_GRID_POINTS:
            raise ConfigurationError(f"grid needs at least {MIN_GRID_POINTS} points, got {n_points}")

        object.__setattr__(self, "t_min", t_min)
        object.__setattr__(self, "t_max", t_max)
        object.__setattr__(self, "step", step)
        object.__setattr__(self, "zero_index", zero_index)
        object.__setattr__(self, "n_points", n_points)

    @classmethod
    def symmetric(cls, half_width: float, step: float) -> "GridSpec":
        return cls(-half_width, half_width, step)

    @property
    def times(self) -> np.ndarray:
        return (np.arange(self.n_points) - self.zero_index) * self.step

    @property
    def is_symmetric(self) -> bool:
        return self.zero_index * 2 == self.n_points - 1

    @property
    def last_index(self) -> int:
        return self.n_points - 1

    def time_at(self, index: int) -> float:
        if not 0 <= index < self.n_points:
            raise DomainError(f"grid index {index} outside [0, {self.n_points - 1}]")
        return (index - self.zero_index) * self.step

    def contains(self, t: float) -> bool:
        try:
            self.index_of(t)
        except DomainError:
            return False
        return True

    def index_of(self, t: float) -> int:
        """Grid index of time t; raises DomainError for off-grid or out-of-window times."""
        t = float(t)
        j = int(round(t / self.step)) + self.zero_index
        if not 0 <= j < self.n_points:
            raise DomainError(f"time {t} outside the window [{self.t_min}, {self.t_max}]")
        if abs((j - self.zero_index) * self.step - t) > GRID_SNAP_TOL * max(1.0, abs(t)):
            raise DomainError(f"time {t} is not on the grid (step {self.step})")
        return j

    def nearest_index(self, t: float) -> int:
        """Index of the grid time closest to t; raises WindowError outside the window."""
        j = int(round(float(t) / self.step)) + self.zero_index
        if not 0 <= j < self.n_points:
            raise WindowError(f"time {t} outside the window [{self.t_min}, {self.t_max}]")
        return j

    def truncate(self, t_max: float) -> "GridSpec":
        """Same grid cut at t_max; indices below the cut are unchanged."""
        return GridSpec(self.t_min, self.time_at(self.index_of(t_max)), self.step)

    def window_indices(self, a: float, b: float) -> Tuple[int, int]:
        """Inclusive index range of the grid times in [a, b]."""
        ia, ib = self.index_of(a), self.index_of(b)
        if ia > ib:
            raise DomainError(f"empty window [{a}, {b}]")
        return ia, ib

    def interior(self, fraction: float) -> Tuple[int, int]:
        """Inclusive index range of the middle `fraction` of the grid."""
        margin = int(round(self.n_points * (1.0 - fraction) / 2.0))
        return margin, self.n_points - 1 - margin


@dataclass(frozen=True, eq=False)
class GridFunction:
    """A real function sampled on every point of a GridSpec."""

    spec: GridSpec
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != (self.spec.n_points,):
            raise DomainError(
                f"expected {self.spec.n_points} values for the grid, got shape {values.shape}"
            )
        if not np.isfinite(values).all():
            raise DomainError("grid function values must be finite")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    def __call__(self, t: float) -> float:
        return float(self.values[self.spec.index_of(t)])

    def __len__(self) -> int:
        return self.spec.n_points

    def at(self, index: int) -> float:
        return float(self.values[index])

    def increment(self, s: float, t: float) -> float:
        return increment(self, s, t)

    def restrict(self, spec: GridSpec) -> "GridFunction":
        """Values on a truncated copy of this grid."""
        if spec.step != self.spec.step or spec.zero_index != self.spec.zero_index or spec.n_points > self.spec.n_points:
            raise DomainError(f"{spec} is not a truncation of {self.spec}")
        return GridFunction(spec, self.values[:spec.n_points])


@dataclass(frozen=True, eq=False)
class BrownianField:
    """Family of grid lines indexed by integer level, all on one grid."""

    spec: GridSpec
    lines: Mapping[int, GridFunction]
    drift: float = 0.0
    seed: Optional[int] = None
    replica: int = 0

    def __post_init__(self):
        if not self.lines:
            raise ConfigurationError("a field needs at least one level")
        lines = {int(r): f for r, f in self.lines.items()}
        for r, f in lines.items():
            if f.spec != self.spec:
                raise DomainError(f"line {r} lives on a different grid")
        object.__setattr__(self, "lines", MappingProxyType(dict(sorted(lines.items()))))

    @property
    def levels(self) -> Tuple[int, ...]:
        return tuple(self.lines)

    @property
    def min_level(self) -> int:
        return self.levels[0]

    @property
    def max_level(self) -> int:
        return self.levels[-1]

    def __getitem__(self, level: int) -> GridFunction:
        try:
            return self.lines[level]
        except KeyError:
            raise DomainError(f"level {level} not in field levels {self.min_level}..{self.max_level}") from None

    def __contains__(self, level: int) -> bool:
        return level in self.lines

    def values(self, level: int) -> np.ndarray:
        return self[level].values

    def require_levels(self, low: int, high: int) -> None:
        missing = [r for r in range(low, high + 1) if r not in self.lines]
        if missing:
            raise DomainError(f"field is missing levels {missing[:5]}{'...' if len(missing) > 5 else ''}")


# ═══════════════════════════════════════════════════════════════════════════════
# SEEDING
# ═══════════════════════════════════════════════════════════════════════════════

def level_key(level: int) -> int:
    """Map an integer level onto the naturals: 0, -1, 1, -2, ... -> 0, 1, 2, 3, ..."""
    return 2 * level if level >= 0 else -2 * level - 1


def derive_stream(seed: int, tag: int, level: int = 0, replica: int = 0) -> np.random.SeedSequence:
    """Stream handle for (seed, tag, level, replica); see module docstring."""
    if replica < 0:
        raise ConfigurationError(f"replica index must be nonnegative, got {replica}")
    return np.random.SeedSequence(
        entropy=int(seed) & SEED_MASK,
        spawn_key=(int(tag), level_key(int(level)), int(replica)),
    )


def _side_rng(stream: np.random.SeedSequence, side: int) -> np.random.Generator:
    child = np.random.SeedSequence(entropy=stream.entropy, spawn_key=tuple(stream.spawn_key) + (side,))
    return np.random.default_rng(child)


# ═══════════════════════════════════════════════════════════════════════════════
# SAMPLING
# ═══════════════════════════════════════════════════════════════════════════════

def sample_brownian(
    spec: GridSpec,
    drift: float = 0.0,
    stream: Optional[np.random.SeedSequence] = None,
    scale: float = 1.0,
) -> GridFunction:
    """
    Two-sided Brownian motion with drift on the grid, anchored at 0.

    Args:
        spec: Grid to sample on
        drift: Drift per unit time
        stream: Stream handle from derive_stream (fresh OS entropy if None)
        scale: Diffusion coefficient; increments are N(drift*step, scale^2*step)

    Returns:
        GridFunction with value exactly 0.0 at time 0
    """
    if stream is None:
        stream = np.random.SeedSequence()
    k0, n = spec.zero_index, spec.n_points
    mean = drift * spec.step
    sd = scale * np.sqrt(spec.step)

    right = _side_rng(stream, 0).normal(mean, sd, size=n - 1 - k0)
    # left[i] is the increment over [t_{k0-i-1}, t_{k0-i}]
    left = _side_rng(stream, 1).normal(mean, sd, size=k0)

    values = np.empty(n)
    values[k0] = 0.0
    values[k0 + 1:] = np.cumsum(right)
    values[:k0] = (-np.cumsum(left))[::-1]
    return GridFunction(spec, values)


def sample_field(
    spec: GridSpec,
    levels: Iterable[int],
    seed: int,
    drift: float = 0.0,
    replica: int = 0,
) -> BrownianField:
    """One independent Brownian line per level, reproducible from (seed, level, replica)."""
    levels = list(levels)
    if not levels:
        raise ConfigurationError("sample_field needs a nonempty level range")
    lines = {
        r: sample_brownian(spec, drift, derive_stream(seed, STREAM_FIELD, r, replica))
        for r in levels
    }
    return BrownianField(spec, lines, drift=drift, seed=seed, replica=replica)


def restrict_field(bfield: BrownianField, t_max: float) -> BrownianField:
    """The field cut at t_max."""
    spec = bfield.spec.truncate(t_max)
    lines = {r: f.restrict(spec) for r, f in bfield.lines.items()}
    return BrownianField(spec, lines, drift=bfield.drift, seed=bfield.seed, replica=bfield.replica)


def linear_function(spec: GridSpec, slope: float) -> GridFunction:
    return GridFunction(spec, slope * spec.times)


# ═══════════════════════════════════════════════════════════════════════════════
# ELEMENTARY OPERATIONS
# ═══════════════════════════════════════════════════════════════════════════════

def increment(f: GridFunction, s: float, t: float) -> float:
    """f(s, t) = f(t) - f(s)."""
    return float(f.values[f.spec.index_of(t)] - f.values[f.spec.index_of(s)])


def reflect(f: GridFunction) -> GridFunction:
    """The reflected function t -> -f(-t); needs a window symmetric about 0."""
    if not f.spec.is_symmetric:
        raise DomainError(
            f"reflection needs a symmetric window, got [{f.spec.t_min}, {f.spec.t_max}]"
        )
    return GridFunction(f.spec, 0.0 - f.values[::-1])


# ═══════════════════════════════════════════════════════════════════════════════
# PERSISTENCE
# ═══════════════════════════════════════════════════════════════════════════════

def write_grid_function(f: GridFunction, path: PathLike) -> Path:
    """Write `t,value` CSV with 12 significant digits."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame({"t": f.spec.times, "value": f.values}).to_csv(
        path, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n"
    )
    return path


def read_grid_function(path: PathLike, spec: Optional[GridSpec] = None) -> GridFunction:
    df = pd.read_csv(path)
    if list(df.columns) != ["t", "value"]:
        raise DomainError(f"{path}: expected header t,value, got {list(df.columns)}")
    if spec is None:
        t = df["t"].to_numpy()
        step = float(f"{(t[-1] - t[0]) / (len(t) - 1):.{CSV_SIGNIFICANT_DIGITS}g}")
        spec = GridSpec(float(t[0]), float(t[-1]), step)
    return GridFunction(spec, df["value"].to_numpy())


def write_manifest(path: PathLike, entries: Mapping[str, object]) -> Path:
    """Plain-text `key: value` manifest."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"{key}: {value}" for key, value in entries.items()]
    path.write_text("\n".join(lines) + "\n")
    return path


def read_manifest(path: PathLike) -> Dict[str, str]:
    entries = {}
    for raw in Path(path).read_text().splitlines():
        if not raw.strip() or raw.lstrip().startswith("#"):
            continue
        key, sep, value = raw.partition(":")
        if not sep:
            raise DomainError(f"{path}: malformed manifest line {raw!r}")
        entries[key.strip()] = value.strip()
    return entries


def grid_manifest(spec: GridSpec) -> Dict[str, object]:
    return {"t_min": repr(spec.t_min), "t_max": repr(spec.t_max), "step": repr(spec.step)}


def grid_from_manifest(entries: Mapping[str, str]) -> GridSpec:
    return GridSpec(float(entries["t_min"]), float(entries["t_max"]), float(entries["step"]))


def write_field(bfield: BrownianField, directory: PathLike) -> Path:
    """One `B_<level>.csv` per level plus `field.manifest`."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for r in bfield.levels:
        write_grid_function(bfield[r], directory / f"B_{r}.csv")
    write_manifest(
        directory / FIELD_MANIFEST_NAME,
        {
            **grid_manifest(bfield.spec),
            "seed": bfield.seed,
            "replica": bfield.replica,
            "drift": repr(bfield.drift),
            "levels": ",".join(str(r) for r in bfield.levels),
        },
    )
    logger.debug("wrote field with %d levels to %s", len(bfield.levels), directory)
    return directory


def read_field(directory: PathLike) -> BrownianField:
    directory = Path(directory)
    entries = read_manifest(directory / FIELD_MANIFEST_NAME)
    spec = grid_from_manifest(entries)
    levels = [int(r) for r in entries["levels"].split(",")]
    lines = {r: read_grid_function(directory / f"B_{r}.csv", spec) for r in levels}
    seed = None if entries.get("seed") in (None, "None") else int(entries["seed"])
    return BrownianField(
        spec,
        lines,
        drift=float(entries.get("drift", 0.0)),
        seed=seed,
        replica=int(entries.get("replica", 0)),
    )
