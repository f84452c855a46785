from pathlib import Path

# -----------------------------------------------------------------------------
# Filesystem Layout
# -----------------------------------------------------------------------------
SRC_DIR = Path(__file__).parent
PROJECT_ROOT = SRC_DIR.parent
RESULTS_DIR = PROJECT_ROOT / "results"

CONFIG_ECHO_NAME = "config.echo"
SUMMARY_NAME = "summary.csv"
REPORT_NAME = "report.txt"
FIELD_MANIFEST_NAME = "field.manifest"
STACK_MANIFEST_NAME = "stack.manifest"

# -----------------------------------------------------------------------------
# Grid Defaults
# -----------------------------------------------------------------------------
DEFAULT_T_MIN = -20.0
DEFAULT_T_MAX = 20.0
DEFAULT_STEP = 0.01
MIN_GRID_POINTS = 3

# Tolerance used when deciding whether a time lies on the grid
GRID_SNAP_TOL = 1e-9

# -----------------------------------------------------------------------------
# Seeding
# -----------------------------------------------------------------------------
SEED_ENV_VAR = "BLPP_SEED"
DEFAULT_SEED = 20240101
SEED_MASK = (1 << 64) - 1

# Stream tags, first component of every spawn key
STREAM_FIELD = 0  # environment lines B_r
STREAM_BUSEMANN = 1  # top seed line h_N
STREAM_PAIR = 2  # independent queue pairs
STREAM_AUX = 3  # closed-form law oracles

# -----------------------------------------------------------------------------
# Numerical Tolerances
# -----------------------------------------------------------------------------
EXACT_TOL = 0.0  # identical floats, identical order
SUM_ORDER_TOL = 1e-9  # same quantity, different summation order
# Queue inversion: exact to this at running-max records, elsewhere on top of the crossing gap
INVERSION_TOL = 1e-9
CDF_CLAMP_TOL = 1e-12
PROBABILITY_CONSISTENCY_TOL = 1e-12

# -----------------------------------------------------------------------------
# Statistical Thresholds
# -----------------------------------------------------------------------------
KS_THRESHOLD = 0.02
KS_CROSSCHECK_THRESHOLD = 0.05
CORRELATION_K = 4.0  # |rho| < K / sqrt(n)
MOMENT_K_SIGMA = 4.0
MIN_SAMPLES = 100
DISTANCE_CORRELATION_K = 4.5  # dcor < K / sqrt(n) on one Burke block pair
DISTANCE_CORRELATION_MAX_SAMPLES = 2000
KS_CRITICAL = 1.63  # 1% critical value of sqrt(n) * KS; thresholds never drop below it
SHAPE_MEAN_TOL = 0.15
MIN_COALESCED_FRACTION = 0.9
DIRECTION_TOLERANCE = 0.3  # |slope / theta - 1|
MIN_DIRECTED_FRACTION = 0.9
MIDPOINT_BATCHES = 5  # seed batches behind the median hit curve
MIDPOINT_RISE_SIGMAS = 2.0  # allowed rise between consecutive n, in pooled standard errors
MIN_BRACKETED_FRACTION = 0.8

# -----------------------------------------------------------------------------
# Queue Drift Proxy
# -----------------------------------------------------------------------------
# B - Z must drop by this many sample standard deviations across the window
DRIFT_PROXY_SIGMAS = 5.0

# Fraction of the grid used as interior window for inversion checks
INTERIOR_FRACTION = 0.5

# -----------------------------------------------------------------------------
# Busemann Sampler
# -----------------------------------------------------------------------------
SEED_DEPTH_MIN = 10
SEED_DEPTH_FACTOR = 4.0  # depth >= ceil(FACTOR / theta)
MIN_DIRECTION_LEVELS = 20

# -----------------------------------------------------------------------------
# Output Format
# -----------------------------------------------------------------------------
CSV_SIGNIFICANT_DIGITS = 12
CSV_FLOAT_FORMAT = f"%.{CSV_SIGNIFICANT_DIGITS}g"
LOG_FORMAT = "%(asctime)s - %(levelname)s - %(message)s"

# -----------------------------------------------------------------------------
# Experiment Defaults
# -----------------------------------------------------------------------------
DEFAULT_THETA = 1.0
DEFAULT_LAMBDA = 1.0
DEFAULT_LEVELS = 5
DEFAULT_REPLICAS = 1000
DEFAULT_PARALLEL = 0  # 0: one worker per available core

# Finer grid for the closed-form law experiments, where grid bias enters the KS distance
FINE_STEP = 0.001

# Finite-n depth of the limit estimator when cross-checking the recursion sampler
CROSSCHECK_N_LEVELS = 40

# Per-replica rows file written next to summary.csv
REPLICAS_NAME = "replicas.csv"

# -----------------------------------------------------------------------------
# Grid Maximum Correction
# -----------------------------------------------------------------------------
# Grid maxima of a Brownian path with variance rate v undershoot the continuous
# maximum by about GRID_MAX_SHIFT * sqrt(v * step); -zeta(1/2) / sqrt(2 pi)
GRID_MAX_SHIFT = 0.5825971579390107
