"""Exception hierarchy shared by every BLPP Lab module."""


class BlppError(Exception):
    """Base class for all library errors."""


class ConfigurationError(BlppError, ValueError):
    """Invalid grid, parameter ordering or sampler depth."""


class DomainError(BlppError, ValueError):
    """Input outside the domain of an operation (off-grid time, bad path, mismatched grids)."""


class WindowError(DomainError):
    """A ray or terminal point does not fit inside the simulation window."""


class InsufficientDataError(BlppError, ValueError):
    """Too few samples or levels to compute a statistic."""


class UsageError(ConfigurationError):
    """Command-line misuse: unknown experiment, malformed flag or config file."""
