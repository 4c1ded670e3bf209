"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes: validation-type failures
exit with 2, cache integrity failures with 3.
"""


class FluxmapError(Exception):
    """Base class for all package errors."""


class ValidationError(FluxmapError, ValueError):
    """Malformed scenes, specs, or input files."""


class DomainError(FluxmapError, ValueError):
    """Numeric argument outside the mathematical domain of an operation."""


class ConfigurationError(FluxmapError, ValueError):
    """Inconsistent sizes, layouts, or schedule/grid mismatches."""


class CacheMissError(FluxmapError, KeyError):
    """Requested cache key is not present."""


class IntegrityError(FluxmapError, RuntimeError):
    """Stored cache record does not match its own metadata."""
