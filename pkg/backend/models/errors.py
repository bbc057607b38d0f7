"""
Exception hierarchy for the spectral toolkit
Every error carries a stable error code that the CLI maps onto exit codes
"""

from typing import Any, Dict, Optional, Tuple


class SpectralError(Exception):
    """Base class for all toolkit errors"""

    error_code = "INTERNAL_ERROR"

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.details = details or {}


class DomainError(SpectralError, ValueError):
    """Argument outside the mathematical domain (alpha <= 0, s < 0, ...)"""

    error_code = "DOMAIN_ERROR"


class UsageError(SpectralError, ValueError):
    """Operation called on the wrong kind of system or beyond its cost guard"""

    error_code = "USAGE_ERROR"


class PreconditionError(SpectralError, ValueError):
    """Operation precondition violated (e.g. bracket without sign change)"""

    error_code = "PRECONDITION_ERROR"


class InsufficientDataError(SpectralError, ValueError):
    """Not enough samples or levels for the requested statistic"""

    error_code = "INSUFFICIENT_DATA"


class ConfigError(SpectralError, ValueError):
    """Invalid run configuration"""

    error_code = "CONFIG_ERROR"


class CompletenessError(SpectralError, RuntimeError):
    """Root counting check still failing after all rescans"""

    error_code = "COMPLETENESS_ERROR"

    def __init__(
        self,
        message: str,
        suspect_interval: Tuple[float, float],
        details: Optional[Dict[str, Any]] = None,
    ):
        super().__init__(message, details)
        self.suspect_interval = suspect_interval
        self.details.setdefault("suspect_interval", list(suspect_interval))


class GenerationError(SpectralError, RuntimeError):
    """Reference table failed its self-check"""

    error_code = "SELF_CHECK_FAILED"


class StorageError(SpectralError, OSError):
    """Output or input file could not be read or written"""

    error_code = "IO_ERROR"
