"""
Exception types shared across the simulator.

Management commands map them to exit codes: configuration and domain errors
exit with 1, oracle mismatches with 2.
"""

# Django Imports
from django.core.exceptions import ValidationError


class ConfigurationError(ValidationError):
    """An experiment, link or probability configuration is invalid."""


class DomainError(ValueError):
    """An operation was called outside its mathematical domain."""


class OracleMismatch(AssertionError):
    """Two independent computations of the same quantity disagree, or a
    proven bound was violated."""
