"""Shared exception types, grouped by the failure they signal.

The command-line layer maps these onto process exit codes, so library code
should raise the most specific type that applies rather than bare
``ValueError``/``RuntimeError`` for anything a user can trigger through
configuration or data files.
"""

from __future__ import annotations


class ShockPinnError(Exception):
    """Base class for all package-specific failures."""


class ConfigurationError(ShockPinnError):
    """A config value, network shape, or CLI argument is invalid."""


class DomainError(ShockPinnError):
    """A point or region lies outside the geometry it was used with."""


class DivergenceError(ShockPinnError):
    """Training produced a non-finite loss or parameters."""


class AnalysisError(ShockPinnError):
    """Post-processing could not be completed (missing fields, bad grids)."""
