"""Shared exception types.

The CLI maps these to exit codes: configuration and format problems exit 2,
internal invariant violations exit 3.
"""

from __future__ import annotations


class SimulatorError(Exception):
    """Base class for package errors."""


class ConfigError(SimulatorError):
    """A configuration value or file is invalid or inconsistent."""


class FormatError(ConfigError):
    """An input file does not match its documented schema."""


class BudgetError(SimulatorError):
    """A coverage vector or plan exceeds its budget constraint."""


class InfeasibleError(SimulatorError):
    """The requested computation has no feasible answer (bad budget, empty grid, ...)."""


class InvariantViolation(SimulatorError):
    """An internal consistency check failed; indicates a bug, not bad input."""
