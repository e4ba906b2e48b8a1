"""Exception types shared across the tuner.

The CLI maps these onto exit codes: input problems -> 2, legitimately
empty results -> 1, broken internal invariants -> 3.
"""

from __future__ import annotations


class TunerError(Exception):
    """Base class for all tuner errors."""


class InputError(TunerError):
    """Malformed or invalid user input (documents, configs, flags).

    `field` names the offending field when one can be identified.
    """

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


class CapacityError(TunerError):
    """No tile candidate fits the hardware (degenerate descriptor)."""


class EmptyResultError(TunerError):
    """A pipeline stage produced an empty set even after relaxation.

    `constraint` names the tightest constraint that emptied the set,
    `hint` suggests what to relax.
    """

    def __init__(self, message: str, constraint: str | None = None, hint: str | None = None):
        super().__init__(message)
        self.constraint = constraint
        self.hint = hint


class MissingMetricsError(TunerError):
    """An operation needed cached candidate metrics that were never computed."""


class InternalError(TunerError):
    """An internal invariant was violated; indicates a bug, not bad input."""
