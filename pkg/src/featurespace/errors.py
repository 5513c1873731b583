"""Exception hierarchy shared across the package."""

from __future__ import annotations


class FeatureSpaceError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(FeatureSpaceError):
    """Invalid input: malformed documents, broken invariants, bad configs."""


class KernelError(FeatureSpaceError):
    """A transform kernel failed at runtime on concrete data.

    ``row_index`` and ``step_number`` are attached where known so the CLI can
    point at the offending cell.
    """

    def __init__(self, message: str, row_index: int | None = None,
                 step_number: int | None = None):
        super().__init__(message)
        self.row_index = row_index
        self.step_number = step_number


class MappingError(ValidationError):
    """A contribution vector cannot be mapped across the given pipeline."""
