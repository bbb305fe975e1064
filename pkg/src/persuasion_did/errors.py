"""Exception types carrying a stable error code.

Every failure raised by the library is a :class:`PersuasionError` with a
``code`` drawn from the constants below, a human-readable message and a
``context`` mapping (row numbers, offending values, ...). The CLI maps
:class:`ValidationError` to exit status 1 and :class:`EstimationError` to 2.
"""

from __future__ import annotations

from typing import Any

# data validation
MISSING_COLUMN = "MISSING_COLUMN"
NON_BINARY_VALUE = "NON_BINARY_VALUE"
INVALID_ADOPTION_TIME = "INVALID_ADOPTION_TIME"
EMPTY_ARM = "EMPTY_ARM"
NO_NEVER_TREATED = "NO_NEVER_TREATED"
TOO_MANY_LEVELS = "TOO_MANY_LEVELS"
SHAPE_MISMATCH = "SHAPE_MISMATCH"

# estimation
SEPARATION = "SEPARATION"
INSUFFICIENT_ARM = "INSUFFICIENT_ARM"
DEGENERATE_DENOMINATOR = "DEGENERATE_DENOMINATOR"
WEAK_DENOMINATOR = "WEAK_DENOMINATOR"
RANK_DEFICIENT_X = "RANK_DEFICIENT_X"
LINK_DOMAIN = "LINK_DOMAIN"
DOMAIN = "DOMAIN"
NEGATIVE_ATT = "NEGATIVE_ATT"
EMPTY_GROUP = "EMPTY_GROUP"
HORIZON_OUT_OF_RANGE = "HORIZON_OUT_OF_RANGE"
NO_ELIGIBLE_GROUPS = "NO_ELIGIBLE_GROUPS"
SINGULAR_SIGMA = "SINGULAR_SIGMA"
INVALID_ARGUMENT = "INVALID_ARGUMENT"


class PersuasionError(Exception):
    def __init__(self, code: str, message: str, **context: Any):
        super().__init__(f"{code}: {message}")
        self.code = code
        self.message = message
        self.context = context

    def to_dict(self) -> dict[str, Any]:
        return {"code": self.code, "message": self.message, "context": self.context}


class ValidationError(PersuasionError):
    """Input data does not satisfy the panel contracts."""


class EstimationError(PersuasionError):
    """Estimation is impossible or numerically meaningless on valid data."""
