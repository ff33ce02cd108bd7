"""Exception types shared across the package.

Two families: :class:`DataError` for malformed or inadmissible input
(caught before any estimation runs) and :class:`EstimationError` for
failures inside an estimator (rank problems, degenerate variation).
The CLI maps the former to exit code 2 and the latter to exit code 3.
"""

from __future__ import annotations

__all__ = [
    "IfeattError",
    "DataError",
    "EstimationError",
    "NonFiniteInput",
    "DimensionMismatch",
    "NonSymmetric",
    "RankDeficient",
    "OmegaSingular",
    "SpecMismatch",
    "BadPeriod",
    "DegeneratePi",
    "ZeroDenominator",
    "MissingWCell",
    "EmptyPeriod",
    "EmptyCell",
    "NeedsFourPeriods",
    "TooManyFailures",
    "NoPrePeriods",
    "UnbalancedPanel",
    "NonConstantCovariate",
    "BadPeriodLabels",
    "GroupTooSmall",
]


class IfeattError(Exception):
    """Base class for all package errors."""


class DataError(IfeattError):
    """Input data or configuration violates a documented precondition."""


class EstimationError(IfeattError):
    """An estimator could not produce a valid result."""


# ---------------------------------------------------------------- #
# linear GMM engine
# ---------------------------------------------------------------- #

class NonFiniteInput(DataError):
    """NaN or Inf found where finite values are required."""


class DimensionMismatch(DataError):
    """Array shapes are inconsistent with each other."""


class NonSymmetric(DataError):
    """A matrix required to be symmetric is not."""


class RankDeficient(EstimationError):
    """The instrument-regressor cross-product lost full column rank.

    Signals a relevance failure: the excluded covariates do not move
    the short difference enough to identify the factor path.
    """


class OmegaSingular(EstimationError):
    """Moment covariance too degenerate to re-weight an overidentified fit."""


# ---------------------------------------------------------------- #
# panel / RC model construction
# ---------------------------------------------------------------- #

class SpecMismatch(DataError):
    """Covariate role assignment inconsistent with the dataset."""


class BadPeriod(DataError):
    """Period index outside the admissible range for the operation."""


class DegeneratePi(EstimationError):
    """Estimated treated-group share is 0 or 1."""


class ZeroDenominator(EstimationError):
    """Closed-form ratio denominator is numerically zero (relevance failure)."""


class MissingWCell(DataError):
    """A required covariate cell has no untreated observations."""


class EmptyPeriod(DataError):
    """A period between 1 and the last has no rows."""


class EmptyCell(EstimationError):
    """A (group, period) cell required by the estimator has no rows."""


class NeedsFourPeriods(DataError):
    """The other-period-instrument estimator requires at least 4 periods."""


# ---------------------------------------------------------------- #
# inference
# ---------------------------------------------------------------- #

class TooManyFailures(EstimationError):
    """More than the tolerated share of bootstrap replications failed."""


class NoPrePeriods(DataError):
    """Pre-treatment test requested but the design has no pre-periods."""


# ---------------------------------------------------------------- #
# ingestion
# ---------------------------------------------------------------- #

class UnbalancedPanel(DataError):
    """Panel rows do not form a complete unit-by-period grid."""

    def __init__(self, ids, message: str | None = None):
        self.ids = list(ids)
        if message is None:
            message = f"unbalanced panel; offending unit ids: {self.ids}"
        super().__init__(message)


class NonConstantCovariate(DataError):
    """A column that must be constant within unit varies over periods."""

    def __init__(self, unit, column, message: str | None = None):
        self.unit = unit
        self.column = column
        if message is None:
            message = f"column {column!r} varies within unit {unit!r}"
        super().__init__(message)


class BadPeriodLabels(DataError):
    """Period labels are not consecutive integers."""


class GroupTooSmall(DataError):
    """A treatment group has fewer treated units than the configured minimum."""
