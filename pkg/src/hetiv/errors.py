"""Exception hierarchy.

Every exception carries a ``reason`` code that the CLI copies verbatim into
reports, so callers can branch on a stable string rather than a class name.
"""

from __future__ import annotations

__all__ = [
    "HetivError",
    "NumericalError",
    "RankDeficient",
    "Separation",
    "NoConvergence",
    "EmptySubsample",
    "NotPositiveDefinite",
    "IllConditioned",
    "DegenerateDenominator",
    "EmptyControlArm",
    "DegenerateVariance",
    "NonIdentified",
    "ZeroDenominator",
    "NoCompliers",
    "DataError",
    "InvalidDataset",
    "InvalidDgp",
    "MissingColumn",
    "NonBinaryColumn",
    "ParseError",
    "SchemaError",
]


class HetivError(Exception):
    reason = "Error"


class NumericalError(HetivError):
    """Base for failures of a well-posed computation on particular inputs."""

    reason = "NumericalError"


class RankDeficient(NumericalError):
    reason = "RankDeficient"


class Separation(NumericalError):
    reason = "Separation"


class NoConvergence(NumericalError):
    reason = "NoConvergence"


class EmptySubsample(NumericalError):
    reason = "EmptySubsample"


class NotPositiveDefinite(NumericalError):
    reason = "NotPositiveDefinite"


class IllConditioned(NumericalError):
    reason = "IllConditioned"


class DegenerateDenominator(NumericalError):
    reason = "DegenerateDenominator"


class EmptyControlArm(NumericalError):
    reason = "EmptyControlArm"


class DegenerateVariance(NumericalError):
    reason = "DegenerateVariance"


class NonIdentified(NumericalError):
    reason = "NonIdentified"


class ZeroDenominator(NumericalError):
    reason = "ZeroDenominator"


class NoCompliers(NumericalError):
    reason = "NoCompliers"


class DataError(HetivError, ValueError):
    """Input data violates a documented contract."""

    reason = "DataError"


class InvalidDataset(DataError):
    reason = "InvalidDataset"


class InvalidDgp(DataError):
    reason = "InvalidDgp"


class MissingColumn(DataError):
    reason = "MissingColumn"


class NonBinaryColumn(DataError):
    reason = "NonBinaryColumn"


class ParseError(DataError):
    reason = "ParseError"


class SchemaError(DataError):
    reason = "SchemaError"
