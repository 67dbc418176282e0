"""Error contracts shared across the package.

Every error below marks a violated precondition, never a recoverable
condition that callers are expected to silence.
"""

from __future__ import annotations

__all__ = [
    "AllZeroWeights",
    "BudgetTooLarge",
    "DegenerateFactor",
    "EmptySampleSet",
    "InvalidAlpha",
    "InvalidBeta",
    "InvariantError",
    "LengthMismatch",
    "NoProposals",
    "SchemaError",
    "SupportMismatch",
    "TimeOutOfRange",
    "UnseenContext",
    "ZeroProbabilityEvent",
    "ZeroRejectionMass",
]


class AllZeroWeights(ValueError):
    """Normalization was asked to rescale a weight vector with zero total mass."""


class InvalidBeta(ValueError):
    """A corruption rate fell outside [0, 1]."""


class TimeOutOfRange(ValueError):
    """A timestep index fell outside the schedule's valid range."""


class ZeroProbabilityEvent(ValueError):
    """A conditional was requested for an event the model assigns zero mass."""


class LengthMismatch(ValueError):
    """Two sequences that must share a length do not."""


class DegenerateFactor(ZeroProbabilityEvent):
    """A correction denominator vanishes where the exact posterior is positive."""


class ZeroRejectionMass(ValueError):
    """Residual distribution requested for identical draft and target laws."""


class UnseenContext(LookupError):
    """An unsmoothed tabular predictor was queried at a context it never saw."""


class SupportMismatch(ValueError):
    """Two distributions that must share a support do not."""


class EmptySampleSet(ValueError):
    """An empirical estimate was requested from zero samples."""


class InvalidAlpha(ValueError):
    """An acceptance rate fell outside [0, 1]."""


class NoProposals(ValueError):
    """An acceptance or cost ratio was requested from traces with no proposals."""


class BudgetTooLarge(ValueError):
    """A selection budget exceeds the number of available candidates."""


class SchemaError(ValueError):
    """A configuration document is structurally invalid."""


class InvariantError(ValueError):
    """A configuration document is well-formed but violates a field invariant."""
