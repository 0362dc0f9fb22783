"""Exception hierarchy shared across the pipeline.

``InputError`` subclasses signal bad user data (CLI exit 1); anything else
escaping the library is treated as an internal fault (CLI exit 2).
"""

from __future__ import annotations


class EcorouteError(Exception):
    """Base class for all errors raised by this package."""


class InputError(EcorouteError):
    """Invalid or unusable input data."""


class EmptyInputError(InputError):
    """A stream or list that must be non-empty (or hold >= 2 samples) is not."""


class InsufficientOverlapError(InputError):
    """Series too short for the requested alignment search window."""


class DegenerateSignalError(InputError):
    """A zero-variance series cannot be correlated."""


class NoOverlapError(InputError):
    """Streams share too little common time span to fuse."""


class DegenerateDenominatorError(InputError):
    """Sum of reference and evaluated series is zero."""


class NoMatchError(InputError):
    """No road link within the matching search radius."""


class DegenerateDistanceError(InputError):
    """Zero distance traversed where positive distance is required."""


class UnknownLinkError(InputError):
    """A snippet references a link id absent from the network."""


class UnderdeterminedFitError(InputError):
    """Fewer distinct speed-bin centers than polynomial coefficients."""


class SingularFitError(InputError):
    """Rank-deficient normal equations in the polynomial fit."""


class UncoveredBinError(InputError):
    """No fitted curve for the requested road class and grade bin."""


class InvalidMeasurementError(InputError):
    """Measured trip energy must be strictly positive."""


class SchemaViolationError(InputError):
    """Network or plan file violates its schema; message names the record."""


class InvalidSnapshotError(InputError):
    """Traffic snapshot with non-positive speeds; callers keep the previous one."""


class UnreachableError(InputError):
    """Destination not reachable from the origin."""


class UnsupportedFeatureError(InputError):
    """Route preference accepted by the request schema but not implemented."""
