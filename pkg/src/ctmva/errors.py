"""Exception hierarchy.

Every error carries an ``exit_code`` so the command-line front end can map
library failures onto its documented exit statuses (2 = data, 3 = numeric).
"""


class CTMVAError(Exception):
    """Base class for all library errors."""

    exit_code = 2


class DomainError(CTMVAError, ValueError):
    """An argument lies outside the domain where an operation is defined."""


class DimensionError(CTMVAError, ValueError):
    """A basis dimension or array shape is not acceptable."""


class ParityError(DimensionError):
    """A Fourier basis was requested with an even number of functions."""


class UnsupportedBasisError(CTMVAError, ValueError):
    """The operation is not available for this kind of basis."""


class BasisMismatchError(CTMVAError, ValueError):
    """Two datasets that must share a basis do not."""


class PartitionError(CTMVAError, ValueError):
    """A partition has gaps, overlaps, or empty parts."""


class SchemaError(CTMVAError, ValueError):
    """An input file does not have the expected columns."""


class InputError(CTMVAError, ValueError):
    """Input contains no usable data."""


class NumericError(CTMVAError, ArithmeticError):
    """A computation produced non-finite or otherwise unusable numbers."""

    exit_code = 3


class RankError(NumericError):
    """A matrix that must be nonsingular is (numerically) singular."""


class DegenerateVarianceError(NumericError):
    """A curve has zero continuous-time variance where positive variance is required."""


class DegenerateCentersError(NumericError):
    """Two or more cluster centers coincide."""


class CovarianceError(NumericError):
    """A covariance matrix is not symmetric positive semidefinite."""
