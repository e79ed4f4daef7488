"""Exception hierarchy shared by all fairtest modules."""


class FairTestError(Exception):
    """Base class for every error raised by fairtest."""


class SchemaError(FairTestError):
    """A declared column or attribute schema does not match the data."""


class EmptyDatasetError(FairTestError, ValueError):
    """The dataset has no rows."""


class DomainError(FairTestError, ValueError):
    """A value lies outside its declared domain."""


class DegenerateGroupError(FairTestError):
    """A group used as a denominator has (numerically) zero probability."""


class IllConditionedKernelError(FairTestError):
    """The RKHS norm of a kernel classifier is not strictly positive."""


class NoTargetError(FairTestError):
    """No finite-cost point with the opposite label exists."""


class NumericalFailureError(FairTestError):
    """The LP solver failed to terminate within its iteration budget."""


class UnboundedDualError(FairTestError):
    """The dual objective grows without bound (primal infeasible)."""


class DegenerateBoundaryError(FairTestError):
    """No kernel mass near the decision boundary; S cannot be estimated."""


class DegenerateLawError(FairTestError):
    """The estimated limit law is singular."""


class UnsupportedDimensionError(FairTestError):
    """The requested operation does not support this many constraints."""


class InsufficientDataError(FairTestError):
    """Too few observations in a conditioning cell."""
