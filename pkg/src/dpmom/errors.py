"""Exception hierarchy shared by every dpmom module."""

__all__ = [
    'AssumptionViolationError',
    'ContractViolationError',
    'DataError',
    'DataParseError',
    'DatasetUnavailableError',
    'DegenerateDataError',
    'DpMomError',
    'EmptyDataError',
    'MergeImpossibleError',
    'NoEvidenceError',
    'NumericFaultError',
    'SpawnOverflowError',
]


class DpMomError(Exception):
    """Base exception for dpmom errors."""


class ContractViolationError(DpMomError, ValueError):
    """Raised when an argument breaks an operation's precondition (shape, range, emptiness)."""


class AssumptionViolationError(ContractViolationError):
    """Raised when a probe is asked to run outside the contamination regime it is defined for."""


class SpawnOverflowError(DpMomError):
    """Raised when spawning would exceed the cluster guard; a larger penalty is needed."""

    def __init__(self, limit: int, lambda_: float) -> None:
        super().__init__(
            f'spawning would exceed max_clusters={limit} at lambda={lambda_:g}; '
            f'increase lambda or raise max_clusters'
        )
        self.limit = limit
        self.lambda_ = lambda_


class MergeImpossibleError(DpMomError):
    """Raised when no cluster is large enough to absorb the small ones."""


class DegenerateDataError(DpMomError):
    """Raised when every observation coincides, so no distance scale exists."""


class NumericFaultError(DpMomError, ArithmeticError):
    """Raised when the optimizer produces a non-finite gradient or centroid."""


class NoEvidenceError(DpMomError):
    """Raised when a paired test has no non-zero difference to rank."""


class DataError(DpMomError):
    """Base class for problems with input files and dataset descriptions."""


class EmptyDataError(DataError):
    """Raised when an input file holds no observations."""


class DataParseError(DataError):
    """Raised when an input file is ragged or holds non-numeric feature cells."""


class DatasetUnavailableError(DataError):
    """Raised when a manifest dataset is missing locally or fails its checksum."""
