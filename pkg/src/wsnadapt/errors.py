"""Exception types shared across the package."""


class WsnAdaptError(Exception):
    """Base class for all package errors."""


class NotPositiveDefinite(WsnAdaptError):
    """A matrix required to be SPD has a (numerically) non-positive pivot."""


class NoConvergence(WsnAdaptError):
    """An iterative routine exhausted its iteration budget."""


class StepSizeOutOfRange(WsnAdaptError):
    """Step size violates the stability bound 0 < mu <= 2/lambda_max."""


class DimensionMismatch(WsnAdaptError):
    """Operands have incompatible shapes."""


class InvalidTheta(WsnAdaptError):
    """Range parameter of the correlation model must be positive."""


class UnknownNode(WsnAdaptError):
    """A node id was referenced that does not exist in the layout/stream."""


class InsufficientHistory(WsnAdaptError):
    """Fewer weight snapshots than needed to estimate a variance."""


class TargetUnreachable(WsnAdaptError):
    """Requested accuracy target exceeds what all nodes together achieve."""


class ProtocolViolation(WsnAdaptError):
    """A message arrived in a node phase that cannot accept it."""


class SchemaError(WsnAdaptError):
    """Config file failed validation; message carries a JSON-pointer path."""

    def __init__(self, pointer: str, reason: str):
        self.pointer = pointer
        self.reason = reason
        super().__init__(f"{pointer}: {reason}")


class CsvFormatError(WsnAdaptError):
    """Malformed row in an ingested CSV; message carries the line number."""
