"""Custom Exceptions."""

from __future__ import annotations


class SimMTMException(Exception):
    """Custom Exception for all simmtm exceptions."""

    def __init__(self, *args: object) -> None:
        super().__init__(*args)


class DimensionError(SimMTMException):
    """Operand shapes do not agree."""


class ContractError(SimMTMException):
    """An operation was called outside of its preconditions."""


class NonFiniteError(SimMTMException):
    """A NaN or Inf value was created or supplied."""


class ConfigError(SimMTMException):
    """A configuration value is unknown or invalid."""


class UsageError(SimMTMException):
    """A command-line argument is not recognized."""


class IngestionError(SimMTMException):
    """A CSV cell could not be parsed."""

    def __init__(self, message: str, row: int | None = None, column: int | None = None):
        super().__init__(message)
        self.row = row
        self.column = column


class EmptyInputError(SimMTMException):
    """An input file held no data rows."""


class InsufficientDataError(SimMTMException):
    """Not enough time steps for the requested windows."""


class DegenerateInputError(SimMTMException):
    """Input carries no variance where variance is required."""


class DivergenceError(SimMTMException):
    """Training produced a non-finite loss."""

    def __init__(self, message: str, epoch: int, batch: int, term: str) -> None:
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch
        self.term = term


class CheckpointError(SimMTMException):
    """Base for checkpoint persistence failures."""


class VersionMismatchError(CheckpointError):
    """Checkpoint written by an unsupported format version."""


class ShapeMismatchError(CheckpointError):
    """A stored tensor does not fit the model built from the stored config."""

    def __init__(self, message: str, tensor: str) -> None:
        super().__init__(message)
        self.tensor = tensor


class IntegrityError(CheckpointError):
    """Checkpoint is truncated or corrupt."""
