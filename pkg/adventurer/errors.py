"""Exception hierarchy shared by every adventurer module."""


class AdventurerError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(AdventurerError, ValueError):
    """Raised when tensor extents do not fit an operation."""


class ContractError(AdventurerError, ValueError):
    """Raised when a precondition of an operation is violated."""


class ConfigError(AdventurerError, ValueError):
    """Raised for invalid or inconsistent model/run configuration."""


class CheckpointError(AdventurerError):
    """Base class for checkpoint decoding failures."""


class CheckpointFormatError(CheckpointError):
    """The file does not start with the checkpoint magic bytes."""


class CheckpointVersionError(CheckpointError):
    """The file was written by an unsupported format version."""


class CheckpointTruncatedError(CheckpointError):
    """The file ended before all declared content was read."""


class CheckpointShapeError(CheckpointError):
    """Stored tensors do not match the shapes implied by the stored config."""


class NonFiniteError(AdventurerError, FloatingPointError):
    """Raised when training produces NaN or Inf values."""

    def __init__(self, tensor_name: str, step: int):
        self.tensor_name = tensor_name
        self.step = step
        super().__init__(f"Non-finite values in '{tensor_name}' at step {step}")
