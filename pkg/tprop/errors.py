"""
Exception types raised by the tprop library.

Library code raises these; only the command-line layer turns them into
messages and exit codes.
"""


class TPropError(Exception):
    """Base class for every error raised by tprop."""


class DimensionError(TPropError, ValueError):
    """Array shapes do not chain."""

    def __init__(self, operation: str, *shapes):
        self.operation = operation
        self.shapes = shapes
        rendered = " vs ".join(str(tuple(s)) for s in shapes)
        super().__init__(f"{operation}: incompatible shapes {rendered}")


class ParameterError(TPropError, ValueError):
    """A numeric argument is outside its legal range."""


class ConfigurationError(TPropError, ValueError):
    """A layer, network or experiment is configured inconsistently."""

    def __init__(self, message: str, field_name: str = ""):
        self.field_name = field_name
        super().__init__(f"{field_name}: {message}" if field_name else message)


class UnsupportedOperationError(TPropError, NotImplementedError):
    """The requested computation is undefined for this layer kind."""


class NumericalError(TPropError, ArithmeticError):
    """An iterative method failed or a construction became ill-conditioned."""


class DataNotFoundError(TPropError, FileNotFoundError):
    """A required dataset file is missing."""

    def __init__(self, path: str):
        self.path = path
        super().__init__(f"Dataset file not found: {path}")


class DataFormatError(TPropError):
    """A dataset file has a bad header or truncated payload."""

    def __init__(self, path: str, reason: str):
        self.path = path
        super().__init__(f"{path}: {reason}")


class CheckpointFormatError(TPropError):
    """A checkpoint blob is unreadable or does not match the requested model."""
