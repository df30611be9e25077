"""
Custom exceptions definitions thrown by various modules to avoid redefinitions.

Date: 2024-03-04
Project: MDA-Net: Multi-Dimensional Attention for Slice-wise 3D Segmentation
"""

class MdaNetError(Exception):
    """Base class of all errors raised by the package."""

    def __init__(self, msg: str) -> None:
        super().__init__(msg)


class ArgumentCombinationException(MdaNetError):
    """Invalid argument combination exception that ArgParser throws."""

    def __init__(self, msg: str) -> None:
        """Constructor for Argument combination exception object.

        Parameters:
            msg Message describing the exception"""

        super().__init__(msg)


class ShapeError(MdaNetError, ValueError):
    """Tensor shape contract violation. The message names the offending axis."""


class ModelConfigError(MdaNetError):
    """Invalid combination of network configuration values."""


class DataError(MdaNetError):
    """Input data cannot be used (corrupt, missing or inconsistent)."""


class VolumeFormatError(DataError):
    """Volume header and payload do not agree or the header is malformed."""


class MissingLabelsError(DataError):
    """A labeled volume was required but the label volume is absent."""


class CheckpointError(DataError):
    """Checkpoint file is malformed or does not match the expected model."""


class NumericalError(MdaNetError, ArithmeticError):
    """Non-finite values, diverged training or failed gradient verification."""
