"""Exception hierarchy shared across the package."""


class VitrayError(Exception):
    """Base class for all errors raised by vitray."""


class ShapeError(VitrayError, ValueError):
    """Operand shapes are incompatible."""


class ContractError(VitrayError, ValueError):
    """A precondition of an operation was violated."""


class NonFiniteError(VitrayError, FloatingPointError):
    """A NaN or Inf reached an op boundary."""


class ImageFormatError(VitrayError):
    """An image file could not be decoded."""


class DatasetError(VitrayError):
    """A dataset could not be assembled."""


class CheckpointFormatError(VitrayError):
    """Checkpoint has a bad magic number or unsupported version."""


class CheckpointCorruptionError(VitrayError):
    """Checkpoint payload is truncated or internally inconsistent."""


class UndefinedMetricError(VitrayError, ValueError):
    """A metric is undefined for the given inputs (e.g. ROC with one class)."""
