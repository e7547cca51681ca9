"""
Relic Sketch - Error Types
Every error raised by the toolkit carries the process exit code the CLI reports
"""


class RelicSketchError(Exception):
    """Base error for the toolkit"""

    exit_code = 1


class ConfigError(RelicSketchError):
    """Invalid configuration or usage"""

    exit_code = 2


class ParameterError(ConfigError):
    """A parameter is outside its documented range"""


class ContractError(RelicSketchError):
    """An operation was called with inputs violating its preconditions"""

    exit_code = 2


class DimensionError(ContractError):
    """Shapes or sizes do not fit together"""


class DataError(RelicSketchError):
    """Problems reading, writing or interpreting data files"""

    exit_code = 3


class ImageFormatError(DataError):
    """Unsupported or unreadable image file"""


class ManifestError(DataError):
    """Dataset manifest is malformed or references missing data"""


class CubeFormatError(DataError):
    """Hyperspectral cube and sidecar disagree"""


class CheckpointError(DataError):
    """Checkpoint file is corrupt or incompatible"""


class DegenerateTargetError(DataError):
    """A target map has neither positive nor negative pixels"""


class NumericError(RelicSketchError):
    """Numeric failure (singular matrices, non-finite values)"""

    exit_code = 4


class TrainingDivergedError(NumericError):
    """Training produced a non-finite loss"""

    def __init__(self, message: str, step: int, last_parameters=None):
        super().__init__(message)
        self.step = step
        self.last_parameters = last_parameters
