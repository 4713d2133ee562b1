"""
Exception hierarchy for the forecasting pipeline.

Every class carries an ``exit_code`` so management commands can turn any
failure into a stable process exit status:

    1  configuration / shape errors
    2  I/O errors
    3  numeric failures
"""


class EvoStsError(Exception):
    """Base class for every error raised by the pipeline."""

    exit_code = 1


# Configuration

class ConfigError(EvoStsError):
    exit_code = 1


class InvalidConfig(ConfigError):
    """A configuration value is missing, malformed or out of range."""

    def __init__(self, message, key=None):
        self.key = key
        super().__init__(f"{key}: {message}" if key else message)


class InvalidLength(InvalidConfig):
    pass


# Shapes and sizes

class DataShapeError(EvoStsError, ValueError):
    exit_code = 1


class DimensionMismatch(DataShapeError):
    pass


class SignalTooShort(DataShapeError):
    pass


class TooFewPairs(DataShapeError):
    pass


class EmptyDataset(DataShapeError):
    pass


class EmptyPartition(EmptyDataset):
    pass


class EmptyTrainingSet(DataShapeError):
    pass


class EmptyInput(DataShapeError):
    pass


class CacheMismatch(DataShapeError):
    """A forward cache was handed to backward with different weights or input."""


# I/O

class DataIoError(EvoStsError):
    exit_code = 2


class SignalNotFound(DataIoError, FileNotFoundError):
    pass


class ParseError(DataIoError):
    def __init__(self, message, row=None, column=None):
        self.row = row
        self.column = column
        if row is not None:
            message = f"row {row}, column {column}: {message}"
        super().__init__(message)


class EmptySignal(DataIoError):
    pass


class OddByteCount(DataIoError):
    pass


class ReportIoError(DataIoError):
    pass


# Numerics

class NumericError(EvoStsError):
    exit_code = 3


class ZeroVariance(NumericError):
    pass


class DegenerateDictionary(NumericError):
    pass


class NonFiniteInput(NumericError):
    pass


class TrainingDiverged(NumericError):
    pass
