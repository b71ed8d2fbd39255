"""Exception types shared across the package.

Each class carries an ``exit_code`` so the command line front end can map
failures onto its documented exit statuses without a lookup table.
"""


class RpcaError(Exception):
    """Base class for every error raised by :mod:`rpcaseg`."""

    code = "ERROR"
    exit_code = 1


class UsageError(RpcaError, ValueError):
    code = "USAGE"
    exit_code = 2


class ConfigError(UsageError):
    code = "CONFIG"


class DimensionError(RpcaError, ValueError):
    """Operand shapes are incompatible."""

    code = "DIMENSION"
    exit_code = 4


class DataError(RpcaError):
    code = "DATA"
    exit_code = 3


class FormatError(DataError):
    """A file could not be decoded (wrong format, bit depth, corrupt bytes)."""

    code = "FORMAT"


class NumericalError(RpcaError, ArithmeticError):
    code = "NUMERIC"
    exit_code = 4


class NonFiniteError(NumericalError):
    code = "NONFINITE"


class TrainingDiverged(NumericalError):
    """Loss became non-finite; ``last_good`` holds the parameters before it."""

    code = "DIVERGED"

    def __init__(self, message, last_good=None, epoch=None):
        super().__init__(message)
        self.last_good = last_good
        self.epoch = epoch
