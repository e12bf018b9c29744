"""
Error hierarchy shared by every module, with the CLI exit code each maps to.
"""


class MarkovNetError(Exception):
    """Base class for all harness errors"""
    exit_code = 1


class ContractViolation(MarkovNetError, ValueError):
    """A precondition or shape contract of an operation was not met"""
    exit_code = 2


class ZeroChannelError(ContractViolation):
    """A CSI matrix with zero Frobenius norm reached the spherical split"""


class NumericalError(ContractViolation):
    """An operation produced NaN or Inf values"""


class ConfigurationError(MarkovNetError, ValueError):
    exit_code = 2


class DivergenceError(MarkovNetError):
    """Training loss became non-finite"""
    exit_code = 3

    def __init__(self, epoch: int, message: str = ""):
        self.epoch = epoch
        super().__init__(message or f"training diverged at epoch {epoch}")


class DatasetIOError(MarkovNetError, OSError):
    exit_code = 4
