"""Exception hierarchy; each class carries the CLI exit code it maps to."""


class NightglowError(Exception):
    exit_code = 1


class ParameterError(NightglowError, ValueError):
    exit_code = 2


class ImageIOError(NightglowError, OSError):
    exit_code = 3


class ImageFormatError(NightglowError):
    exit_code = 4


class ConvergenceError(NightglowError):
    """Iterative solve stopped before reaching its tolerance."""

    exit_code = 5

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class MatteOvershootError(ConvergenceError):
    """Unclamped matte left the [-0.05, 1.05] sanity band."""


class NumericError(NightglowError, ArithmeticError):
    exit_code = 6


class DegenerateKernelError(NightglowError):
    exit_code = 7


class CacheInvalidError(NightglowError):
    exit_code = 8


PARTIAL_FAILURE = 9
