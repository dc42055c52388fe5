"""Exception hierarchy shared by the library and the command line.

Each class carries the process exit code the CLI maps it to.
"""


class LossTopoError(Exception):
    exit_code = 1


class UsageError(LossTopoError, ValueError):
    """Bad arguments, mismatched shapes or provenance."""

    exit_code = 2


class FormatError(LossTopoError, ValueError):
    """A grid or checkpoint file could not be parsed."""

    exit_code = 2


class NumericError(LossTopoError, ArithmeticError):
    """A loss, gradient or Hessian-vector product came out non-finite."""

    exit_code = 3


class DegenerateHessianWarning(UserWarning):
    pass
