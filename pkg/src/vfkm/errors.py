"""Exception hierarchy for vfkm."""


class VFKMError(Exception):
    """Base class for all vfkm errors."""


class InvalidArgumentError(VFKMError, ValueError):
    pass


class OutOfDomainError(VFKMError, ValueError):
    pass


class MalformedTrajectoryError(VFKMError, ValueError):
    pass


class ParseError(VFKMError, ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class GridMismatchError(VFKMError, ValueError):
    pass


class InternalConsistencyError(VFKMError, RuntimeError):
    pass


class UnderdeterminedSystemError(VFKMError, ValueError):
    pass


class NumericalBreakdownError(VFKMError, ArithmeticError):
    pass
