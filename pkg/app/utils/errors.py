from typing import Optional


class HurricaneSviError(Exception):
    """Base class for all errors raised by the damage inference pipeline."""


class InvalidArgumentError(HurricaneSviError, ValueError):
    """A precondition of a numerical operation was violated."""


class UsageError(HurricaneSviError):
    """The command line or run configuration is malformed."""


class DataError(HurricaneSviError):
    """Input data could not be parsed or is inconsistent."""

    def __init__(
        self, message: str, path: Optional[str] = None, line: Optional[int] = None
    ) -> None:
        """
        Initialize the DataError.

        Args:
            message (str): Human readable description.
            path (Optional[str]): File the problem was found in, if any.
            line (Optional[int]): 1-based line number within the file, if known.
        """
        self.path = path
        self.line = line
        location = ""
        if path is not None:
            location = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(f"{location}{message}")


class NumericalError(HurricaneSviError, ArithmeticError):
    """A computation produced non-finite values or an oracle could not resolve the target."""
