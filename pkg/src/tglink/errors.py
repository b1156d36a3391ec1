"""Exception types shared across the package.

The CLI maps these onto exit codes: validation-style failures exit 1,
training divergence exits 3 (argparse handles usage errors with 2).
"""


class TglinkError(Exception):
    """Base class for every error raised by this package."""


class ParseError(TglinkError):
    """A file could not be parsed; carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ValidationError(TglinkError):
    """Input data or configuration violates a documented invariant."""


class ContractError(TglinkError):
    """An operation was called outside its documented precondition."""


class ShapeError(TglinkError):
    """Tensor shapes do not match a layer's expectation."""


class SplitError(TglinkError):
    """A transfer split could not be constructed."""


class DivergenceError(TglinkError):
    """Training produced a non-finite value; carries the batch index."""

    def __init__(self, message: str, batch_index: int | None = None):
        if batch_index is not None:
            message = f"batch {batch_index}: {message}"
        super().__init__(message)
        self.batch_index = batch_index


class CorrelationUndefinedError(TglinkError):
    """A correlation was requested on a zero-variance distance list."""
