from typing import Optional


class RpdeError(Exception):
    exit_code = 1


class UsageError(RpdeError, ValueError):
    """Bad arguments, bad input files or a misuse of an API."""

    exit_code = 2


class ConfigurationError(UsageError):
    pass


class SchemaError(UsageError):
    pass


class CheckpointError(UsageError):
    pass


class DegenerateDistributionError(UsageError):
    pass


class NumericFault(RpdeError, ArithmeticError):
    """A non-finite value reached the computation."""

    exit_code = 3

    def __init__(
        self, message: str, iteration: Optional[int] = None, sample: Optional[str] = None
    ):
        super().__init__(message)
        self.iteration = iteration
        self.sample = sample

    def __str__(self) -> str:
        message = super().__str__()
        if self.sample is not None:
            message += f" (sample: {self.sample})"
        if self.iteration is not None:
            message += f" at iteration {self.iteration}"
        return message
