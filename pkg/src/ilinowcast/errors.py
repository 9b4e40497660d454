"""Exception taxonomy.

Every error carries an ``exit_code`` so the command line can map failures
onto its documented exit statuses without a lookup table of its own.
"""


class IliNowcastError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ValidationError(IliNowcastError):
    exit_code = 2


class InvalidArgument(ValidationError, ValueError):
    pass


class InvalidBatch(ValidationError):
    pass


class ParseError(ValidationError):
    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}" if where else f"line {line}"
        super().__init__(f"{where}: {message}" if where else message)


class ConfigError(ValidationError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n" + "\n".join(f"  - {p}" for p in self.problems))


class EmptyDayError(IliNowcastError):
    """A day without any documents; recorded as missing, never as zeros."""


class StoreError(IliNowcastError):
    pass


class AppendOrderError(StoreError):
    exit_code = 2


class DuplicateDayError(StoreError):
    exit_code = 2


class ConflictError(StoreError):
    exit_code = 2


class NoSuchStore(StoreError):
    exit_code = 3


class UnknownModel(IliNowcastError):
    exit_code = 3


class NumericalFailure(IliNowcastError):
    pass


class InsufficientData(IliNowcastError):
    exit_code = 4


class InsufficientOverlap(InsufficientData):
    pass


class IncompleteWindow(IliNowcastError):
    exit_code = 4


class OutOfRange(IliNowcastError):
    exit_code = 4


class UndefinedCorrelation(IliNowcastError, ArithmeticError):
    exit_code = 4


class Aborted(IliNowcastError):
    pass
