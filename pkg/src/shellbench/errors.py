"""Exception types raised across the package."""


class ShellBenchError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(ShellBenchError, ValueError):
    pass


class ParseError(ShellBenchError):
    """Malformed mesh input. ``line`` is 1-based, or None when unknown."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class GeometryError(ShellBenchError):
    pass


class ConstraintError(ShellBenchError):
    pass


class SolverError(ShellBenchError):
    pass


class BenchmarkError(ShellBenchError):
    pass
