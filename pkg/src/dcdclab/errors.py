"""Exception hierarchy.  The CLI maps ``DcdcLabError`` to exit status 1."""


class DcdcLabError(Exception):
    """Base class for domain errors raised by the library."""


class NotConstantDeterminant(DcdcLabError):
    pass


class ResidualCheckFailed(DcdcLabError):
    pass


class NotSingularLeading(DcdcLabError):
    pass


class SingularP(DcdcLabError):
    pass


class NonFiniteState(DcdcLabError):
    def __init__(self, message: str, t: float | None = None):
        super().__init__(message if t is None else f"{message} (t={t:.9g} s)")
        self.t = t


class UnknownAxis(DcdcLabError):
    pass


class NoFeasiblePoint(DcdcLabError):
    pass


class FormatError(DcdcLabError):
    """Malformed pencil/operator text file; carries the 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class ConfigError(Exception):
    """Invalid run configuration (exit status 2); not a domain error."""

    def __init__(self, message: str, line: int | str | None = None):
        where = "" if line is None else (f"line {line}: " if isinstance(line, int) else f"{line}: ")
        super().__init__(where + message)
        self.line = line
