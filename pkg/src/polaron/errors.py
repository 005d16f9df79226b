"""Exception hierarchy shared by the solvers, the estimators and the CLI."""


class PolaronError(Exception):
    """Base class for all errors raised by this package."""


class InvalidArgument(PolaronError, ValueError):
    pass


class DegenerateInput(PolaronError, ValueError):
    pass


class GridMismatch(PolaronError, ValueError):
    pass


class UnsupportedN(PolaronError, ValueError):
    pass


class NoConvergence(PolaronError, RuntimeError):
    """An iteration hit its cap above tolerance.

    ``diagnostics`` carries whatever the solver knew when it gave up
    (residual, iteration count, a hint); ``partial`` the last iterate if any.
    """

    def __init__(self, message, diagnostics=None, partial=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})
        self.partial = partial


class BracketFailure(PolaronError, RuntimeError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class ConfigError(PolaronError, ValueError):
    """Configuration could not be parsed or validated.

    ``field`` names the offending key, ``line`` the 1-based line number
    for parse errors in key = value text.
    """

    def __init__(self, message, field=None, line=None):
        super().__init__(message)
        self.field = field
        self.line = line


class ParseError(ConfigError):
    pass


class ValidationError(ConfigError):
    pass


class ReportError(PolaronError, RuntimeError):
    pass
