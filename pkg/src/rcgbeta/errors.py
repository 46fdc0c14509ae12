"""Exception types shared across the package."""


class DomainError(ValueError):
    """Argument lies outside a function's mathematical domain."""


class NonConvergenceError(RuntimeError):
    """An iterative numerical routine exhausted its term or iteration budget."""


class NumericalDomainError(ArithmeticError):
    """A likelihood term left its valid numerical domain.

    Carries the index of the offending observation when known.
    """

    def __init__(self, message, index=None):
        if index is not None:
            message = f"{message} (observation {index})"
        super().__init__(message)
        self.index = index


class RankDeficiencyError(ValueError):
    """Design matrix does not have full column rank."""


class SingularInformationError(ArithmeticError):
    """Observed information matrix cannot be inverted; no standard errors."""


class ParseError(ValueError):
    """Malformed input file."""

    def __init__(self, message, path=None, line=None):
        loc = ""
        if path is not None:
            loc = f"{path}: "
        if line is not None:
            loc = f"{loc}line {line}: "
        super().__init__(f"{loc}{message}")
        self.path = path
        self.line = line


class ConfigError(ValueError):
    """Invalid configuration value or option combination."""
