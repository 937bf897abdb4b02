"""Exception types shared across the package."""


class DomainError(ValueError):
    """An input lies outside the range where an operation is defined."""


class NumericalError(RuntimeError):
    """A quadrature or iterative procedure failed to reach its tolerance.

    ``residual`` carries the last error estimate when one is available.
    """

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class ConfigError(ValueError):
    """Malformed run configuration; ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
