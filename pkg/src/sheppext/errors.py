"""Exception hierarchy shared by every module."""


class SheppError(Exception):
    """Base class for all library errors."""


class OutOfTableRange(SheppError):
    pass


class QuadratureFailure(SheppError):
    pass


class DegenerateVariance(SheppError):
    pass


class FitFailure(SheppError):
    pass


class EmbeddingFailure(SheppError):
    pass


class CholeskyFailure(SheppError):
    pass


class IncommensurateGrid(SheppError):
    pass


class DomainError(SheppError):
    pass


class ConfigError(SheppError):
    """Invalid run configuration. ``line`` is 1-based when known."""

    def __init__(self, message, line=None, key=None):
        self.line = line
        self.key = key
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{message}")
