"""Structured errors raised across the package."""


class AmpLabError(Exception):
    """Base class for package errors."""


class InvalidParameterError(AmpLabError, ValueError):
    """A scalar or array argument is outside its documented domain."""


class NumericFailure(AmpLabError, FloatingPointError):
    """A non-finite value appeared; ``iteration`` says where, when known."""

    def __init__(self, message, iteration=None):
        if iteration is not None:
            message = f"{message} (iteration {iteration})"
        super().__init__(message)
        self.iteration = iteration


class CalibrationFailure(AmpLabError, RuntimeError):
    """Bracket expansion for the Huber parameter ran out of room."""

    def __init__(self, message, bracket):
        super().__init__(f"{message}; last bracket {bracket}")
        self.bracket = bracket


class DegenerateDirection(AmpLabError, ArithmeticError):
    """A new basis direction has (numerically) zero norm after projection."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class ConfigError(AmpLabError, ValueError):
    """Problem with an experiment configuration; ``key`` is the dotted path."""

    def __init__(self, message, key=None):
        if key is not None:
            message = f"{key}: {message}"
        super().__init__(message)
        self.key = key
