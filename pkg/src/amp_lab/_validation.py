"""Small argument checks shared by the public functions."""

import numbers

import numpy as np

from .exceptions import InvalidParameterError


def check_scalar(value, name, *, lo=None, hi=None, lo_open=False, hi_open=False):
    """Return ``value`` as float after a range check."""
    if isinstance(value, bool) or not isinstance(value, (numbers.Real, np.floating, np.integer)):
        raise InvalidParameterError(f"{name} must be a real number, got {value!r}")
    value = float(value)
    if not np.isfinite(value):
        raise InvalidParameterError(f"{name} must be finite, got {value}")
    if lo is not None and (value < lo or (lo_open and value == lo)):
        raise InvalidParameterError(f"{name}={value} below allowed range")
    if hi is not None and (value > hi or (hi_open and value == hi)):
        raise InvalidParameterError(f"{name}={value} above allowed range")
    return value


def check_count(value, name, lo=1):
    if isinstance(value, bool) or not isinstance(value, (numbers.Integral, np.integer)):
        raise InvalidParameterError(f"{name} must be an integer, got {value!r}")
    value = int(value)
    if value < lo:
        raise InvalidParameterError(f"{name} must be >= {lo}, got {value}")
    return value


def as_vector(x, name, length=None):
    """Float64 1-d copy-free view, with optional length check."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise InvalidParameterError(f"{name} must be one-dimensional")
    if length is not None and arr.shape[0] != length:
        raise InvalidParameterError(f"{name} has length {arr.shape[0]}, expected {length}")
    return arr


def check_finite(arr, what, iteration=None):
    from .exceptions import NumericFailure

    if not np.all(np.isfinite(arr)):
        raise NumericFailure(f"non-finite values in {what}", iteration)
    return arr
