"""Small input-validation helpers shared by the public modules."""

import numbers

import numpy as np

from .exceptions import InvalidParameterError, OutOfSimplexError

# slack for float comparisons against closed interval endpoints
ATOL = 1e-12


def check_unit_interval(value, name, *, low_open=False, high_open=False):
    """Return ``value`` as a number after checking it lies in [0, 1]."""
    if not isinstance(value, numbers.Real):
        raise InvalidParameterError(f"{name} must be a real number, got {value!r}")
    if value != value:
        raise InvalidParameterError(f"{name} is NaN")
    lo_ok = value > 0 if low_open else value >= -ATOL
    hi_ok = value < 1 if high_open else value <= 1 + ATOL
    if not (lo_ok and hi_ok):
        lo = "(" if low_open else "["
        hi = ")" if high_open else "]"
        raise InvalidParameterError(f"{name}={value!r} outside {lo}0, 1{hi}")
    return value


def check_positive_int(value, name):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral) or value < 1:
        raise InvalidParameterError(f"{name} must be a positive integer, got {value!r}")
    return int(value)


def check_alpha_pair(alpha_s, alpha_t):
    """Check ``0 <= alpha_t <= alpha_s <= 1``."""
    check_unit_interval(alpha_s, "alpha_s")
    check_unit_interval(alpha_t, "alpha_t")
    if alpha_s < alpha_t - ATOL:
        raise InvalidParameterError(
            f"alpha_s={alpha_s!r} must not be smaller than alpha_t={alpha_t!r}"
        )


def check_coefficient(value, name):
    """Check a kernel coefficient is a valid probability."""
    if not (-ATOL <= value <= 1 + ATOL):
        raise OutOfSimplexError(f"{name}={float(value):.6g} is not a probability")


def check_distribution(probs, name="dist", *, atol=1e-9):
    """Return ``probs`` as a float64 array after checking it is on the simplex."""
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise InvalidParameterError(f"{name} must be a non-empty 1-D vector")
    if np.any(~np.isfinite(p)) or np.any(p < -ATOL):
        raise InvalidParameterError(f"{name} has negative or non-finite entries")
    if abs(p.sum() - 1.0) > atol:
        raise InvalidParameterError(f"{name} sums to {p.sum():.17g}, not 1")
    return p
