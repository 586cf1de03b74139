from typing import Any

import numpy as np

from app.utils.errors import InvalidArgumentError


def require_finite(value: Any, name: str) -> np.ndarray:
    """
    Ensure every element of a scalar or array is finite.

    Args:
        value (Any): Scalar or array-like to check.
        name (str): Argument name used in the error message.

    Returns:
        np.ndarray: The value converted to a float array.

    Raises:
        InvalidArgumentError: If any element is NaN or infinite.
    """
    array = np.asarray(value, dtype=float)
    if not np.all(np.isfinite(array)):
        raise InvalidArgumentError(f"'{name}' must be finite, got {value!r}.")
    return array


def require_positive(value: Any, name: str) -> np.ndarray:
    """
    Ensure every element is finite and strictly positive.

    Args:
        value (Any): Scalar or array-like to check.
        name (str): Argument name used in the error message.

    Returns:
        np.ndarray: The value converted to a float array.
    """
    array = require_finite(value, name)
    if np.any(array <= 0):
        raise InvalidArgumentError(f"'{name}' must be > 0, got {value!r}.")
    return array


def require_nonnegative(value: Any, name: str) -> np.ndarray:
    array = require_finite(value, name)
    if np.any(array < 0):
        raise InvalidArgumentError(f"'{name}' must be >= 0, got {value!r}.")
    return array


def require_nonzero(value: Any, name: str) -> np.ndarray:
    array = require_finite(value, name)
    if np.any(array == 0):
        raise InvalidArgumentError(f"'{name}' must be nonzero.")
    return array


def require_open_probability(value: Any, name: str) -> np.ndarray:
    """
    Ensure every element lies in the open interval (0, 1).

    Args:
        value (Any): Scalar or array-like to check.
        name (str): Argument name used in the error message.

    Returns:
        np.ndarray: The value converted to a float array.
    """
    array = require_finite(value, name)
    if np.any((array <= 0) | (array >= 1)):
        raise InvalidArgumentError(f"'{name}' must lie in (0, 1), got {value!r}.")
    return array
