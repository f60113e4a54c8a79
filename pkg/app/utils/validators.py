"""Input validation utilities"""

from typing import Sequence

import numpy as np

from app.utils.exceptions import DomainError, PermutationValidationError


def validate_positive(name: str, value: int) -> None:
    """
    Validate that a size parameter is a positive integer

    Args:
        name: Parameter name used in the error message
        value: Value to check

    Raises:
        DomainError: If value is not an integer >= 1
    """
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < 1:
        raise DomainError(f"{name} must be a positive integer, got {value!r}")


def validate_index(name: str, value: int, upper: int) -> None:
    """
    Validate that an id lies in [0, upper)

    Raises:
        DomainError: If value is out of range
    """
    if not 0 <= value < upper:
        raise DomainError(f"{name} {value} is out of range [0, {upper})")


def validate_probability(p: float) -> None:
    """
    Validate a probability value

    Raises:
        DomainError: If p is not in [0, 1]
    """
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"Probability must lie in [0, 1], got {p}")


def is_power_of_two(value: int) -> bool:
    """Check whether value is 2^k for some k >= 0"""
    return value >= 1 and value & (value - 1) == 0


def validate_power_of_two(name: str, value: int, minimum: int = 1) -> int:
    """
    Validate that value is a power of two no smaller than minimum

    Returns:
        log2(value)

    Raises:
        DomainError: If value is not a power of two
    """
    if not is_power_of_two(value) or value < minimum:
        raise DomainError(f"{name} must be a power of two >= {minimum}, got {value}")
    return value.bit_length() - 1


def validate_permutation(perm: Sequence[int] | np.ndarray, n: int) -> np.ndarray:
    """
    Validate that perm is a bijection on [0, n)

    Args:
        perm: Candidate permutation, perm[i] is the destination of packet i
        n: Number of processors

    Returns:
        The permutation as an int64 numpy array

    Raises:
        PermutationValidationError: If perm has the wrong length, values out of
            range or repeated destinations
    """
    try:
        arr = np.asarray(perm, dtype=np.int64)
    except (TypeError, ValueError) as e:
        raise PermutationValidationError(f"Permutation is not an integer sequence: {e}")

    if arr.ndim != 1 or arr.shape[0] != n:
        raise PermutationValidationError(
            f"Permutation must have exactly {n} entries, got shape {arr.shape}"
        )
    if n and (arr.min() < 0 or arr.max() >= n):
        raise PermutationValidationError(f"Permutation values must lie in [0, {n})")

    counts = np.bincount(arr, minlength=n)
    if np.any(counts != 1):
        repeated = np.flatnonzero(counts > 1)[:5].tolist()
        raise PermutationValidationError(
            f"Permutation is not a bijection: repeated destinations {repeated}"
        )
    return arr
