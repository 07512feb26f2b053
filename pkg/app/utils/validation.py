"""
Validation Utilities
Range checks shared by services, returned as (is_valid, error_message)
"""

from typing import Optional

import numpy as np

SIMPLEX_TOLERANCE = 1e-6


def is_valid_open_fraction(value: float, name: str = "fraction") -> tuple[bool, Optional[str]]:
    """
    Validate a value in the open interval (0, 1)

    Args:
        value: Value to validate
        name: Name used in the error message

    Returns:
        (is_valid, error_message)
    """
    if not np.isfinite(value) or value <= 0.0 or value >= 1.0:
        return False, f"{name} must be in (0, 1), got {value}"
    return True, None


def is_valid_lambda(lam: float) -> tuple[bool, Optional[str]]:
    """
    Validate the soft-label mixing weight

    Args:
        lam: Weight of the one-hot ground truth

    Returns:
        (is_valid, error_message)
    """
    if not np.isfinite(lam) or lam < 0.0 or lam > 1.0:
        return False, f"lambda must be in [0, 1], got {lam}"
    return True, None


def is_valid_k_l(K: int, L: int) -> tuple[bool, Optional[str]]:
    """
    Validate Split-AI ensemble sizes

    Args:
        K: Number of sub-models
        L: Number of non-model indices per sample

    Returns:
        (is_valid, error_message)
    """
    if L <= 0:
        return False, f"L must be at least 1, got {L}"
    if L >= K:
        return False, f"L must be smaller than K (got K={K}, L={L}); some subsets could be empty"
    return True, None


def is_valid_flip_noise(flip_noise: float) -> tuple[bool, Optional[str]]:
    """Validate a bit-flip probability in [0, 0.5]"""
    if not np.isfinite(flip_noise) or flip_noise < 0.0 or flip_noise > 0.5:
        return False, f"flip_noise must be in [0, 0.5], got {flip_noise}"
    return True, None


def is_binary_matrix(features: np.ndarray) -> bool:
    """True if every entry is exactly 0 or 1"""
    return bool(np.all((features == 0) | (features == 1)))


def is_valid_confidence_vector(probs: np.ndarray) -> tuple[bool, Optional[str]]:
    """
    Validate rows of a confidence matrix (or a single vector)

    Args:
        probs: Shape (k,) or (n, k)

    Returns:
        (is_valid, error_message)
    """
    probs = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    if not np.all(np.isfinite(probs)):
        return False, "Confidence vector contains non-finite entries"
    if np.any(probs < 0.0) or np.any(probs > 1.0):
        return False, "Confidence entries must lie in [0, 1]"
    sums = probs.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > SIMPLEX_TOLERANCE):
        return False, f"Confidence vector sums deviate from 1 (max error {np.abs(sums - 1.0).max():.2e})"
    return True, None
