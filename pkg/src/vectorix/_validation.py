"""Input validation helpers.

scikit-learn's ``check_array`` refuses complex input, so channel matrices are
validated here instead.
"""
import numbers

import numpy as np

from .exceptions import DimensionError


def check_matrix(A, name="A", square=True):
    """Return ``A`` as a finite 2-D complex128 array.

    Raises
    ------
    ValueError
        If ``A`` holds NaN/Inf.
    DimensionError
        If ``A`` is not 2-D (or not square when ``square`` is set).
    """
    A = np.asarray(A)
    if A.ndim != 2 or A.size == 0:
        raise DimensionError(f"{name} must be a non-empty 2-D array, got shape {A.shape}")
    if square and A.shape[0] != A.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {A.shape}")
    A = A.astype(np.complex128, copy=False)
    if not np.all(np.isfinite(A)):
        raise ValueError(f"{name} contains NaN or Inf")
    return A


def check_channel_stack(H, name="H"):
    """Return ``H`` as a finite (tones, L, L) complex128 array."""
    H = np.asarray(H)
    if H.ndim == 2:
        H = H[np.newaxis]
    if H.ndim != 3 or H.shape[1] != H.shape[2] or H.shape[0] == 0:
        raise DimensionError(f"{name} must have shape (tones, L, L), got {H.shape}")
    H = H.astype(np.complex128, copy=False)
    if not np.all(np.isfinite(H)):
        raise ValueError(f"{name} contains NaN or Inf")
    return H


def check_positive(value, name):
    if not isinstance(value, numbers.Real) or not np.isfinite(value) or value <= 0:
        raise ValueError(f"{name} must be a positive finite number, got {value!r}")
    return float(value)


def check_bits(b, lo=1, hi=12):
    if isinstance(b, bool) or not isinstance(b, numbers.Integral) or not lo <= b <= hi:
        raise ValueError(f"bits must be an integer in [{lo}, {hi}], got {b!r}")
    return int(b)
