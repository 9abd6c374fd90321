"""Input validation helpers for the estimator-facing API."""

from __future__ import annotations

import numpy as np

from .errors import DataError


def check_window_features(x, n_joints: int | None = None,
                          channels: int | None = None,
                          dtype=np.float32) -> np.ndarray:
    """Validate one sequence of window features.

    Expects (t, window_len, n_joints, channels) with finite values;
    returns a contiguous array of the requested dtype.
    """
    arr = np.asarray(x, dtype=dtype)
    if arr.ndim != 4 or arr.shape[0] < 1:
        raise DataError(
            f"window features must be (t, window_len, joints, channels), got {arr.shape}"
        )
    if n_joints is not None and arr.shape[2] != n_joints:
        raise DataError(f"expected {n_joints} joints, got {arr.shape[2]}")
    if channels is not None and arr.shape[3] != channels:
        raise DataError(f"expected {channels} channels, got {arr.shape[3]}")
    if not np.all(np.isfinite(arr)):
        raise DataError("window features contain non-finite values")
    return np.ascontiguousarray(arr)


def check_label_sequence(y, t: int, n_labels: int) -> np.ndarray:
    arr = np.asarray(y, dtype=np.int64)
    if arr.shape != (t,):
        raise DataError(f"labels must be ({t},), got {arr.shape}")
    if arr.size and (arr.min() < 0 or arr.max() >= n_labels):
        raise DataError(f"label codes outside 0..{n_labels - 1}")
    return arr


def check_sequence_lists(X, y=None):
    """Validate the estimator's (X, y) contract: aligned lists of
    per-sequence arrays."""
    if not isinstance(X, (list, tuple)) or not X:
        raise DataError("X must be a non-empty list of per-sequence window arrays")
    if y is not None:
        if not isinstance(y, (list, tuple)) or len(y) != len(X):
            raise DataError(f"y must be a list aligned with X ({len(X)} sequences)")
    return X, y
