"""Input validation helpers shared by the estimators and the trainer."""

from __future__ import annotations

import numpy as np

__all__ = ["check_clip_batch", "check_labels"]


def check_clip_batch(X, input_shape=None) -> np.ndarray:
    """Validate a batch of clips: (n, frames, height, width), finite float.

    ``input_shape`` optionally pins (height, width, frames) to a network's
    expectation.
    """
    X = np.asarray(X, dtype=np.float32)
    if X.ndim != 4:
        raise ValueError(
            f"expected clips shaped (n, frames, height, width), got {X.shape}"
        )
    if not np.isfinite(X).all():
        raise ValueError("clips contain non-finite values")
    if input_shape is not None:
        h, w, t = input_shape
        if X.shape[1:] != (t, h, w):
            raise ValueError(
                f"clips shaped {X.shape[1:]} do not match the model input "
                f"(frames={t}, height={h}, width={w})"
            )
    return X


def check_labels(y, n_classes=None) -> np.ndarray:
    """Validate integer class labels in ``[0, n_classes)``."""
    y = np.asarray(y)
    if y.ndim != 1:
        raise ValueError(f"labels must be 1-D, got shape {y.shape}")
    if not np.issubdtype(y.dtype, np.integer):
        rounded = np.round(y)
        if not np.array_equal(rounded, y):
            raise ValueError("labels must be integers")
        y = rounded.astype(np.int64)
    y = y.astype(np.int64)
    if y.size and y.min() < 0:
        raise ValueError("labels must be non-negative")
    if n_classes is not None and y.size and y.max() >= n_classes:
        raise ValueError(f"label {y.max()} out of range for {n_classes} classes")
    return y
