"""Elementwise activation functions and their derivatives."""

from __future__ import annotations

import numpy as np

__all__ = ["ACTIVATIONS", "LRELU_SLOPE", "apply", "derivative", "softmax"]

# Slope of the leaky rectifier's negative branch. Fixed library-wide; the
# derivative at exactly 0 is defined to be the slope.
LRELU_SLOPE = 0.01

ACTIVATIONS = ("sigmoid", "tanh", "lrelu", "identity")


def apply(kind: str, x: np.ndarray) -> np.ndarray:
    """Apply activation ``kind`` elementwise, preserving dtype."""
    if kind == "identity":
        return x
    if kind == "tanh":
        return np.tanh(x)
    if kind == "sigmoid":
        # split by sign to avoid exp overflow
        out = np.empty_like(x)
        pos = x >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        out[~pos] = ex / (1.0 + ex)
        return out
    if kind == "lrelu":
        return np.where(x > 0, x, x * x.dtype.type(LRELU_SLOPE))
    raise ValueError(f"unknown activation {kind!r}")


def derivative(kind: str, preact: np.ndarray) -> np.ndarray:
    """Derivative of the activation, evaluated from the pre-activation."""
    if kind == "identity":
        return np.ones_like(preact)
    if kind == "tanh":
        t = np.tanh(preact)
        return 1.0 - t * t
    if kind == "sigmoid":
        s = apply("sigmoid", preact)
        return s * (1.0 - s)
    if kind == "lrelu":
        return np.where(preact > 0, preact.dtype.type(1.0), preact.dtype.type(LRELU_SLOPE))
    raise ValueError(f"unknown activation {kind!r}")


def softmax(scores: np.ndarray) -> np.ndarray:
    """Stable softmax over the last axis, computed in float64."""
    s = np.asarray(scores, dtype=np.float64)
    s = s - s.max(axis=-1, keepdims=True)
    e = np.exp(s)
    return e / e.sum(axis=-1, keepdims=True)
