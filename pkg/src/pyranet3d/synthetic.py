"""Synthetic moving-bar clips for fast end-to-end checks.

Three classes, distinguishable only through motion: a vertical bar drifting
right, the same bar drifting left, and a horizontal bar drifting down.
Each clip randomizes the starting phase and adds light pixel noise, so
single frames carry no class signal.
"""

from __future__ import annotations

import numpy as np

from .rng import Rng

__all__ = ["make_moving_bars"]


def _bar_clip(direction, width, height, frames, phase, rng, noise):
    clip = np.zeros((frames, height, width), dtype=np.float32)
    for t in range(frames):
        if direction == "right":
            col = (phase + t) % width
            clip[t, :, col] = 1.0
            clip[t, :, (col + 1) % width] = 1.0
        elif direction == "left":
            col = (phase - t) % width
            clip[t, :, col] = 1.0
            clip[t, :, (col + 1) % width] = 1.0
        else:  # down
            row = (phase + t) % height
            clip[t, row, :] = 1.0
            clip[t, (row + 1) % height, :] = 1.0
    if noise > 0:
        clip += rng.normal(0.0, noise, clip.shape).astype(np.float32)
    return np.clip(clip, 0.0, 1.0)


def make_moving_bars(n_per_class, width=16, height=12, frames=13, seed=0,
                     noise=0.05):
    """Return ``(X, y)``: (n, frames, height, width) float32 clips in [0, 1]
    and integer labels 0 (right), 1 (left), 2 (down)."""
    rng = Rng(seed)
    clips = []
    labels = []
    for cls, direction in enumerate(("right", "left", "down")):
        span = width if direction in ("right", "left") else height
        for _ in range(n_per_class):
            phase = int(rng.integers(0, span))
            clips.append(_bar_clip(direction, width, height, frames, phase,
                                   rng, noise))
            labels.append(cls)
    order = Rng(seed + 1).permutation(len(clips))
    X = np.stack(clips)[order]
    y = np.array(labels, dtype=np.int64)[order]
    return X, y
