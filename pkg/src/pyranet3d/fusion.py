"""Feature fusion from the last normalization layer, and the feature file
format consumed by the SVM stage.

Two fusion modes:

* global (``F``): the whole (H, W, M, S) stack flattened into one vector,
  set-major, then map, then row, then column — length ``H*W*M*S``;
* mean (``FM``): the per-set blocks of the global vector averaged
  elementwise — length ``H*W*M``.

The flatten order is fixed and versioned in the feature-file header so
exported features stay stable across releases.

Feature file format (text)::

    3DPNF <version> <F|FM> <length>
    <label>,<v1>,<v2>,...

one record per clip, values printed with 9 significant digits so float32
round-trips exactly.
"""

from __future__ import annotations

import numpy as np

from .layers import Network, flatten_stack

__all__ = [
    "FEATURE_FORMAT_VERSION",
    "fuse_global",
    "fuse_mean",
    "fused_length",
    "extract_features",
    "write_features",
    "read_features",
]

FEATURE_FORMAT_VERSION = 1
_MODES = {"F": "global", "FM": "mean"}
_TOKENS = {v: k for k, v in _MODES.items()}


def fuse_global(stack: np.ndarray) -> np.ndarray:
    """Concatenate a (H, W, M, S) stack into one float32 vector."""
    return flatten_stack(stack).astype(np.float32)


def fuse_mean(stack: np.ndarray) -> np.ndarray:
    """Elementwise mean over the per-set blocks of the global vector."""
    sets = stack.shape[3]
    blocks = fuse_global(stack).reshape(sets, -1)
    return blocks.mean(axis=0, dtype=np.float64).astype(np.float32)


def fused_length(stack_shape, mode: str) -> int:
    h, w, m, s = stack_shape
    if mode == "global":
        return h * w * m * s
    if mode == "mean":
        return h * w * m
    raise ValueError(f"unknown fusion mode {mode!r}")


def _last_norm_index(net: Network) -> int:
    for idx in range(len(net.layers) - 1, -1, -1):
        if net.layers[idx].kind == "norm":
            return idx
    raise ValueError("network has no normalization layer to tap")


def extract_features(net: Network, X, mode: str = "global") -> np.ndarray:
    """Fused features for clips ``X`` (n, T, H, W), tapped at the last
    normalization layer of a trained network."""
    if mode not in ("global", "mean"):
        raise ValueError(f"unknown fusion mode {mode!r}")
    tap = _last_norm_index(net)
    fuse = fuse_global if mode == "global" else fuse_mean
    out = []
    for clip in X:
        x = np.ascontiguousarray(np.transpose(clip, (1, 2, 0)))[:, :, :, None]
        for layer in net.layers[:tap + 1]:
            x, _ = layer.forward(x)
        out.append(fuse(x))
    return np.stack(out)


def write_features(path, features, labels, mode: str):
    """Write a feature file; ``features`` (n, length) float32, ``labels``
    integer class indices."""
    features = np.asarray(features, dtype=np.float32)
    token = _TOKENS[mode] if mode in _TOKENS else mode
    if token not in _MODES:
        raise ValueError(f"unknown fusion mode {mode!r}")
    with open(path, "w") as fh:
        fh.write(f"3DPNF {FEATURE_FORMAT_VERSION} {token} {features.shape[1]}\n")
        for label, row in zip(labels, features):
            vals = ",".join(f"{float(v):.9g}" for v in row)
            fh.write(f"{int(label)},{vals}\n")


def read_features(path):
    """Read a feature file; returns ``(features, labels, mode)``."""
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 4 or header[0] != "3DPNF":
            raise ValueError(f"{path}: not a 3DPNF feature file")
        version, token, length = int(header[1]), header[2], int(header[3])
        if version != FEATURE_FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported feature format v{version}")
        if token not in _MODES:
            raise ValueError(f"{path}: unknown fusion mode {token!r}")
        labels = []
        rows = []
        for ln, line in enumerate(fh, start=2):
            parts = line.rstrip("\n").split(",")
            if len(parts) != length + 1:
                raise ValueError(
                    f"{path}:{ln}: expected {length + 1} fields, got {len(parts)}"
                )
            labels.append(int(parts[0]))
            rows.append(np.array(parts[1:], dtype=np.float32))
    features = np.stack(rows) if rows else np.zeros((0, length), np.float32)
    return features, np.array(labels, dtype=np.int64), _MODES[token]
