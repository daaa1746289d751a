"""Reference network topologies.

``ar``   64x48x13 input (action recognition scale), 6 classes by default.
``dsr``  80x100x13 input (dynamic scene scale), 14 classes by default.
``tiny`` 10x8x5 input, 3 classes — a miniature with every layer type, used
         by the gradient-check suite and fast tests.

All presets chain correlation -> norm -> pooling -> norm -> correlation ->
norm -> fully connected (identity) -> softmax.  Spatial sizes follow
``width x height``; arrays are stored (height, width, ...).
"""

from __future__ import annotations

import numpy as np

from .layers import Network
from .rng import Rng

__all__ = ["PRESETS", "preset_topology", "build_network"]


def _standard_layers(corr1, pool, corr2, sets=3):
    return [
        {"kind": "corr", **corr1, "sets": sets},
        {"kind": "norm"},
        {"kind": "pool", **pool},
        {"kind": "norm"},
        {"kind": "corr", **corr2, "sets": sets},
        {"kind": "norm"},
        {"kind": "fc", "activation": "identity"},
    ]


PRESETS = {
    "ar": {
        "input": {"width": 64, "height": 48, "frames": 13},
        "classes": 6,
        "layers": _standard_layers(
            {"r": 4, "overlap": 3, "depth": 3},
            {"r": 2, "overlap": 0, "depth": 3},
            {"r": 4, "overlap": 3, "depth": 3},
        ),
    },
    "dsr": {
        "input": {"width": 80, "height": 100, "frames": 13},
        "classes": 14,
        "layers": _standard_layers(
            {"r": 4, "overlap": 3, "depth": 3},
            {"r": 2, "overlap": 0, "depth": 3},
            {"r": 4, "overlap": 3, "depth": 3},
        ),
    },
    "tiny": {
        "input": {"width": 10, "height": 8, "frames": 5},
        "classes": 3,
        "layers": _standard_layers(
            {"r": 3, "overlap": 2, "depth": 2},
            {"r": 2, "overlap": 0, "depth": 2},
            {"r": 2, "overlap": 1, "depth": 2},
        ),
    },
}


def preset_topology(name: str, classes=None, activation="lrelu",
                    input_size=None) -> dict:
    """A topology dict for ``name`` with optional overrides.

    ``input_size`` is (width, height, frames); ``classes`` overrides the
    preset's class count.  The result is a plain dict, safe to edit before
    building.
    """
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    base = PRESETS[name]
    topo = {
        "input": dict(base["input"]),
        "classes": int(classes) if classes is not None else base["classes"],
        "activation": activation,
        "layers": [dict(spec) for spec in base["layers"]],
    }
    if input_size is not None:
        w, h, t = input_size
        topo["input"] = {"width": int(w), "height": int(h), "frames": int(t)}
    return topo


def build_network(preset="ar", classes=None, activation="lrelu", seed=0,
                  input_size=None, dtype=np.float32, topology=None) -> Network:
    """Build a freshly initialized network from a preset or explicit topology."""
    topo = topology if topology is not None else preset_topology(
        preset, classes=classes, activation=activation, input_size=input_size
    )
    return Network(topo, rng=Rng(seed), dtype=dtype)
