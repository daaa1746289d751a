"""Run configuration files.

Line-oriented ``key = value`` grammar with ``[section]`` headers (stdlib
configparser INI dialect; ``#`` starts a comment, full-line or inline).
Sections and keys::

    [model]   preset (ar|dsr|tiny), classes, activation (lrelu|tanh|sigmoid),
              loss (ce|mse), optional per-layer geometry overrides:
              corr1_rf corr1_overlap corr1_depth, pool_rf pool_overlap
              pool_depth, corr2_rf corr2_overlap corr2_depth, sets,
              input_width input_height input_frames
    [train]   lr0, decay, decay_every, batch_size, max_epochs, patience,
              val_fraction
    [data]    manifest (path), policy (ar|dsr), hop, overlap, width, height
    [fusion]  mode (global|mean), svm_c, svm_tol
    [run]     seed, out

Only ``[model]`` is mandatory; everything else has defaults.  Semantic
errors raise :class:`ConfigError` naming the section/key; geometry that
breaks the layer shape chain is rejected at load time naming the layer.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass

from .activations import ACTIVATIONS
from .layers import Network, ShapeChainError
from .presets import preset_topology
from .training import TrainConfig

__all__ = ["ConfigError", "RunConfig", "load_config"]


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


@dataclass
class RunConfig:
    topology: dict
    train: TrainConfig
    loss: str = "ce"
    manifest: str | None = None
    policy: str = "ar"
    hop: int = 25
    overlap: int = 7
    val_fraction: float = 0.2
    fusion_mode: str = "global"
    svm_c: float = 1.0
    svm_tol: float = 1e-3
    seed: int = 0
    out_dir: str = "runs/out"


_GEOM_KEYS = {
    "corr1": ("corr1_rf", "corr1_overlap", "corr1_depth"),
    "pool": ("pool_rf", "pool_overlap", "pool_depth"),
    "corr2": ("corr2_rf", "corr2_overlap", "corr2_depth"),
}


def _get(parser, section, key, cast, default, path):
    if not parser.has_option(section, key):
        return default
    raw = parser.get(section, key)
    try:
        return cast(raw)
    except ValueError as exc:
        raise ConfigError(f"{path}: [{section}] {key} = {raw!r}: {exc}") from None


def load_config(path, preset_override=None, seed_override=None,
                out_override=None) -> RunConfig:
    """Parse and validate a run configuration file."""
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        with open(path) as fh:
            parser.read_file(fh, source=path)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None

    if not parser.has_section("model"):
        raise ConfigError(f"{path}: missing [model] section")
    preset = preset_override or parser.get("model", "preset", fallback="ar")
    activation = parser.get("model", "activation", fallback="lrelu")
    if activation not in ACTIVATIONS:
        raise ConfigError(f"{path}: [model] activation must be one of "
                          f"{ACTIVATIONS}, got {activation!r}")
    try:
        topo = preset_topology(
            preset,
            classes=_get(parser, "model", "classes", int, None, path),
            activation=activation,
        )
    except KeyError as exc:
        raise ConfigError(f"{path}: [model] preset: {exc.args[0]}") from None

    for dim in ("width", "height", "frames"):
        topo["input"][dim] = _get(parser, "model", f"input_{dim}", int,
                                  topo["input"][dim], path)
    corr_seen = 0
    for spec in topo["layers"]:
        if spec["kind"] == "corr":
            corr_seen += 1
            keys = _GEOM_KEYS["corr1" if corr_seen == 1 else "corr2"]
        elif spec["kind"] == "pool":
            keys = _GEOM_KEYS["pool"]
        else:
            continue
        for attr, key in zip(("r", "overlap", "depth"), keys):
            spec[attr] = _get(parser, "model", key, int, spec[attr], path)
        if spec["kind"] == "corr":
            spec["sets"] = _get(parser, "model", "sets", int, spec["sets"], path)

    loss = parser.get("model", "loss", fallback="ce")
    try:
        train = TrainConfig(
            loss=loss,
            lr0=_get(parser, "train", "lr0", float, 0.00015, path),
            decay=_get(parser, "train", "decay", float, 0.9, path),
            decay_every=_get(parser, "train", "decay_every", int, 10, path),
            batch_size=_get(parser, "train", "batch_size", int, 20, path),
            max_epochs=_get(parser, "train", "max_epochs", int, 100, path),
            patience=_get(parser, "train", "patience", int, 10, path),
            seed=seed_override if seed_override is not None
            else _get(parser, "run", "seed", int, 0, path),
        )
    except ValueError as exc:
        raise ConfigError(f"{path}: [train] {exc}") from None

    # validate the shape chain now so bad geometry fails at load time
    try:
        Network(topo, rng=None)
    except (ShapeChainError, ValueError) as exc:
        raise ConfigError(f"{path}: [model] invalid topology: {exc}") from None

    policy = parser.get("data", "policy", fallback="ar")
    if policy not in ("ar", "dsr"):
        raise ConfigError(f"{path}: [data] policy must be ar or dsr, got {policy!r}")
    mode = parser.get("fusion", "mode", fallback="global")
    if mode not in ("global", "mean"):
        raise ConfigError(f"{path}: [fusion] mode must be global or mean, "
                          f"got {mode!r}")

    return RunConfig(
        topology=topo,
        train=train,
        loss=loss,
        manifest=parser.get("data", "manifest", fallback=None),
        policy=policy,
        hop=_get(parser, "data", "hop", int, 25, path),
        overlap=_get(parser, "data", "overlap", int, 7, path),
        val_fraction=_get(parser, "train", "val_fraction", float, 0.2, path),
        fusion_mode=mode,
        svm_c=_get(parser, "fusion", "svm_c", float, 1.0, path),
        svm_tol=_get(parser, "fusion", "svm_tol", float, 1e-3, path),
        seed=train.seed,
        out_dir=out_override or parser.get("run", "out", fallback="runs/out"),
    )
