"""Error sensitivities, SGD updates, schedules and the training loop.

Gradients over a mini-batch are the *sum* of per-sample gradients,
accumulated sample-major in float64, and parameters move by the plain
delta rule ``w <- w - lr * dE/dw``.  Training is serial and fully
deterministic under a fixed seed: the same seed yields bit-identical
metrics and parameters run to run.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .activations import derivative as act_deriv
from .layers import Network, NonFiniteError
from .rng import Rng

__all__ = [
    "TrainConfig",
    "TrainingDiverged",
    "one_hot",
    "cross_entropy",
    "mse",
    "output_delta",
    "lr_at_epoch",
    "sgd_update",
    "zero_grads",
    "accumulate_grads",
    "train",
    "evaluate",
    "METRICS_FIELDS",
]

METRICS_FIELDS = ("epoch", "lr", "train_loss", "train_acc", "val_acc")


class TrainingDiverged(RuntimeError):
    """Loss became non-finite."""


@dataclass
class TrainConfig:
    """Hyperparameters of one training run.

    ``lr0`` decays multiplicatively by ``decay`` every ``decay_every``
    epochs.  ``patience`` counts epochs without a new best validation
    accuracy before stopping early (ignored without a validation set).
    """

    loss: str = "ce"
    lr0: float = 0.00015
    decay: float = 0.9
    decay_every: int = 10
    batch_size: int = 200
    max_epochs: int = 100
    patience: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.loss not in ("ce", "mse"):
            raise ValueError(f"loss must be 'ce' or 'mse', got {self.loss!r}")
        if self.lr0 <= 0:
            raise ValueError("lr0 must be positive")
        if not 0 < self.decay <= 1:
            raise ValueError("decay must lie in (0, 1]")
        if self.batch_size < 1 or self.decay_every < 1:
            raise ValueError("batch_size and decay_every must be >= 1")


def one_hot(label: int, n_classes: int) -> np.ndarray:
    t = np.zeros(n_classes, dtype=np.float64)
    t[label] = 1.0
    return t


def cross_entropy(posteriors, target) -> float:
    """CE of one sample: ``-sum t*log p`` with a 1e-12 floor under the log."""
    p = np.clip(np.asarray(posteriors, np.float64), 1e-12, 1.0)
    return float(-(target * np.log(p)).sum())


def mse(outputs, target) -> float:
    """Half squared error of one sample: ``0.5 * sum (y - t)^2``."""
    e = np.asarray(outputs, np.float64) - target
    return float(0.5 * (e * e).sum())


def output_delta(scores, posteriors, target, loss, preact, activation):
    """Head sensitivity (gradient w.r.t. the head's pre-activation).

    CE pairs with an identity pre-softmax head, giving ``p - t``.  MSE uses
    ``(y - t) * f'(S)`` for whatever activation the head carries.
    """
    target = np.asarray(target, np.float64)
    if scores.shape != target.shape:
        raise ValueError(f"target shape {target.shape} != output {scores.shape}")
    if loss == "ce":
        if activation != "identity":
            raise ValueError("cross-entropy expects an identity pre-softmax head")
        return np.asarray(posteriors, np.float64) - target
    if loss == "mse":
        e = np.asarray(scores, np.float64) - target
        return e * act_deriv(activation, preact).astype(np.float64)
    raise ValueError(f"unknown loss {loss!r}")


def lr_at_epoch(cfg: TrainConfig, epoch: int) -> float:
    """``lr0 * decay ** floor(epoch / decay_every)`` (epoch counts from 0)."""
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    return cfg.lr0 * cfg.decay ** (epoch // cfg.decay_every)


def zero_grads(net: Network):
    """Float64 zero gradients shaped like every parameter array."""
    from .layers import ParamGrads

    grads = []
    for layer in net.layers:
        if layer.kind == "norm":
            grads.append(None)
        else:
            grads.append(ParamGrads(
                weights=np.zeros(layer.weights.shape, np.float64),
                biases=np.zeros(layer.biases.shape, np.float64),
            ))
    return grads


def accumulate_grads(total, extra):
    for acc, g in zip(total, extra):
        if acc is not None and g is not None and g.weights is not None:
            acc.weights += g.weights
            acc.biases += g.biases
    return total


def sgd_update(net: Network, grads, lr: float):
    """Delta rule, elementwise, computed in float64 and stored back in the
    network's parameter dtype."""
    for layer, g in zip(net.layers, grads):
        if g is None or g.weights is None:
            continue
        layer.weights = (layer.weights.astype(np.float64) - lr * g.weights
                         ).astype(layer.dtype)
        layer.biases = (layer.biases.astype(np.float64) - lr * g.biases
                        ).astype(layer.dtype)


def _clip_stack(clip):
    """(T, H, W) clip -> (H, W, T) stack feeding the network."""
    return np.ascontiguousarray(np.transpose(clip, (1, 2, 0)))


def _batch_step(net, X, y, idx, loss_kind, n_classes):
    """Forward/backward over one mini-batch; returns (grads, loss, correct)."""
    grads = zero_grads(net)
    total_loss = 0.0
    correct = 0
    fc = net.layers[-1]
    for k in idx:
        stack = _clip_stack(X[k])
        scores, post, caches = net.forward(stack)
        target = one_hot(int(y[k]), n_classes)
        if loss_kind == "ce":
            total_loss += cross_entropy(post, target)
            pred = int(np.argmax(post))
        else:
            total_loss += mse(scores, target)
            pred = int(np.argmax(scores))
        correct += pred == int(y[k])
        delta = output_delta(scores, post, target, loss_kind,
                             caches[-1].preact, fc.activation)
        g, _ = net.backward(delta, caches)
        accumulate_grads(grads, g)
    return grads, total_loss, correct


def evaluate(net: Network, X, y) -> float:
    """Clip-level accuracy of the softmax head."""
    if len(X) == 0:
        return float("nan")
    correct = 0
    for k in range(len(X)):
        _, post, _ = net.forward(_clip_stack(X[k]))
        correct += int(np.argmax(post)) == int(y[k])
    return correct / len(X)


def train(net: Network, X, y, cfg: TrainConfig, X_val=None, y_val=None,
          metrics_path=None, metrics_append=False, on_epoch_end=None,
          start_epoch=0, rng=None, verbose=False):
    """Mini-batch SGD with the decaying schedule and early stopping.

    ``X`` is (n, T, H, W) float32 in [0, 1]; ``y`` integer labels.  Returns
    the list of per-epoch metric rows (dicts with ``METRICS_FIELDS``).
    ``on_epoch_end(epoch, net, row, rng)`` runs after each epoch (used by the
    CLI to write checkpoints).  ``start_epoch``/``rng``/``metrics_append``
    support resuming.
    """
    n = len(X)
    if n == 0:
        raise ValueError("training set is empty")
    if rng is None:
        rng = Rng(cfg.seed)
    has_val = X_val is not None and len(X_val) > 0
    history = []
    best_val = -np.inf
    stale = 0

    writer = None
    fh = None
    if metrics_path is not None:
        fh = open(metrics_path, "a" if metrics_append else "w", newline="")
        writer = csv.writer(fh)
        if not metrics_append:
            writer.writerow(METRICS_FIELDS)

    try:
        for epoch in range(start_epoch, cfg.max_epochs):
            lr = lr_at_epoch(cfg, epoch)
            order = rng.permutation(n)
            epoch_loss = 0.0
            epoch_correct = 0
            for start in range(0, n, cfg.batch_size):
                idx = order[start:start + cfg.batch_size]
                try:
                    grads, batch_loss, correct = _batch_step(
                        net, X, y, idx, cfg.loss, net.n_classes
                    )
                except NonFiniteError as exc:
                    raise TrainingDiverged(
                        f"epoch {epoch}: {exc}; try a smaller lr0"
                    ) from exc
                if not np.isfinite(batch_loss):
                    raise TrainingDiverged(
                        f"non-finite loss at epoch {epoch} "
                        f"(batch starting at {start}); try a smaller lr0"
                    )
                sgd_update(net, grads, lr)
                epoch_loss += batch_loss
                epoch_correct += correct
            row = {
                "epoch": epoch,
                "lr": lr,
                "train_loss": epoch_loss / n,
                "train_acc": epoch_correct / n,
                "val_acc": evaluate(net, X_val, y_val) if has_val else None,
            }
            history.append(row)
            if writer is not None:
                writer.writerow(_format_row(row))
                fh.flush()
            if verbose:
                msg = (f"epoch {epoch:3d}  lr {lr:.8g}  "
                       f"loss {row['train_loss']:.6f}  acc {row['train_acc']:.3f}")
                if has_val:
                    msg += f"  val {row['val_acc']:.3f}"
                print(msg)
            if on_epoch_end is not None:
                on_epoch_end(epoch, net, row, rng)
            if has_val:
                if row["val_acc"] > best_val:
                    best_val = row["val_acc"]
                    stale = 0
                else:
                    stale += 1
                    if stale >= cfg.patience:
                        break
    finally:
        if fh is not None:
            fh.close()
    return history


def _format_row(row):
    return [
        row["epoch"],
        f"{row['lr']:.10g}",
        f"{row['train_loss']:.8f}",
        f"{row['train_acc']:.6f}",
        "" if row["val_acc"] is None else f"{row['val_acc']:.6f}",
    ]
