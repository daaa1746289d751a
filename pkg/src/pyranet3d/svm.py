"""One-vs-all linear SVM trained by dual coordinate descent.

Each class gets a binary L1-loss (hinge) machine.  With the intercept
folded into the weight vector as an extra constant feature (and therefore
regularized, liblinear-style), the primal objective per machine is::

    P(w) = 0.5 * ||w||^2 + C * sum_i max(0, 1 - y_i * w.x_i)

whose dual is a box-constrained quadratic minimized one coordinate at a
time.  Training stops when the duality gap ``P(w) - D(alpha)`` drops to
``tol`` (so any solver reaching the same objective is equivalent — the
algorithm itself is not part of the contract).  Prediction is the argmax
of the per-class decision values, ties to the lowest class index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rng import Rng

__all__ = ["SvmModel", "svm_train", "svm_decision", "svm_predict",
           "save_svm", "load_svm"]


@dataclass
class SvmModel:
    classes: np.ndarray        # class indices, sorted
    coef: np.ndarray           # (n_classes, n_features)
    intercept: np.ndarray      # (n_classes,)
    c_reg: float
    tol: float


def _dual_cd_binary(X, y, c_reg, tol, max_iter, rng):
    """Minimize the hinge dual for one binary machine.

    ``X`` (n, d) float64 already includes the constant bias column;
    ``y`` in {-1, +1}.  Returns the primal weight vector.
    """
    n = X.shape[0]
    alpha = np.zeros(n)
    w = np.zeros(X.shape[1])
    sq = np.einsum("ij,ij->i", X, X)
    for _ in range(max_iter):
        for i in rng.permutation(n):
            if sq[i] == 0.0:
                continue
            margin = y[i] * (X[i] @ w)
            new = min(max(alpha[i] - (margin - 1.0) / sq[i], 0.0), c_reg)
            if new != alpha[i]:
                w += (new - alpha[i]) * y[i] * X[i]
                alpha[i] = new
        if _duality_gap(X, y, w, alpha, c_reg) <= tol:
            break
    return w


def _duality_gap(X, y, w, alpha, c_reg):
    margins = 1.0 - y * (X @ w)
    primal = 0.5 * (w @ w) + c_reg * np.maximum(margins, 0.0).sum()
    dual = alpha.sum() - 0.5 * (w @ w)
    return primal - dual


def hinge_objective(X, y, w, b, c_reg):
    """Primal objective with the regularized intercept convention."""
    X = np.asarray(X, np.float64)
    margins = 1.0 - y * (X @ w + b)
    return 0.5 * (w @ w + b * b) + c_reg * np.maximum(margins, 0.0).sum()


def svm_train(features, labels, c_reg=1.0, tol=1e-3, max_iter=1000,
              seed=0) -> SvmModel:
    """Fit one-vs-all linear machines on fused feature vectors."""
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels)
    if X.ndim != 2:
        raise ValueError("features must be a 2-D array")
    if not np.isfinite(X).all():
        raise ValueError("features contain non-finite values")
    classes = np.unique(y)
    if classes.size < 2:
        raise ValueError("need at least two classes to train an SVM")
    Xb = np.hstack([X, np.ones((X.shape[0], 1))])
    coef = np.zeros((classes.size, X.shape[1]))
    intercept = np.zeros(classes.size)
    for k, cls in enumerate(classes):
        target = np.where(y == cls, 1.0, -1.0)
        w = _dual_cd_binary(Xb, target, c_reg, tol, max_iter, Rng(seed + k))
        coef[k] = w[:-1]
        intercept[k] = w[-1]
    return SvmModel(classes=classes, coef=coef, intercept=intercept,
                    c_reg=c_reg, tol=tol)


def svm_decision(model: SvmModel, features) -> np.ndarray:
    X = np.asarray(features, dtype=np.float64)
    if X.shape[-1] != model.coef.shape[1]:
        raise ValueError(
            f"feature length {X.shape[-1]} does not match model "
            f"({model.coef.shape[1]})"
        )
    return X @ model.coef.T + model.intercept


def svm_predict(model: SvmModel, features) -> np.ndarray:
    """Predicted class indices; argmax of the decision values (first /
    lowest class index wins ties)."""
    scores = svm_decision(model, features)
    return model.classes[np.argmax(scores, axis=-1)]


def save_svm(path, model: SvmModel):
    np.savez(path, classes=model.classes, coef=model.coef,
             intercept=model.intercept,
             c_reg=np.float64(model.c_reg), tol=np.float64(model.tol))


def load_svm(path) -> SvmModel:
    data = np.load(path)
    return SvmModel(classes=data["classes"], coef=data["coef"],
                    intercept=data["intercept"],
                    c_reg=float(data["c_reg"]), tol=float(data["tol"]))
