"""scikit-learn style estimators wrapping the network, feature fusion and
the linear SVM stage.

The full fused-feature pipeline composes naturally::

    from sklearn.pipeline import make_pipeline
    clf = make_pipeline(
        PyraNetFeatures(preset="tiny", max_epochs=50),
        LinearSVMOneVsAll(C=1.0),
    )
    clf.fit(X_train, y_train)

``X`` is always a clip batch shaped (n, frames, height, width) with values
in [0, 1].
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin, clone

from .fusion import extract_features
from .presets import preset_topology
from .rng import Rng
from .layers import Network
from .training import TrainConfig, train
from .svm import svm_decision, svm_predict, svm_train
from .validation import check_clip_batch, check_labels

__all__ = ["PyraNet3DClassifier", "PyraNetFeatures", "LinearSVMOneVsAll"]


class PyraNet3DClassifier(BaseEstimator, ClassifierMixin):
    """Softmax-head classifier over the pyramidal 3D network.

    ``preset`` supplies the layer geometry; the input size is taken from
    the data and the class count from ``y``.  Training follows the plain
    SGD delta rule with the multiplicative learning-rate decay schedule.
    """

    def __init__(self, preset="ar", activation="lrelu", loss="ce",
                 lr0=0.00015, decay=0.9, decay_every=10, batch_size=20,
                 max_epochs=100, patience=10, val_fraction=0.0,
                 random_state=0, verbose=False):
        self.preset = preset
        self.activation = activation
        self.loss = loss
        self.lr0 = lr0
        self.decay = decay
        self.decay_every = decay_every
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.val_fraction = val_fraction
        self.random_state = random_state
        self.verbose = verbose

    def fit(self, X, y):
        X = check_clip_batch(X)
        y = check_labels(y)
        self.classes_ = np.unique(y)
        y_idx = np.searchsorted(self.classes_, y)
        n, t, h, w = X.shape
        topo = preset_topology(self.preset, classes=len(self.classes_),
                               activation=self.activation,
                               input_size=(w, h, t))
        self.network_ = Network(topo, rng=Rng(self.random_state))
        cfg = TrainConfig(
            loss=self.loss, lr0=self.lr0, decay=self.decay,
            decay_every=self.decay_every, batch_size=self.batch_size,
            max_epochs=self.max_epochs, patience=self.patience,
            seed=self.random_state,
        )
        X_val = y_val = None
        X_tr, y_tr = X, y_idx
        if self.val_fraction > 0:
            order = Rng(self.random_state).permutation(n)
            cut = max(1, int(round(self.val_fraction * n)))
            X_val, y_val = X[order[:cut]], y_idx[order[:cut]]
            X_tr, y_tr = X[order[cut:]], y_idx[order[cut:]]
        self.history_ = train(self.network_, X_tr, y_tr, cfg,
                              X_val=X_val, y_val=y_val, verbose=self.verbose)
        return self

    def predict_proba(self, X):
        self._check_fitted()
        X = check_clip_batch(X, self.network_.input_shape)
        out = np.empty((len(X), len(self.classes_)))
        for k, clip in enumerate(X):
            stack = np.ascontiguousarray(np.transpose(clip, (1, 2, 0)))
            _, post, _ = self.network_.forward(stack)
            out[k] = post
        return out

    def predict(self, X):
        self._check_fitted()
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]

    def _check_fitted(self):
        if not hasattr(self, "network_"):
            raise RuntimeError("estimator is not fitted; call fit first")


class PyraNetFeatures(BaseEstimator, TransformerMixin):
    """Fused features from the last normalization layer of a trained
    network.

    Either pass ``classifier`` (an unfitted :class:`PyraNet3DClassifier`
    cloned and trained during ``fit``; ``prefit=True`` reuses it as-is) or
    leave it None to train a default classifier defined by ``preset``.
    ``mode`` selects global concatenation ("global") or the per-set mean
    ("mean").
    """

    def __init__(self, classifier=None, mode="global", preset="ar",
                 max_epochs=100, random_state=0, prefit=False):
        self.classifier = classifier
        self.mode = mode
        self.preset = preset
        self.max_epochs = max_epochs
        self.random_state = random_state
        self.prefit = prefit

    def fit(self, X, y=None):
        if self.mode not in ("global", "mean"):
            raise ValueError(f"unknown fusion mode {self.mode!r}")
        if self.prefit:
            if self.classifier is None or not hasattr(self.classifier, "network_"):
                raise ValueError("prefit=True requires a fitted classifier")
            self.classifier_ = self.classifier
            return self
        base = self.classifier if self.classifier is not None else \
            PyraNet3DClassifier(preset=self.preset, max_epochs=self.max_epochs,
                                random_state=self.random_state)
        if y is None:
            raise ValueError("y is required to train the underlying network")
        self.classifier_ = clone(base).fit(X, y)
        return self

    def transform(self, X):
        if not hasattr(self, "classifier_"):
            raise RuntimeError("transformer is not fitted; call fit first")
        net = self.classifier_.network_
        X = check_clip_batch(X, net.input_shape)
        return extract_features(net, X, mode=self.mode)


class LinearSVMOneVsAll(BaseEstimator, ClassifierMixin):
    """One-vs-all linear SVM trained by dual coordinate descent."""

    def __init__(self, C=1.0, tol=1e-3, max_iter=1000, random_state=0):
        self.C = C
        self.tol = tol
        self.max_iter = max_iter
        self.random_state = random_state

    def fit(self, X, y):
        X = np.asarray(X, dtype=np.float64)
        y = check_labels(y)
        self.model_ = svm_train(X, y, c_reg=self.C, tol=self.tol,
                                max_iter=self.max_iter, seed=self.random_state)
        self.classes_ = self.model_.classes
        self.coef_ = self.model_.coef
        self.intercept_ = self.model_.intercept
        return self

    def decision_function(self, X):
        if not hasattr(self, "model_"):
            raise RuntimeError("estimator is not fitted; call fit first")
        return svm_decision(self.model_, X)

    def predict(self, X):
        if not hasattr(self, "model_"):
            raise RuntimeError("estimator is not fitted; call fit first")
        return svm_predict(self.model_, X)
