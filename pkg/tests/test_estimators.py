import numpy as np
import numpy.testing as npt
import pytest
from sklearn.base import clone
from sklearn.pipeline import make_pipeline

from pyranet3d.estimators import (LinearSVMOneVsAll, PyraNet3DClassifier,
                                  PyraNetFeatures)
from pyranet3d.rng import Rng
from pyranet3d.synthetic import make_moving_bars


@pytest.fixture(scope="module")
def small_bars():
    X, y = make_moving_bars(n_per_class=6, width=10, height=8, frames=5,
                            seed=3)
    return X, y


def _fast_clf(**kw):
    base = dict(preset="tiny", lr0=0.002, batch_size=6, max_epochs=8,
                random_state=0)
    base.update(kw)
    return PyraNet3DClassifier(**base)


def test_classifier_fit_predict(small_bars):
    X, y = small_bars
    clf = _fast_clf().fit(X, y)
    preds = clf.predict(X)
    assert preds.shape == (len(X),)
    assert set(preds) <= set(clf.classes_)
    proba = clf.predict_proba(X)
    npt.assert_allclose(proba.sum(axis=1), 1.0, atol=1e-6)
    assert clf.score(X, y) >= 1.0 / 3.0


def test_classifier_is_sklearn_cloneable(small_bars):
    clf = _fast_clf(lr0=0.123)
    params = clf.get_params()
    assert params["lr0"] == 0.123
    twin = clone(clf)
    assert twin.get_params() == params


def test_classifier_deterministic_under_seed(small_bars):
    X, y = small_bars
    p1 = _fast_clf().fit(X, y).predict_proba(X)
    p2 = _fast_clf().fit(X, y).predict_proba(X)
    npt.assert_array_equal(p1, p2)


def test_classifier_validates_input(small_bars):
    X, y = small_bars
    clf = _fast_clf().fit(X, y)
    with pytest.raises(ValueError):
        clf.predict(X[:, :3])  # wrong frame count
    with pytest.raises(ValueError):
        _fast_clf().fit(X[0], y)  # not a batch
    with pytest.raises(RuntimeError):
        _fast_clf().predict(X)  # unfitted


def test_classifier_preserves_label_values(small_bars):
    X, y = small_bars
    shifted = y * 5 + 2  # labels 2, 7, 12
    clf = _fast_clf().fit(X, shifted)
    npt.assert_array_equal(clf.classes_, [2, 7, 12])
    assert set(clf.predict(X)) <= {2, 7, 12}


def test_feature_transformer_modes(small_bars):
    X, y = small_bars
    feats = PyraNetFeatures(classifier=_fast_clf(), mode="global").fit(X, y)
    F = feats.transform(X)
    tap = feats.classifier_.network_.layers[-2].out_shape
    assert F.shape == (len(X), int(np.prod(tap)))
    fm = PyraNetFeatures(classifier=_fast_clf(), mode="mean").fit(X, y)
    FM = fm.transform(X)
    assert FM.shape[1] == F.shape[1] // tap[3]


def test_feature_transformer_prefit(small_bars):
    X, y = small_bars
    clf = _fast_clf().fit(X, y)
    feats = PyraNetFeatures(classifier=clf, prefit=True).fit(X)
    assert feats.classifier_ is clf
    with pytest.raises(ValueError):
        PyraNetFeatures(classifier=_fast_clf(), prefit=True).fit(X, y)


def test_full_pipeline_fused_features_plus_svm(small_bars):
    X, y = small_bars
    pipe = make_pipeline(
        PyraNetFeatures(classifier=_fast_clf(max_epochs=12), mode="global"),
        LinearSVMOneVsAll(C=1.0),
    )
    pipe.fit(X, y)
    assert pipe.score(X, y) >= 0.5


def test_svm_estimator_api():
    rng = Rng(1)
    X = np.vstack([rng.normal(0, 0.1, (30, 3)) + c
                   for c in ([0, 0, 0], [1, 1, 0])])
    y = np.repeat([0, 1], 30)
    svc = LinearSVMOneVsAll(C=1.0, tol=1e-5).fit(X, y)
    assert svc.coef_.shape == (2, 3)
    assert svc.decision_function(X).shape == (60, 2)
    assert svc.score(X, y) == 1.0
    twin = clone(svc)
    assert twin.get_params()["C"] == 1.0
