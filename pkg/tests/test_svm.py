import numpy as np
import numpy.testing as npt
import pytest

from pyranet3d.rng import Rng
from pyranet3d.svm import (hinge_objective, load_svm, save_svm,
                           svm_predict, svm_train)


def reference_binary_svm(X, y, c_reg, gap_tol=1e-10, max_sweeps=200_000):
    """Exhaustive dual coordinate descent, written independently of the
    production solver: recomputes the weight vector from the duals at every
    step and runs to a 1e-10 duality gap."""
    Xb = np.hstack([np.asarray(X, np.float64),
                    np.ones((len(X), 1))])
    n = len(Xb)
    alpha = np.zeros(n)

    def weights():
        w = np.zeros(Xb.shape[1])
        for k in range(n):
            w += alpha[k] * y[k] * Xb[k]
        return w

    for _ in range(max_sweeps):
        for i in range(n):
            w = weights()
            grad = y[i] * (Xb[i] @ w) - 1.0
            denom = Xb[i] @ Xb[i]
            if denom == 0.0:
                continue
            alpha[i] = min(max(alpha[i] - grad / denom, 0.0), c_reg)
        w = weights()
        primal = 0.5 * (w @ w) + c_reg * np.maximum(1.0 - y * (Xb @ w), 0).sum()
        dual = alpha.sum() - 0.5 * (w @ w)
        if primal - dual <= gap_tol:
            break
    return w, primal


def test_separable_two_point_problem():
    X = np.array([[0.0, 0.0], [1.0, 1.0]])
    y = np.array([0, 1])
    model = svm_train(X, y, c_reg=1.0, tol=1e-6)
    npt.assert_array_equal(svm_predict(model, X), y)


def test_xor_is_not_linearly_separable():
    X = np.array([[0, 0], [0, 1], [1, 0], [1, 1]], dtype=float)
    y = np.array([0, 1, 1, 0])
    model = svm_train(X, y, c_reg=100.0, tol=1e-6, max_iter=5000)
    acc = (svm_predict(model, X) == y).mean()
    assert acc <= 0.75


def test_three_gaussian_blobs():
    rng = Rng(0)
    centers = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    X = np.vstack([rng.normal(0, 0.1, (50, 2)) + c for c in centers])
    y = np.repeat([0, 1, 2], 50)
    model = svm_train(X, y, c_reg=1.0, tol=1e-4)
    acc = (svm_predict(model, X) == y).mean()
    assert acc >= 0.99


def test_objective_matches_reference_solver():
    """Production dual CD reaches the same hinge objective as the 1e-10
    reference on small instances, within the training tolerance."""
    rng = Rng(1)
    for trial in range(3):
        n = int(rng.integers(10, 40))
        X = rng.normal(0, 1.0, (n, 4))
        y_multi = rng.integers(0, 3, n)
        c_reg, tol = 0.5, 1e-6
        model = svm_train(X, y_multi, c_reg=c_reg, tol=tol, max_iter=20000)
        for k, cls in enumerate(model.classes):
            target = np.where(y_multi == cls, 1.0, -1.0)
            _, ref_obj = reference_binary_svm(X, target, c_reg)
            got = hinge_objective(X, target, model.coef[k],
                                  model.intercept[k], c_reg)
            assert got - ref_obj <= tol + 1e-8
            assert got >= ref_obj - 1e-8  # reference is the minimum


def test_prediction_matches_bruteforce_decision_loop():
    rng = Rng(2)
    X = rng.normal(0, 1, (30, 5))
    y = rng.integers(0, 4, 30)
    model = svm_train(X, y, c_reg=1.0, tol=1e-4)
    Q = rng.normal(0, 1, (10, 5))
    preds = svm_predict(model, Q)
    for row, p in zip(Q, preds):
        best_c, best_v = None, -np.inf
        for k, cls in enumerate(model.classes):
            v = float(model.coef[k] @ row + model.intercept[k])
            if v > best_v:
                best_c, best_v = cls, v
        assert p == best_c


def test_decision_scaling_keeps_argmax():
    rng = Rng(3)
    X = rng.normal(0, 1, (20, 3))
    y = rng.integers(0, 3, 20)
    model = svm_train(X, y, c_reg=1.0, tol=1e-4)
    before = svm_predict(model, X)
    model.coef *= 7.5
    model.intercept *= 7.5
    npt.assert_array_equal(svm_predict(model, X), before)


def test_tie_breaks_to_lowest_class_index():
    from pyranet3d.svm import SvmModel

    model = SvmModel(classes=np.array([0, 1, 2]),
                     coef=np.zeros((3, 2)), intercept=np.zeros(3),
                     c_reg=1.0, tol=1e-3)
    assert svm_predict(model, np.array([[1.0, 2.0]]))[0] == 0


def test_single_class_rejected():
    with pytest.raises(ValueError):
        svm_train(np.zeros((5, 2)), np.zeros(5, dtype=int))


def test_nonfinite_features_rejected():
    X = np.zeros((4, 2))
    X[0, 0] = np.inf
    with pytest.raises(ValueError):
        svm_train(X, np.array([0, 1, 0, 1]))


def test_model_roundtrip(tmp_path):
    rng = Rng(4)
    X = rng.normal(0, 1, (20, 3))
    y = rng.integers(0, 2, 20)
    model = svm_train(X, y)
    path = tmp_path / "svm.npz"
    save_svm(path, model)
    back = load_svm(path)
    npt.assert_array_equal(back.coef, model.coef)
    npt.assert_array_equal(back.intercept, model.intercept)
    npt.assert_array_equal(svm_predict(back, X), svm_predict(model, X))
