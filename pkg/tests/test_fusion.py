import numpy as np
import numpy.testing as npt
import pytest

from pyranet3d.fusion import (extract_features, fuse_global, fuse_mean,
                              fused_length, read_features, write_features)
from pyranet3d.layers import flatten_stack, unflatten_stack
from pyranet3d.presets import build_network
from pyranet3d.rng import Rng


def test_fused_lengths_both_presets():
    assert fused_length((19, 27, 7, 3), "global") == 10773
    assert fused_length((19, 27, 7, 3), "mean") == 3591
    assert fused_length((45, 35, 7, 3), "global") == 33075


def test_global_fusion_length_matches_network_tap():
    net = build_network("ar", seed=0)
    tap_shape = net.layers[-2].out_shape  # last norm before the head
    assert fused_length(tap_shape, "global") == 10773
    assert fused_length(tap_shape, "mean") == 3591


def test_extract_from_ar_preset_clip():
    """A real clip through the ar network yields a 10773-long vector."""
    net = build_network("ar", seed=2)
    clip = Rng(0).uniform(0, 1, (13, 48, 64)).astype(np.float32)
    feats = extract_features(net, clip[None], mode="global")
    assert feats.shape == (1, 10773)
    fm = extract_features(net, clip[None], mode="mean")
    assert fm.shape == (1, 3591)
    npt.assert_array_equal(
        fm[0],
        feats[0].reshape(3, -1).mean(axis=0, dtype=np.float64)
        .astype(np.float32),
    )


def test_flatten_reshape_roundtrip():
    rng = Rng(1)
    stack = rng.uniform(-1, 1, (5, 4, 3, 2)).astype(np.float32)
    npt.assert_array_equal(unflatten_stack(flatten_stack(stack), stack.shape),
                           stack)


def test_fuse_mean_equals_blockwise_mean_exactly():
    rng = Rng(2)
    for _ in range(10):
        stack = rng.uniform(-2, 2, (6, 5, 4, 3)).astype(np.float32)
        g = fuse_global(stack)
        blocks = g.reshape(3, -1)
        expect = blocks.mean(axis=0, dtype=np.float64).astype(np.float32)
        npt.assert_array_equal(fuse_mean(stack), expect)


def test_fuse_mean_identical_sets_equals_single_set():
    rng = Rng(3)
    one = rng.uniform(-1, 1, (4, 4, 2, 1)).astype(np.float32)
    stack = np.repeat(one, 3, axis=3)
    npt.assert_allclose(fuse_mean(stack), fuse_global(one), rtol=1e-6)


def test_fuse_mean_two_sets_against_direct_loop():
    rng = Rng(4)
    stack = rng.uniform(-1, 1, (3, 4, 2, 2)).astype(np.float32)
    got = fuse_mean(stack)
    v1 = flatten_stack(stack[:, :, :, 0:1]).astype(np.float64)
    v2 = flatten_stack(stack[:, :, :, 1:2]).astype(np.float64)
    npt.assert_allclose(got, ((v1 + v2) / 2).astype(np.float32), rtol=1e-6)


def test_fuse_global_order_is_set_major():
    stack = np.arange(2 * 2 * 2 * 2, dtype=np.float32).reshape(2, 2, 2, 2)
    vec = fuse_global(stack)
    expect = []
    for s in range(2):
        for m in range(2):
            for i in range(2):
                for j in range(2):
                    expect.append(stack[i, j, m, s])
    npt.assert_array_equal(vec, np.array(expect, np.float32))


def test_extract_features_deterministic_and_mode_consistent(toy_trained,
                                                            moving_bars):
    net, _ = toy_trained
    (X_tr, _), _ = moving_bars
    X = X_tr[:4]
    f1 = extract_features(net, X, mode="global")
    f2 = extract_features(net, X, mode="global")
    npt.assert_array_equal(f1, f2)
    fm = extract_features(net, X, mode="mean")
    sets = net.layers[-2].out_shape[3]
    npt.assert_array_equal(
        fm,
        f1.reshape(len(X), sets, -1).mean(axis=1, dtype=np.float64)
        .astype(np.float32),
    )


def test_feature_file_roundtrip(tmp_path):
    rng = Rng(5)
    feats = rng.uniform(-3, 3, (7, 21)).astype(np.float32)
    labels = rng.integers(0, 3, 7)
    path = tmp_path / "feats.3dpnf"
    write_features(path, feats, labels, "global")
    back, lab, mode = read_features(path)
    assert mode == "global"
    npt.assert_array_equal(back, feats)  # 9 significant digits round-trip f32
    npt.assert_array_equal(lab, labels)
    with open(path) as fh:
        assert fh.readline() == "3DPNF 1 F 21\n"


def test_feature_file_rejects_garbage(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("not a header\n")
    with pytest.raises(ValueError):
        read_features(path)
    path.write_text("3DPNF 1 F 3\n0,1.0,2.0\n")
    with pytest.raises(ValueError):
        read_features(path)  # record shorter than the declared length
