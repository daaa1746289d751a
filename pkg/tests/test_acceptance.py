"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the lines.
"""

import time

import numpy as np
import pytest

from pyranet3d.cli import main
from pyranet3d.clips import build_manifest, write_manifest, write_pgm
from pyranet3d.fusion import extract_features, fuse_global, fuse_mean
from pyranet3d.geometry import LayerGeometry
from pyranet3d.layers import Corr3D, Network, Pool3D
from pyranet3d.oracle import naive_corr3d, run_suite
from pyranet3d.presets import build_network, preset_topology
from pyranet3d.rng import Rng
from pyranet3d.svm import svm_predict, svm_train
from pyranet3d.synthetic import make_moving_bars
from pyranet3d.training import TrainConfig, evaluate, lr_at_epoch, train
from pyranet3d.checkpoint import load_checkpoint, save_checkpoint


def _report(name, ok, detail=""):
    line = f"[{'PASS' if ok else 'FAIL'}] {name}"
    if detail:
        line += f" ({detail})"
    print(line)
    assert ok, line


def test_shape_reproduction():
    t0 = time.time()
    ar = build_network("ar", seed=0)
    dsr = build_network("dsr", classes=14, seed=0)
    ok = ar.shape_table() == [
        ("corr1", (61, 45, 11, 3)), ("pool3", (30, 22, 9, 3)),
        ("corr5", (27, 19, 7, 3)), ("fc7", (10773, 6)),
    ] and dsr.shape_table() == [
        ("corr1", (77, 97, 11, 3)), ("pool3", (38, 48, 9, 3)),
        ("corr5", (35, 45, 7, 3)), ("fc7", (33075, 14)),
    ]
    elapsed = time.time() - t0
    _report("shape reproduction: both presets match the reference table",
            ok and elapsed < 1.0, f"{elapsed:.2f}s")


def test_parameter_audit(capsys):
    t0 = time.time()
    net = build_network("dsr", classes=14, seed=0)
    count = net.parameter_count()
    within = abs(count - 0.83e6) / 0.83e6 <= 0.005
    assert main(["info", "--preset", "dsr", "--classes", "14"]) == 0
    out = capsys.readouterr().out
    noted = "4 bytes/parameter" in out and "14.58" in out
    elapsed = time.time() - t0
    with capsys.disabled():
        _report("parameter audit: dsr preset with 14 classes",
                count == 832_883 and within and noted and elapsed < 1.0,
                f"{count:,} params, {elapsed:.2f}s")


def test_gradient_suite():
    t0 = time.time()
    reports = run_suite()
    required = {"corr", "pool", "norm", "fc", "output"}
    names = {r.layer for r in reports}
    composed = [r for r in reports if r.layer.startswith("net.")]
    ok = (required <= names and len(composed) >= 4
          and all(r.passed(1e-4) for r in reports))
    worst = max(r.max_rel_err for r in reports)
    elapsed = time.time() - t0
    _report("gradient suite: all layers and composed net < 1e-4 vs central FD",
            ok and elapsed < 120.0, f"max rel err {worst:.2e}, {elapsed:.1f}s")


def test_oracle_equivalence():
    t0 = time.time()
    rng = Rng(123)
    exact = True
    for _ in range(50):
        r = int(rng.integers(2, 5))
        h = int(rng.integers(r, 9))
        w = int(rng.integers(r, 9))
        depth = int(rng.integers(1, 4))
        m = int(rng.integers(depth, 6))
        overlap = int(rng.integers(0, r))
        sets = int(rng.integers(1, 4))
        s_in = sets if rng.integers(0, 2) else 1
        geom = LayerGeometry(r=r, overlap=overlap, depth=depth)
        act = ("identity", "tanh", "lrelu")[int(rng.integers(0, 3))]
        layer = Corr3D("corr", (h, w, m, s_in), geom, sets, act, rng=rng)
        layer.weights = rng.uniform(-1, 1, layer.weights.shape).astype(np.float32)
        layer.biases = rng.uniform(-0.5, 0.5, layer.biases.shape).astype(np.float32)
        x = rng.uniform(-1, 1, (h, w, m, s_in)).astype(np.float32)
        y, cache = layer.forward(x)
        y_ref, pre_ref = naive_corr3d(x, layer.weights, layer.biases, geom, act)
        exact &= np.array_equal(y, y_ref) and np.array_equal(cache.preact, pre_ref)
    elapsed = time.time() - t0
    _report("oracle equivalence: corr3d_forward == naive loops exactly, 50 runs",
            exact and elapsed < 10.0, f"{elapsed:.1f}s")


def test_fusion_identities():
    t0 = time.time()
    ar_tap = build_network("ar", seed=0).layers[-2].out_shape
    dsr_tap = build_network("dsr", classes=14, seed=0).layers[-2].out_shape
    ok = (int(np.prod(ar_tap)) == 10773
          and int(np.prod(ar_tap[:3])) == 3591
          and int(np.prod(dsr_tap)) == 33075)
    rng = Rng(9)
    for _ in range(20):
        stack = rng.uniform(-2, 2, (5, 4, 3, 3)).astype(np.float32)
        g = fuse_global(stack)
        blockwise = g.reshape(3, -1).mean(axis=0, dtype=np.float64).astype(np.float32)
        ok &= np.array_equal(fuse_mean(stack), blockwise)
        ok &= len(g) == 5 * 4 * 3 * 3 and len(fuse_mean(stack)) == 5 * 4 * 3
    elapsed = time.time() - t0
    _report("fusion identities: lengths 10773/3591/33075, mean == blockwise mean",
            ok and elapsed < 1.0, f"{elapsed:.2f}s")


def test_pool_routing():
    t0 = time.time()
    rng = Rng(31)
    geom = LayerGeometry(r=2, overlap=0, depth=3)
    windows = 0
    ok = True
    while windows < 1000:
        pool = Pool3D("pool", (8, 8, 6, 2), geom, "tanh", rng=rng)
        x = rng.uniform(0, 1, (8, 8, 6, 2)).astype(np.float32)
        y, cache = pool.forward(x)
        d_y = rng.uniform(0.5, 1.5, y.shape)
        d_x, _ = pool.backward(d_y, cache)
        is_arg = np.zeros(x.shape, dtype=bool)
        s_grid = np.broadcast_to(np.arange(2), cache.arg_i.shape)
        is_arg[cache.arg_i, cache.arg_j, cache.arg_m, s_grid] = True
        ok &= float(np.abs(d_x[~is_arg]).sum()) == 0.0
        windows += int(np.prod(y.shape))
    # tie window: constant input routes to the first scan-order coordinate
    tie = Pool3D("pool", (2, 2, 3, 1), geom, "identity")
    xt = np.full((2, 2, 3, 1), 0.5, dtype=np.float32)
    yt, cache = tie.forward(xt)
    d_x, _ = tie.backward(np.ones(yt.shape), cache)
    expect = np.zeros_like(d_x)
    expect[0, 0, 0, 0] = 1.0
    ok &= np.array_equal(d_x, expect)
    elapsed = time.time() - t0
    _report("pool routing: zero off-argmax mass over 1000+ windows; ties to "
            "first scan index", ok and elapsed < 10.0,
            f"{windows} windows, {elapsed:.1f}s")


def test_synthetic_learning():
    t0 = time.time()
    X, y = make_moving_bars(n_per_class=27, seed=11)
    X_tr, y_tr = X[:60], y[:60]
    X_te, y_te = X[60:80], y[60:80]
    topo = preset_topology("ar", classes=3, activation="lrelu",
                           input_size=(16, 12, 13))
    net = Network(topo, rng=Rng(0))
    cfg = TrainConfig(loss="ce", lr0=0.00015 * 10, decay=0.9, decay_every=10,
                      batch_size=10, max_epochs=40, patience=10 ** 9, seed=0)
    history = train(net, X_tr, y_tr, cfg)
    head_acc = max(row["train_acc"] for row in history)
    reached = next((row["epoch"] for row in history
                    if row["train_acc"] >= 0.9), None)
    feats_tr = extract_features(net, X_tr, mode="global")
    model = svm_train(feats_tr, y_tr, c_reg=1.0, tol=1e-3)
    svm_acc = float((svm_predict(model, feats_tr) == y_tr).mean())
    ok = (reached is not None and reached < 200
          and svm_acc >= head_acc - 0.05)
    elapsed = time.time() - t0
    _report("synthetic learning: head >= 90% within 200 epochs, fused SVM "
            "within 5 points",
            ok and elapsed < 300.0,
            f"head {head_acc:.2f} at epoch {reached}, svm {svm_acc:.2f}, "
            f"test acc {evaluate(net, X_te, y_te):.2f}, {elapsed:.0f}s")


def test_schedule_values():
    ar = TrainConfig(lr0=0.00015, decay=0.9, decay_every=10)
    dsr = TrainConfig(lr0=0.000015, decay=0.9, decay_every=4)
    ok = all(lr_at_epoch(ar, e) == 0.00015 for e in range(10))
    ok &= lr_at_epoch(ar, 10) == 0.00015 * 0.9
    ok &= lr_at_epoch(dsr, 0) == 0.000015
    ok &= lr_at_epoch(dsr, 4) == 0.000015 * 0.9
    _report("schedule values: 0.00015/0.000135 (ar), 0.000015/0.0000135 (dsr)",
            ok)


@pytest.fixture()
def cli_dataset(tmp_path):
    rng = Rng(0)
    for cls, sign in (("right", 1), ("left", -1)):
        for v in range(3):
            vdir = tmp_path / "data" / cls / f"vid{v}"
            vdir.mkdir(parents=True)
            phase = int(rng.integers(0, 16))
            for t in range(26):
                frame = np.zeros((12, 16), dtype=np.float32)
                frame[:, (phase + sign * t) % 16] = 1.0
                write_pgm(vdir / f"f{t:03d}.pgm", frame)
    manifest = build_manifest(tmp_path / "data")
    man_path = tmp_path / "manifest.tsv"
    write_manifest(man_path, manifest)
    cfg = tmp_path / "run.ini"
    cfg.write_text(f"""\
[model]
preset = ar
classes = 2
input_width = 16
input_height = 12
input_frames = 13

[train]
lr0 = 0.002
batch_size = 3
max_epochs = 2
val_fraction = 0

[data]
manifest = {man_path}

[run]
seed = 5
""")
    return cfg


def test_determinism(cli_dataset, tmp_path):
    out1 = tmp_path / "r1"
    out2 = tmp_path / "r2"
    for out in (out1, out2):
        assert main(["train", "--config", str(cli_dataset), "--out", str(out),
                     "--deterministic"]) == 0
    ok = ((out1 / "metrics.csv").read_bytes() == (out2 / "metrics.csv").read_bytes()
          and (out1 / "model.3dpn").read_bytes() == (out2 / "model.3dpn").read_bytes()
          and (out1 / "epoch_0001.3dpn").read_bytes()
          == (out2 / "epoch_0001.3dpn").read_bytes())
    _report("determinism: byte-identical metrics CSV and checkpoints", ok)


def test_checkpoint_roundtrip(tmp_path):
    net = build_network("tiny", seed=99)
    rng = Rng(2)
    clips = [rng.uniform(0, 1, (8, 10, 5)).astype(np.float32)
             for _ in range(3)]
    before = [net.forward(c)[0] for c in clips]
    path = tmp_path / "model.3dpn"
    save_checkpoint(path, net, {"epoch": 1, "lr": 1e-4})
    net2, _ = load_checkpoint(path)
    after = [net2.forward(c)[0] for c in clips]
    ok = all(np.array_equal(a, b) for a, b in zip(before, after))
    _report("checkpoint round-trip: forward outputs bit-identical", ok)
