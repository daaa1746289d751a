import numpy as np
import pytest

from pyranet3d.layers import Network
from pyranet3d.presets import preset_topology
from pyranet3d.rng import Rng
from pyranet3d.synthetic import make_moving_bars
from pyranet3d.training import TrainConfig, train


@pytest.fixture(scope="session")
def moving_bars():
    """81 moving-bar clips: 60 train / 20 test / 1 spare, fixed seed."""
    X, y = make_moving_bars(n_per_class=27, seed=11)
    return (X[:60], y[:60]), (X[60:80], y[60:80])


@pytest.fixture(scope="session")
def toy_trained(moving_bars):
    """A small network trained on the moving-bar task (shared; read-only)."""
    (X_tr, y_tr), _ = moving_bars
    topo = preset_topology("ar", classes=3, activation="lrelu",
                           input_size=(16, 12, 13))
    net = Network(topo, rng=Rng(0))
    cfg = TrainConfig(loss="ce", lr0=0.0015, decay=0.9, decay_every=10,
                      batch_size=10, max_epochs=25, patience=10 ** 9, seed=0)
    history = train(net, X_tr, y_tr, cfg)
    return net, history


def rand_stack(rng, h, w, m, s, lo=0.0, hi=1.0, dtype=np.float32):
    return rng.uniform(lo, hi, (h, w, m, s)).astype(dtype)
