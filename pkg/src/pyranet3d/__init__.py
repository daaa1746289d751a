"""pyranet3d: spatio-temporal pyramidal neural network.

Position-oriented, partially-shared 3D correlation layers with weighted
temporal max pooling, hand-derived backpropagation trained by plain SGD,
feature fusion from the last normalization layer, and a one-vs-all linear
SVM stage.  Every gradient path is verified against a finite-difference
oracle (``pyranet3d.oracle.run_suite``).
"""

__version__ = "0.1.0"

from .activations import softmax
from .estimators import LinearSVMOneVsAll, PyraNet3DClassifier, PyraNetFeatures
from .geometry import GeometryError, LayerGeometry, output_shape, temporal_maps
from .layers import Corr3D, Dense, Network, Norm, Pool3D, ShapeChainError
from .presets import PRESETS, build_network, preset_topology
from .rng import Rng
from .training import TrainConfig, lr_at_epoch, train

__all__ = [
    "__version__",
    "softmax",
    "LinearSVMOneVsAll",
    "PyraNet3DClassifier",
    "PyraNetFeatures",
    "GeometryError",
    "LayerGeometry",
    "output_shape",
    "temporal_maps",
    "Corr3D",
    "Dense",
    "Network",
    "Norm",
    "Pool3D",
    "ShapeChainError",
    "PRESETS",
    "build_network",
    "preset_topology",
    "Rng",
    "TrainConfig",
    "lr_at_epoch",
    "train",
]
