"""fsnet: a self-contained numpy micro-framework for joint frequency- and
spatial-domain learning on dense prediction tasks.

The package provides a tape-based autodiff core over rank-4 tensors, a
half-spectrum DFT pair with exact adjoints, frequency/convolution/fusion
building blocks, an encoder-decoder network with depth, segmentation and
ego-motion heads, the full self-supervised depth loss stack, and a toy
training harness with synthetic scenes and analytic ground truth.
"""

from .tensor import Parameter, ShapeError, Tensor
from .network import DepthNet, NetworkConfig, PoseNet, SegNet
from .geometry import CameraIntrinsics
from .train import TrainConfig, train_depth, train_seg

__version__ = "0.1.0"

__all__ = [
    "CameraIntrinsics", "DepthNet", "NetworkConfig", "Parameter", "PoseNet",
    "SegNet", "ShapeError", "Tensor", "TrainConfig", "train_depth",
    "train_seg", "__version__",
]
