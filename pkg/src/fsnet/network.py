"""Assembly of the four-stage encoder / four-stage decoder network with
three skip connections, plus the depth, segmentation and ego-motion heads
and parameter accounting.

Channel ladder (c = base width): encoder stages output c, 2c, 4c, 8c with
a 3x3/2 maxpool after the first three; the decoder mirrors back down to c.
Each decoder stage except the last fuses its block output, upsamples, and
concatenates the matching encoder skip before a second fusion layer.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import ops
from .blocks import ConvSiluBN, JointBlock, JointBlockSpec, Module, PlainConv
from .tensor import (Parameter, ShapeError, Tensor, concat_channels,
                     reduce_mean, sigmoid)

BYTES_PER_PARAM = 4  # accounting matches 32-bit training precision


@dataclass
class NetworkConfig:
    c_base: int = 16                # 16 for the S variant, 32 for L
    in_channels: int = 3            # 9 for the pose backbone (3 stacked frames)
    bottleneck_dim: int = 64
    padding_mode: str = "reflect"
    freq_layers: int = 2            # global:local layer ratio, 2:4
    conv_layers: int = 4
    num_classes: int = 4
    min_depth: float = 0.1
    max_depth: float = 100.0
    # constant pre-sigmoid offset of the disparity head. A negative value
    # starts the network in the far field (low disparity); under-estimated
    # disparity warps less than the true flow, so the reconstruction still
    # beats the static-frame comparison and the auto-mask stays open. A
    # mid-range start over-warps far pixels, they fail that comparison at
    # step 0, and — masked pixels receiving no gradient — never recover.
    disp_shift: float = -2.5
    pose_scale: float = 0.01
    dtype: type = np.float32

    @classmethod
    def variant(cls, name: str, **kw) -> "NetworkConfig":
        widths = {"S": 16, "L": 32}
        if name not in widths:
            raise ValueError(f"unknown variant {name!r}; expected S or L")
        return cls(c_base=widths[name], **kw)


class Encoder(Module):
    def __init__(self, cfg: NetworkConfig, rng):
        c = cfg.c_base
        mk = lambda i, o: JointBlock(
            JointBlockSpec(i, o, cfg.freq_layers, cfg.conv_layers, cfg.bottleneck_dim),
            rng, cfg.padding_mode, cfg.dtype)
        self.stages = [mk(cfg.in_channels, c), mk(c, 2 * c), mk(2 * c, 4 * c),
                       mk(4 * c, 8 * c)]

    def __call__(self, x: Tensor):
        """Returns (bottom features, skip list of the first three stages)."""
        skips = []
        for i, stage in enumerate(self.stages):
            x = stage(x)
            if i < 3:
                skips.append(x)
                x = ops.maxpool_3x3_s2(x)
        return x, skips


class Decoder(Module):
    def __init__(self, cfg: NetworkConfig, rng):
        c = cfg.c_base
        mk = lambda i, o: JointBlock(
            JointBlockSpec(i, o, cfg.freq_layers, cfg.conv_layers, cfg.bottleneck_dim),
            rng, cfg.padding_mode, cfg.dtype)
        fuse = lambda i, o: ConvSiluBN(i, o, 3, rng, cfg.padding_mode, cfg.dtype)
        self.stages = [mk(8 * c, 4 * c), mk(4 * c, 2 * c), mk(2 * c, c), mk(c, c)]
        # post-skip fusion layers: concat(up(x), skip) -> stage output width
        self.skip_fuse = [fuse(8 * c, 4 * c), fuse(4 * c, 2 * c), fuse(2 * c, c)]

    def __call__(self, x: Tensor, skips):
        for i, stage in enumerate(self.stages[:3]):
            x = stage(x)
            x = ops.upsample2x(x)
            x = self.skip_fuse[i](concat_channels(x, skips[2 - i]))
        return self.stages[3](x)


class Backbone(Module):
    """Encoder-decoder trunk producing full-resolution c-channel features."""

    def __init__(self, cfg: NetworkConfig, rng):
        self.cfg = cfg
        self.encoder = Encoder(cfg, rng)
        self.decoder = Decoder(cfg, rng)

    def __call__(self, x: Tensor) -> Tensor:
        n, c, h, w = x.shape
        if h % 8 or w % 8:
            raise ShapeError(f"input height/width must be divisible by 8, got {x.shape}")
        bottom, skips = self.encoder(x)
        return self.decoder(bottom, skips)

    def stage_details(self, x: Tensor):
        """Run the trunk while capturing each stage's (global, local, fused)
        branch outputs; returns a list of eight such triples, encoder
        stages first."""
        details = []
        skips = []
        for i, stage in enumerate(self.encoder.stages):
            g, l, fused = stage.forward_detail(x)
            details.append((g, l, fused))
            x = fused
            if i < 3:
                skips.append(x)
                x = ops.maxpool_3x3_s2(x)
        dec = self.decoder
        for i, stage in enumerate(dec.stages[:3]):
            g, l, fused = stage.forward_detail(x)
            details.append((g, l, fused))
            x = ops.upsample2x(fused)
            x = dec.skip_fuse[i](concat_channels(x, skips[2 - i]))
        details.append(dec.stages[3].forward_detail(x))
        return details


class DepthNet(Module):
    """Backbone plus a three-layer prediction head emitting disparity in
    (0, 1); depth = 1 / (a * disparity + b) spans [min_depth, max_depth]."""

    def __init__(self, cfg: NetworkConfig, rng):
        if cfg.c_base % 4:
            raise ValueError(f"c_base must be divisible by 4, got {cfg.c_base}")
        self.cfg = cfg
        self.backbone = Backbone(cfg, rng)
        c = cfg.c_base
        self.head = [ConvSiluBN(c, c // 2, 3, rng, cfg.padding_mode, cfg.dtype),
                     ConvSiluBN(c // 2, c // 4, 3, rng, cfg.padding_mode, cfg.dtype),
                     PlainConv(c // 4, 1, 3, rng, cfg.padding_mode, cfg.dtype)]

    def __call__(self, x: Tensor) -> Tensor:
        f = self.backbone(x)
        for layer in self.head:
            f = layer(f)
        return sigmoid(f + self.cfg.disp_shift)

    def disparity_to_depth(self, disp: Tensor) -> Tensor:
        lo, hi = 1.0 / self.cfg.max_depth, 1.0 / self.cfg.min_depth
        return 1.0 / (lo + (hi - lo) * disp)


class SegNet(Module):
    """Backbone plus a logits head; no terminal activation."""

    def __init__(self, cfg: NetworkConfig, rng):
        self.cfg = cfg
        self.backbone = Backbone(cfg, rng)
        c, k = cfg.c_base, cfg.num_classes
        self.head = [ConvSiluBN(c, k, 3, rng, cfg.padding_mode, cfg.dtype),
                     ConvSiluBN(k, k, 3, rng, cfg.padding_mode, cfg.dtype),
                     PlainConv(k, k, 3, rng, cfg.padding_mode, cfg.dtype)]

    def __call__(self, x: Tensor) -> Tensor:
        f = self.backbone(x)
        for layer in self.head:
            f = layer(f)
        return f


class PoseNet(Module):
    """Encoder-only backbone over three stacked RGB frames predicting two
    6-DoF motions (target -> previous, target -> next), each an axis-angle
    rotation triple plus a translation triple, scaled down before use."""

    def __init__(self, cfg: NetworkConfig, rng):
        if cfg.in_channels != 9:
            cfg = NetworkConfig(**{**vars(cfg), "in_channels": 9})
        self.cfg = cfg
        self.encoder = Encoder(cfg, rng)
        c = cfg.c_base
        self.head = [ConvSiluBN(8 * c, 4 * c, 3, rng, cfg.padding_mode, cfg.dtype),
                     ConvSiluBN(4 * c, 2 * c, 3, rng, cfg.padding_mode, cfg.dtype),
                     PlainConv(2 * c, 12, 3, rng, cfg.padding_mode, cfg.dtype)]

    def __call__(self, frames: Tensor) -> Tensor:
        """Returns pose parameters of shape (n, 12, 1, 1): channels 0..5 are
        the target->previous motion, 6..11 target->next; within each group
        the first three are rotation, the last three translation."""
        if frames.shape[1] != 9:
            raise ShapeError(f"pose net expects 9 input channels, got {frames.shape}")
        f, _ = self.encoder(frames)
        for layer in self.head:
            f = layer(f)
        return reduce_mean(f, (2, 3)) * self.cfg.pose_scale

    @staticmethod
    def as_pose_pairs(pose: Tensor) -> np.ndarray:
        """(n, 12, 1, 1) -> (n, 2, 6) view for metrics and logging."""
        return pose.data.reshape(pose.shape[0], 2, 6)


def count_parameters(net: Module):
    """Trainable scalar count and per-top-level-block breakdown; running
    buffers are excluded. Sizes are reported in megabytes at 32-bit."""
    breakdown = {}
    for name, p in net.named_parameters():
        top = ".".join(name.split(".")[:2])
        breakdown[top] = breakdown.get(top, 0) + p.data.size
    total = sum(breakdown.values())
    return total, breakdown


def model_size_mb(net: Module) -> float:
    total, _ = count_parameters(net)
    return total * BYTES_PER_PARAM / 1e6
