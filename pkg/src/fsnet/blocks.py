"""Building blocks: batch normalization, conv-SiLU-BN layers, the linear
frequency-learning block (global branch), the bottlenecked convolutional
ladder (local branch), and their parallel fusion.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ops, spectral
from .tensor import Parameter, ShapeError, Tensor, concat_channels, silu, sqrt, \
    reduce_mean


class Module:
    """Minimal container: recursive parameter/buffer discovery by attribute
    walk, shared train/eval switching."""

    training = True

    def _children(self):
        for key, val in vars(self).items():
            yield key, val

    def named_parameters(self, prefix: str = ""):
        for key, val in self._children():
            path = f"{prefix}{key}" if prefix else key
            if isinstance(val, Parameter):
                yield path, val
            elif isinstance(val, Module):
                yield from val.named_parameters(path + ".")
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Parameter):
                        yield f"{path}.{i}", item
                    elif isinstance(item, Module):
                        yield from item.named_parameters(f"{path}.{i}.")

    def named_buffers(self, prefix: str = ""):
        for key, val in self._children():
            path = f"{prefix}{key}" if prefix else key
            if isinstance(val, Module):
                yield from val.named_buffers(path + ".")
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        yield from item.named_buffers(f"{path}.{i}.")
            elif isinstance(val, np.ndarray) and key.startswith("running_"):
                yield path, val

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def modules(self):
        yield self
        for _, val in self._children():
            items = val if isinstance(val, (list, tuple)) else [val]
            for item in items:
                if isinstance(item, Module):
                    yield from item.modules()

    def set_mode(self, training: bool):
        for m in self.modules():
            m.training = training

    def num_parameters(self) -> int:
        return sum(p.data.size for p in self.parameters())


def _uniform_init(rng, shape, fan_in, dtype):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class BatchNorm(Module):
    """Per-channel normalization with learnable affine and running buffers.

    Train mode normalizes by batch statistics over (n, h, w) and updates the
    running buffers; eval mode uses the running buffers only, which keeps
    the map smooth for finite-difference checks.
    """

    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-5,
                 dtype=np.float32):
        self.channels = channels
        self.momentum = momentum
        self.eps = eps
        self.gamma = Parameter(np.ones((1, channels, 1, 1), dtype=dtype))
        self.beta = Parameter(np.zeros((1, channels, 1, 1), dtype=dtype))
        self.running_mean = np.zeros((1, channels, 1, 1), dtype=dtype)
        self.running_var = np.ones((1, channels, 1, 1), dtype=dtype)

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[1] != self.channels:
            raise ShapeError(f"batchnorm expects {self.channels} channels, got {x.shape}")
        if self.training:
            mu = reduce_mean(x, (0, 2, 3))
            centered = x - mu
            var = reduce_mean(centered * centered, (0, 2, 3))
            n = x.shape[0] * x.shape[2] * x.shape[3]
            unbias = n / max(n - 1, 1)
            m = self.momentum
            self.running_mean += m * (mu.data.astype(self.running_mean.dtype)
                                      - self.running_mean)
            self.running_var += m * (unbias * var.data.astype(self.running_var.dtype)
                                     - self.running_var)
            xh = centered / sqrt(var + self.eps)
        else:
            xh = (x - Tensor(self.running_mean.astype(x.dtype))) \
                / sqrt(Tensor(self.running_var.astype(x.dtype)) + self.eps)
        return self.gamma * xh + self.beta


class ChannelLinear(Module):
    """Bias-free 1x1 channel mixing; the per-frequency learnable map."""

    def __init__(self, in_c: int, out_c: int, rng, dtype=np.float32):
        self.weight = Parameter(_uniform_init(rng, (out_c, in_c, 1, 1), in_c, dtype))

    def __call__(self, x: Tensor) -> Tensor:
        return ops.channel_linear(x, self.weight)


class ConvSiluBN(Module):
    """conv (bias-free) -> SiLU -> BatchNorm, in that order."""

    def __init__(self, in_c: int, out_c: int, k: int, rng, pad_mode: str = "reflect",
                 dtype=np.float32):
        self.kernel = Parameter(_uniform_init(rng, (out_c, in_c, k, k), in_c * k * k, dtype))
        self.bn = BatchNorm(out_c, dtype=dtype)
        self.pad_mode = pad_mode

    def __call__(self, x: Tensor) -> Tensor:
        return self.bn(silu(ops.conv2d(x, self.kernel, self.pad_mode)))


class PlainConv(Module):
    """Bias-free convolution without activation or normalization."""

    def __init__(self, in_c: int, out_c: int, k: int, rng, pad_mode: str = "reflect",
                 dtype=np.float32):
        self.kernel = Parameter(_uniform_init(rng, (out_c, in_c, k, k), in_c * k * k, dtype))
        self.pad_mode = pad_mode

    def __call__(self, x: Tensor) -> Tensor:
        return ops.conv2d(x, self.kernel, self.pad_mode)


@dataclass
class FreqBlockSpec:
    in_c: int
    out_c: int
    layer_num: int = 2


@dataclass
class ConvBlockSpec:
    in_c: int
    out_c: int
    layer_num: int = 4
    dim: int = 64
    bottleneck: bool = True


class FreqLearningBlock(Module):
    """Global branch: DFT -> packed re/im channels -> stacked
    (1x1 linear -> SiLU -> BN) layers -> unpack -> inverse DFT.

    Layer 0 maps 2*in_c -> 2*out_c; later layers keep 2*out_c so the
    final unpack yields out_c complex channels.
    """

    def __init__(self, spec: FreqBlockSpec, rng, dtype=np.float32):
        self.spec = spec
        self.linears = []
        self.norms = []
        for i in range(spec.layer_num):
            ic = 2 * spec.in_c if i == 0 else 2 * spec.out_c
            self.linears.append(ChannelLinear(ic, 2 * spec.out_c, rng, dtype))
            self.norms.append(BatchNorm(2 * spec.out_c, dtype=dtype))

    def __call__(self, x: Tensor) -> Tensor:
        w = x.shape[3]
        z = spectral.pack_freq(spectral.rdft2(x))
        for lin, bn in zip(self.linears, self.norms):
            z = bn(silu(lin(z)))
        return spectral.irdft2(spectral.unpack_freq(z), w)


class ConvLadderBlock(Module):
    """Local branch: a ladder of 3x3 conv-SiLU-BN layers, optionally
    bracketed by 1x1 squeeze/expand layers when a boundary channel count
    exceeds the bottleneck width."""

    def __init__(self, spec: ConvBlockSpec, rng, pad_mode: str = "reflect",
                 dtype=np.float32):
        self.spec = spec
        mk = lambda i, o, k=3: ConvSiluBN(i, o, k, rng, pad_mode, dtype)
        in_c, out_c, dim, ln = spec.in_c, spec.out_c, spec.dim, spec.layer_num
        layers = []
        if not spec.bottleneck:
            for i in range(ln):
                layers.append(mk(in_c if i == 0 else out_c, out_c))
        elif in_c <= dim and out_c <= dim:
            for i in range(ln):
                layers.append(mk(in_c if i == 0 else out_c, out_c))
        elif in_c > dim and out_c <= dim:
            for i in range(ln):
                if i == 0:
                    layers.append(mk(in_c, dim, 1))
                    layers.append(mk(dim, out_c))
                else:
                    layers.append(mk(out_c, out_c))
        else:
            # at least one boundary above dim: run the 3x3 ladder at dim width
            for i in range(ln):
                if i == 0:
                    if in_c > dim:
                        layers.append(mk(in_c, dim, 1))
                        layers.append(mk(dim, dim))
                    else:
                        layers.append(mk(in_c, dim))
                else:
                    layers.append(mk(dim, dim))
                if i == ln - 1:
                    layers.append(mk(dim, out_c, 1))
        self.layers = layers

    def __call__(self, x: Tensor) -> Tensor:
        for layer in self.layers:
            x = layer(x)
        return x


@dataclass
class JointBlockSpec:
    in_c: int
    out_c: int
    freq_layers: int = 2
    conv_layers: int = 4
    dim: int = 64
    bottleneck: bool = True


class JointBlock(Module):
    """Parallel global (frequency) and local (convolution) branches fused by
    a single 3x3 conv-SiLU-BN layer mapping 2*out_c -> out_c."""

    def __init__(self, spec: JointBlockSpec, rng, pad_mode: str = "reflect",
                 dtype=np.float32):
        self.spec = spec
        self.freq = FreqLearningBlock(
            FreqBlockSpec(spec.in_c, spec.out_c, spec.freq_layers), rng, dtype)
        self.conv = ConvLadderBlock(
            ConvBlockSpec(spec.in_c, spec.out_c, spec.conv_layers, spec.dim,
                          spec.bottleneck), rng, pad_mode, dtype)
        self.fuse = ConvSiluBN(2 * spec.out_c, spec.out_c, 3, rng, pad_mode, dtype)

    def forward_detail(self, x: Tensor):
        g = self.freq(x)
        l = self.conv(x)
        return g, l, self.fuse(concat_channels(g, l))

    def __call__(self, x: Tensor) -> Tensor:
        return self.forward_detail(x)[2]
