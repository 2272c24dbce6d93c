"""Contrast the two parallel branches of a fusion block.

The frequency branch mixes channels per spectral bin, so a single output
pixel depends on (almost) the whole input plane; the convolutional ladder
of L 3x3 layers only sees a (2L+1)^2 window. We probe both by feeding a
one-hot cotangent into the backward pass and looking at the input-gradient
footprint.

Run:  python3 demos/02_global_vs_local_branches.py
"""

import numpy as np

from fsnet.blocks import (ConvBlockSpec, ConvLadderBlock, FreqBlockSpec,
                          FreqLearningBlock)
from fsnet.gradcheck import grad_input
from fsnet.tensor import Tensor, reduce_sum

rng = np.random.default_rng(1)
h = w = 24

freq = FreqLearningBlock(FreqBlockSpec(1, 2, layer_num=2), rng, dtype=np.float64)
conv = ConvLadderBlock(ConvBlockSpec(1, 2, layer_num=4, dim=64), rng,
                       dtype=np.float64)
for blk in (freq, conv):
    blk.set_mode(False)


def footprint(block):
    """Fraction of input pixels that influence the center output pixel."""
    x = Tensor(rng.standard_normal((1, 1, h, w)))

    def probe(t):
        out = block(t)
        pick = np.zeros(out.shape)
        pick[0, :, h // 2, w // 2] = 1.0
        return reduce_sum(out * Tensor(pick))

    g = grad_input(probe, x)[0, 0]
    alive = np.abs(g) > 1e-14
    ys, xs = np.nonzero(alive)
    extent = max(np.abs(ys - h // 2).max(), np.abs(xs - w // 2).max())
    return alive.mean(), extent


frac, extent = footprint(freq)
print(f"frequency branch: {frac:6.1%} of pixels reach the center output "
      f"(extent +-{extent})")

frac, extent = footprint(conv)
L = sum(1 for layer in conv.layers if layer.kernel.shape[-1] == 3)
print(f"conv ladder ({L} 3x3 layers): {frac:6.1%} of pixels reach the center "
      f"output (extent +-{extent}, theoretical bound +-{L})")
