"""Short self-supervised depth run on the synthetic corpus.

Trains the small depth network for a few hundred steps on rendered
3-frame snippets with ground-truth ego-motion, printing the loss terms
and the depth metrics as they improve, then writes the predicted and
ground-truth disparity of one snippet as PGM images for eyeballing.

This is a scaled-down preview; the full 2000-step run with the shipped
defaults is exercised by the acceptance suite (and by
`fsnet train-depth`).

Run:  python3 demos/04_toy_depth_training.py [steps]
"""

import os
import sys

import numpy as np

from fsnet.imageio import minmax_normalize, write_pgm
from fsnet.tensor import Tensor
from fsnet.train import TrainConfig, train_depth

steps = int(sys.argv[1]) if len(sys.argv) > 1 else 400

cfg = TrainConfig(steps=steps, eval_every=100, log_every=50)


def show(row):
    msg = f"step {row['step']:4d}  loss {row['total']:.4f}  " \
          f"mask {row['mask_fraction']:.2f}"
    if "abs_rel" in row:
        msg += f"  abs_rel {row['abs_rel']:.3f}  warp_l1 {row['warp_l1']:.4f}"
    print(msg, flush=True)


out = train_depth(cfg, progress=show)
print(f"\nfinal after {out['steps_run']} steps: "
      f"abs_rel {out['final']['abs_rel']:.3f}, "
      f"warp_l1 {out['final']['warp_l1']:.4f}")

net = out["net"]
net.set_mode(False)
snippet = out["snippets"][0]
disp = net(Tensor(snippet.frames_clean[1][None].astype(np.float32)))

out_dir = os.path.dirname(os.path.abspath(__file__))
pred = os.path.join(out_dir, "depth_predicted.pgm")
true = os.path.join(out_dir, "depth_true.pgm")
write_pgm(pred, minmax_normalize(disp.data[0, 0]))
write_pgm(true, minmax_normalize(1.0 / snippet.depth[0]))
print(f"wrote {pred} and {true} (normalized disparity)")
