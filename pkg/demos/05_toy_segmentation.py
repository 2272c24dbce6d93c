"""Overfit the segmentation head on rendered class masks.

Renders views of one synthetic scene with exact 4-class labels (wall,
ground, two panel classes), trains the full network with cross-entropy,
and reports per-class IoU. With a few hundred steps the masks are already
mostly recovered; the acceptance suite runs the full configuration to
mIoU >= 0.95.

Run:  python3 demos/05_toy_segmentation.py [steps]
"""

import sys

import numpy as np

from fsnet.train import TrainConfig, evaluate_seg, train_seg

steps = int(sys.argv[1]) if len(sys.argv) > 1 else 400

cfg = TrainConfig(task="segmentation", steps=steps, lr=1e-3, num_samples=20,
                  height=64, width=64, batch_size=2,
                  eval_every=100, log_every=50)


def show(row):
    msg = f"step {row['step']:4d}  loss {row['loss']:.4f}"
    if "mean_iou" in row:
        msg += f"  mean_iou {row['mean_iou']:.3f}"
    print(msg, flush=True)


out = train_seg(cfg, progress=show)
result = evaluate_seg(out["net"], out["images"], out["labels"],
                      cfg.num_classes)
print(f"\nafter {out['steps_run']} steps: mean IoU {result['mean_iou']:.3f}")
for c, iou in enumerate(result["per_class"]):
    print(f"  class {c}: IoU {iou:.3f}")
