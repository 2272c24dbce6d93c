"""Toy training loops: self-supervised depth on synthetic 3-frame
snippets (ground-truth ego-motion, so the depth network trains alone) and
supervised segmentation on rendered class masks.

Both loops run on a small fixed sample set, log CSV rows, support early
stopping on their evaluation metric, and can persist checkpoints.
"""

from __future__ import annotations

import csv
import os
import time
from dataclasses import dataclass, asdict, field

import numpy as np

from . import checkpoint as ckpt
from . import data, losses, metrics, optim
from .geometry import CameraIntrinsics, project_and_warp
from .network import DepthNet, NetworkConfig, SegNet
from .tensor import Tensor


@dataclass
class TrainConfig:
    task: str = "depth"             # depth | segmentation
    variant: str = "S"
    steps: int = 2000
    epochs: int = 20                # schedule granularity: steps/epochs per epoch
    batch_size: int = 2
    height: int = 32
    width: int = 64
    lr: float = 1e-4
    lr_decay: bool = True           # factor-10 decay every 15 epochs (depth)
    seed: int = 0
    jitter: bool = False
    flip: bool = False
    min_depth: float = 2.0
    max_depth: float = 16.0
    num_classes: int = 4
    num_samples: int = 8            # snippets (depth) or images (segmentation)
    log_every: int = 50
    eval_every: int = 100
    stop_abs_rel: float = 0.12      # early-stop margins inside the acceptance
    stop_warp_l1: float = 0.028     # thresholds (0.15 / 0.03 / 0.95)
    stop_miou: float = 0.97

    def __post_init__(self):
        if self.height % 8 or self.width % 8:
            raise ValueError(f"resolution must be divisible by 8, got "
                             f"{self.height}x{self.width}")
        if self.task not in ("depth", "segmentation"):
            raise ValueError(f"unknown task {self.task!r}")

    def as_flat_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items()}

    @classmethod
    def from_file(cls, path) -> "TrainConfig":
        """Parse a flat key=value config file with # comments."""
        values = {}
        with open(path) as fh:
            for line in fh:
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                key, sep, value = line.partition("=")
                if not sep:
                    raise ValueError(f"malformed config line: {line!r}")
                values[key.strip()] = value.strip()
        kwargs = {}
        for f_ in cls.__dataclass_fields__.values():
            if f_.name not in values:
                continue
            raw = values.pop(f_.name)
            if f_.type == "bool" or isinstance(f_.default, bool):
                kwargs[f_.name] = raw.lower() in ("1", "true", "yes")
            elif isinstance(f_.default, int):
                kwargs[f_.name] = int(raw)
            elif isinstance(f_.default, float):
                kwargs[f_.name] = float(raw)
            else:
                kwargs[f_.name] = raw
        if values:
            raise ValueError(f"unknown config keys: {sorted(values)}")
        return cls(**kwargs)


class CsvLogger:
    def __init__(self, path, fieldnames):
        self.path = path
        self.fieldnames = list(fieldnames)
        if path:
            with open(path, "w", newline="") as fh:
                csv.writer(fh).writerow(self.fieldnames)

    def row(self, values: dict):
        if self.path:
            with open(self.path, "a", newline="") as fh:
                csv.writer(fh).writerow([values.get(k, "") for k in self.fieldnames])


def _network_config(cfg: TrainConfig) -> NetworkConfig:
    return NetworkConfig.variant(cfg.variant, num_classes=cfg.num_classes,
                                 min_depth=cfg.min_depth, max_depth=cfg.max_depth)


def make_depth_dataset(cfg: TrainConfig):
    """Fixed set of rendered snippets with exact depth and poses."""
    rng = np.random.default_rng(cfg.seed)
    scene = data.make_scene(rng)
    K = CameraIntrinsics.default_for(cfg.height, cfg.width)
    snippets = []
    for i in range(cfg.num_samples):
        frames, depth, poses = data.gen_depth_sequence(
            scene, 2.0 * i, K, cfg.height, cfg.width)
        snippets.append(data.DepthSample(frames, [f.copy() for f in frames],
                                         depth, poses, K))
    return snippets, K


def evaluate_depth(net: DepthNet, snippets, K: CameraIntrinsics) -> dict:
    """AbsRel (median-scaled) against analytic depth plus ground-truth-pose
    warp reconstruction error, averaged over the snippet set."""
    net.set_mode(False)
    dm_rows, warp_errs = [], []
    for s in snippets:
        x = Tensor(s.frames_clean[1][None].astype(np.float32))
        disp = net(x)
        depth = net.disparity_to_depth(disp)
        dm_rows.append(metrics.depth_metrics(depth.data, s.depth[None]))
        tgt = s.frames_clean[1][None]
        for ref, pose in zip([s.frames_clean[0], s.frames_clean[2]], s.poses):
            rec, _ = project_and_warp(
                Tensor(ref[None].astype(np.float32)), depth,
                Tensor(pose.reshape(1, 6, 1, 1).astype(np.float32)), s.K)
            warp_errs.append(float(np.abs(rec.data - tgt).mean()))
    net.set_mode(True)
    out = {k: float(np.mean([r[k] for r in dm_rows])) for k in dm_rows[0]}
    out["warp_l1"] = float(np.mean(warp_errs))
    return out


def train_depth(cfg: TrainConfig, out_dir=None, progress=None) -> dict:
    """Returns {"net", "history", "final", "steps_run"}."""
    if cfg.task != "depth":
        raise ValueError("train_depth needs a depth-task config")
    snippets, K = make_depth_dataset(cfg)
    rng = np.random.default_rng(cfg.seed + 1)
    net = DepthNet(_network_config(cfg), rng)
    opt = optim.Adam(net.parameters(), lr=cfg.lr)
    steps_per_epoch = max(cfg.steps // max(cfg.epochs, 1), 1)
    log = CsvLogger(os.path.join(out_dir, "depth_log.csv") if out_dir else None,
                    ["step", "lr", "total", "recons", "3dgs", "scontr",
                     "mask_fraction", "abs_rel", "warp_l1", "seconds"])
    aug_rng = np.random.default_rng(cfg.seed + 2)
    history, final = [], {}
    t0 = time.perf_counter()
    step = 0
    for step in range(1, cfg.steps + 1):
        opt.lr = optim.lr_at((step - 1) // steps_per_epoch, cfg.lr,
                             enabled=cfg.lr_decay)
        idx = rng.choice(len(snippets), size=cfg.batch_size, replace=False)
        do_flip = cfg.flip and aug_rng.random() < 0.5
        batch = [data.augment_depth_sample(snippets[i], aug_rng,
                                           jitter=cfg.jitter, flip=do_flip)
                 for i in idx]
        x = Tensor(np.stack([b.frames_input[1] for b in batch]).astype(np.float32))
        target = Tensor(np.stack([b.frames_clean[1] for b in batch]).astype(np.float32))
        refs = [Tensor(np.stack([b.frames_clean[j] for b in batch]).astype(np.float32))
                for j in (0, 2)]
        poses = [Tensor(np.stack([b.poses[j] for b in batch])
                        .reshape(-1, 6, 1, 1).astype(np.float32))
                 for j in (0, 1)]
        disp = net(x)
        depth = net.disparity_to_depth(disp)
        loss, parts = losses.total_depth_loss(target, refs, disp, depth,
                                              poses, batch[0].K)
        net.zero_grad()
        loss.backward()
        opt.step()
        row = {"step": step, "lr": opt.lr, "seconds": time.perf_counter() - t0,
               **parts}
        if step % cfg.eval_every == 0 or step == cfg.steps:
            row.update(evaluate_depth(net, snippets, K))
            final = {k: row[k] for k in ("abs_rel", "warp_l1")}
        if step % cfg.log_every == 0 or step == cfg.steps:
            history.append(row)
            log.row(row)
            if progress:
                progress(row)
        if final and final["abs_rel"] < cfg.stop_abs_rel \
                and final["warp_l1"] < cfg.stop_warp_l1:
            break
    if not final:
        final = {k: v for k, v in evaluate_depth(net, snippets, K).items()
                 if k in ("abs_rel", "warp_l1")}
    if out_dir:
        ckpt.save_checkpoint(os.path.join(out_dir, "depth.fsln"), net,
                             cfg.as_flat_dict(), opt)
    return {"net": net, "history": history, "final": final, "steps_run": step,
            "snippets": snippets, "K": K}


def make_seg_dataset(cfg: TrainConfig):
    rng = np.random.default_rng(cfg.seed)
    scene = data.make_scene(rng, num_panels=4)
    K = CameraIntrinsics.default_for(cfg.height, cfg.width)
    images, labels = [], []
    for i in range(cfg.num_samples):
        img, lab = data.gen_seg_sample(scene, 0.75 * i, K, cfg.height, cfg.width)
        images.append(img)
        labels.append(lab)
    return np.stack(images), np.stack(labels)


def evaluate_seg(net: SegNet, images, labels, num_classes: int) -> dict:
    net.set_mode(False)
    preds = []
    for i in range(images.shape[0]):
        logits = net(Tensor(images[i:i + 1].astype(np.float32)))
        preds.append(np.argmax(logits.data[0], axis=0))
    net.set_mode(True)
    return metrics.iou_metric(np.stack(preds), labels, num_classes)


def train_seg(cfg: TrainConfig, out_dir=None, progress=None) -> dict:
    if cfg.task != "segmentation":
        raise ValueError("train_seg needs a segmentation-task config")
    images, labels = make_seg_dataset(cfg)
    rng = np.random.default_rng(cfg.seed + 1)
    net = SegNet(_network_config(cfg), rng)
    opt = optim.Adam(net.parameters(), lr=cfg.lr)
    log = CsvLogger(os.path.join(out_dir, "seg_log.csv") if out_dir else None,
                    ["step", "lr", "loss", "mean_iou", "seconds"])
    history, final = [], {}
    t0 = time.perf_counter()
    step = 0
    for step in range(1, cfg.steps + 1):
        idx = rng.choice(images.shape[0], size=cfg.batch_size, replace=False)
        x = Tensor(images[idx].astype(np.float32))
        logits = net(x)
        loss = losses.cross_entropy_loss(logits, labels[idx])
        net.zero_grad()
        loss.backward()
        opt.step()
        row = {"step": step, "lr": opt.lr, "loss": loss.item(),
               "seconds": time.perf_counter() - t0}
        if step % cfg.eval_every == 0 or step == cfg.steps:
            row["mean_iou"] = evaluate_seg(net, images, labels,
                                           cfg.num_classes)["mean_iou"]
            final = {"mean_iou": row["mean_iou"]}
        if step % cfg.log_every == 0 or step == cfg.steps:
            history.append(row)
            log.row(row)
            if progress:
                progress(row)
        if final and final["mean_iou"] >= cfg.stop_miou:
            break
    if not final:
        final = evaluate_seg(net, images, labels, cfg.num_classes)
    if out_dir:
        ckpt.save_checkpoint(os.path.join(out_dir, "seg.fsln"), net,
                             cfg.as_flat_dict(), opt)
    return {"net": net, "history": history, "final": final, "steps_run": step,
            "images": images, "labels": labels}
