"""Command-line interface.

Subcommands: gradcheck, train-depth, train-seg, eval-depth, eval-seg,
eval-pose, inspect, params. Exit codes: 0 success, 1 usage error,
2 check failure, 3 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys

import numpy as np

from . import checkpoint as ckpt
from . import losses, metrics, ops, spectral, train
from .blocks import (BatchNorm, ConvBlockSpec, ConvLadderBlock,
                     FreqBlockSpec, FreqLearningBlock, JointBlock,
                     JointBlockSpec)
from .gradcheck import finite_diff_check
from .geometry import CameraIntrinsics, project_and_warp
from .imageio import minmax_normalize, write_pgm
from .network import (DepthNet, NetworkConfig, PoseNet, SegNet,
                      count_parameters, model_size_mb)
from .tensor import Tensor, reduce_mean, reduce_sum

EXIT_OK, EXIT_USAGE, EXIT_CHECK, EXIT_IO = 0, 1, 2, 3

# published model sizes in megabytes, used by the params command
SIZE_TARGETS_MB = {("depth", "S"): 5.5, ("depth", "L"): 16.5,
                   ("pose", "S"): 3.9, ("pose", "L"): 11.9}


def _net_for_head(head: str, variant: str, rng) -> object:
    cfg = NetworkConfig.variant(variant)
    if head == "depth":
        return DepthNet(cfg, rng)
    if head == "pose":
        return PoseNet(NetworkConfig.variant(variant, in_channels=9), rng)
    if head == "segmentation":
        return SegNet(cfg, rng)
    raise ValueError(f"unknown head {head!r}")


def cmd_gradcheck(args) -> int:
    dtype = np.float64 if args.bits == 64 else np.float32
    tol = 1e-5 if args.bits == 64 else 1e-2
    rng = np.random.default_rng(args.seed)
    failures = []

    def run(name, f, leaves):
        report = finite_diff_check(f, leaves, rng=np.random.default_rng(args.seed))
        status = "ok" if report.passed(tol) else "FAIL"
        if not report.passed(tol):
            failures.append(name)
        print(f"{name:28s} max_rel={report.worst:.3e} "
              f"excluded={sum(report.excluded.values())} {status}")

    x = Tensor(rng.standard_normal((1, 3, 6, 8)).astype(dtype))
    k = Tensor((rng.standard_normal((4, 3, 3, 3)) * 0.3).astype(dtype))
    cot = rng.standard_normal((1, 4, 6, 8)).astype(dtype)
    run("conv2d", lambda: reduce_sum(ops.conv2d(x, k) * Tensor(cot)), {"x": x, "k": k})

    xs = Tensor(rng.standard_normal((1, 2, 6, 8)).astype(dtype))
    cs = rng.standard_normal((1, 6, 8)).astype(dtype)

    def f_spec():
        F = spectral.rdft2(xs)
        return reduce_sum(spectral.irdft2(F, 8) * Tensor(np.stack([cs, cs], 1)))
    run("rdft2/irdft2", f_spec, {"x": xs})

    for name, block in [
            ("freq_block", FreqLearningBlock(FreqBlockSpec(2, 3), rng, dtype)),
            ("conv_block", ConvLadderBlock(ConvBlockSpec(2, 3, 2, 4), rng, dtype=dtype)),
            ("joint_block", JointBlock(JointBlockSpec(2, 3, 2, 2, 4), rng, dtype=dtype))]:
        block.set_mode(False)
        cb = rng.standard_normal((1, 3, 6, 8)).astype(dtype)
        leaves = {n: p for n, p in block.named_parameters()}
        leaves["x"] = xs
        run(name, lambda b=block: reduce_sum(b(xs) * Tensor(cb)), leaves)

    dep = Tensor((2.0 + rng.random((1, 1, 8, 8))).astype(dtype))
    disp = Tensor((0.2 + 0.1 * rng.random((1, 1, 8, 8))).astype(dtype))
    img = Tensor(rng.random((1, 3, 8, 8)).astype(dtype))
    ref = Tensor(rng.random((1, 3, 8, 8)).astype(dtype))
    pose = Tensor(np.array([0.02, -0.01, 0.015, 0.05, 0.02, -0.03],
                           dtype=dtype).reshape(1, 6, 1, 1))
    K = CameraIntrinsics.default_for(8, 8)
    opened = losses.gray_opening(disp.data)
    run("depth_loss",
        lambda: losses.total_depth_loss(img, [ref], disp, dep, [pose], K,
                                        opened=opened)[0],
        {"depth": dep, "disp": disp, "pose": pose})

    logits = Tensor(rng.standard_normal((1, 4, 8, 8)).astype(dtype))
    labels = rng.integers(0, 4, (1, 8, 8))
    run("cross_entropy", lambda: losses.cross_entropy_loss(logits, labels),
        {"logits": logits})

    if failures:
        print(f"FAILED: {', '.join(failures)}")
        return EXIT_CHECK
    print("all gradient checks passed")
    return EXIT_OK


def cmd_params(args) -> int:
    rng = np.random.default_rng(0)
    net = _net_for_head(args.head, args.variant, rng)
    total, breakdown = count_parameters(net)
    size_mb = model_size_mb(net)
    print(f"{args.head} variant {args.variant}: {total} parameters "
          f"({size_mb:.2f} MB at 32-bit)")
    for name in sorted(breakdown):
        print(f"  {name:24s} {breakdown[name]}")
    target = SIZE_TARGETS_MB.get((args.head, args.variant))
    if target is not None:
        dev = (size_mb - target) / target
        print(f"published size {target} MB; deviation {dev:+.1%}")
        if abs(dev) > 0.10:
            return EXIT_CHECK
    return EXIT_OK


def _load_train_config(path) -> train.TrainConfig:
    try:
        return train.TrainConfig.from_file(path)
    except OSError as exc:
        raise SystemExit2(f"cannot read config: {exc}", EXIT_IO)
    except ValueError as exc:
        raise SystemExit2(f"bad config: {exc}", EXIT_USAGE)


class SystemExit2(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def _progress(row):
    parts = ", ".join(f"{k}={v:.4g}" if isinstance(v, float) else f"{k}={v}"
                      for k, v in row.items())
    print(parts)


def cmd_train_depth(args) -> int:
    cfg = _load_train_config(args.config)
    if cfg.task != "depth":
        raise SystemExit2(f"config task is {cfg.task!r}, expected depth", EXIT_USAGE)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
    out = train.train_depth(cfg, out_dir=args.out, progress=_progress)
    print(f"finished after {out['steps_run']} steps: {out['final']}")
    return EXIT_OK


def cmd_train_seg(args) -> int:
    cfg = _load_train_config(args.config)
    if cfg.task != "segmentation":
        raise SystemExit2(f"config task is {cfg.task!r}, expected segmentation",
                          EXIT_USAGE)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
    out = train.train_seg(cfg, out_dir=args.out, progress=_progress)
    print(f"finished after {out['steps_run']} steps: {out['final']}")
    return EXIT_OK


def _restore(args, head):
    try:
        probe = ckpt.read_tensors(args.checkpoint)
    except OSError as exc:
        raise SystemExit2(f"cannot read checkpoint: {exc}", EXIT_IO)
    except ckpt.CheckpointError as exc:
        raise SystemExit2(str(exc), EXIT_IO)
    config = ckpt.decode_config(probe[ckpt.CONFIG_KEY]) \
        if ckpt.CONFIG_KEY in probe else {}
    cfg_kwargs = {}
    for f_ in train.TrainConfig.__dataclass_fields__.values():
        if f_.name in config:
            raw = config[f_.name]
            if isinstance(f_.default, bool):
                cfg_kwargs[f_.name] = raw == "True"
            elif isinstance(f_.default, int):
                cfg_kwargs[f_.name] = int(raw)
            elif isinstance(f_.default, float):
                cfg_kwargs[f_.name] = float(raw)
            else:
                cfg_kwargs[f_.name] = raw
    tcfg = train.TrainConfig(**cfg_kwargs)
    net = _net_for_head(head, tcfg.variant, np.random.default_rng(0))
    try:
        ckpt.load_checkpoint(args.checkpoint, net)
    except ckpt.CheckpointError as exc:
        raise SystemExit2(str(exc), EXIT_IO)
    net.set_mode(False)
    return net, tcfg


def _write_csv(path, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(rows[0].keys()))
        for row in rows:
            writer.writerow(list(row.values()))


def cmd_eval_depth(args) -> int:
    net, tcfg = _restore(args, "depth")
    snippets, K = train.make_depth_dataset(tcfg)
    result = train.evaluate_depth(net, snippets, K)
    for k, v in result.items():
        print(f"{k:12s} {v:.4f}")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        _write_csv(os.path.join(args.out, "eval_depth.csv"), [result])
    return EXIT_OK


def cmd_eval_seg(args) -> int:
    net, tcfg = _restore(args, "segmentation")
    images, labels = train.make_seg_dataset(tcfg)
    result = train.evaluate_seg(net, images, labels, tcfg.num_classes)
    print(f"mean_iou     {result['mean_iou']:.4f}")
    for c, v in result["per_class"].items():
        print(f"class {c}      {v:.4f}")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        flat = {"mean_iou": result["mean_iou"],
                **{f"iou_{c}": v for c, v in result["per_class"].items()}}
        _write_csv(os.path.join(args.out, "eval_seg.csv"), [flat])
    return EXIT_OK


def cmd_eval_pose(args) -> int:
    net, tcfg = _restore(args, "pose")
    snippets, _ = train.make_depth_dataset(tcfg)
    preds, gts = [], []
    for s in snippets:
        stacked = np.concatenate([s.frames_clean[0], s.frames_clean[1],
                                  s.frames_clean[2]])[None]
        pose = net(Tensor(stacked.astype(np.float32)))
        pair = PoseNet.as_pose_pairs(pose)[0]
        preds.append([pair[0], pair[1]])
        gts.append(list(s.poses))
    result = metrics.ate_metric(preds, gts)
    print(f"ate_mean     {result['ate_mean']:.4f}")
    print(f"ate_std      {result['ate_std']:.4f}")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        _write_csv(os.path.join(args.out, "eval_pose.csv"), [result])
    return EXIT_OK


def cmd_inspect(args) -> int:
    net, tcfg = _restore(args, "depth")
    snippets, _ = train.make_depth_dataset(tcfg)
    x = Tensor(snippets[0].frames_clean[1][None].astype(np.float32))
    details = net.backbone.stage_details(x)
    if not (1 <= args.stage <= len(details)):
        raise SystemExit2(f"stage must be in 1..{len(details)}", EXIT_USAGE)
    g, l, fused = details[args.stage - 1]
    os.makedirs(args.out, exist_ok=True)
    stats = {}
    for tag, t in (("global", g), ("local", l), ("fused", fused)):
        maps = t.data[0]
        cols = int(np.ceil(np.sqrt(maps.shape[0])))
        rows = int(np.ceil(maps.shape[0] / cols))
        h, w = maps.shape[1:]
        grid = np.zeros((rows * h, cols * w))
        energy = []
        for i in range(maps.shape[0]):
            m = minmax_normalize(maps[i])
            energy.append(np.abs(np.diff(m, axis=0)).mean()
                          + np.abs(np.diff(m, axis=1)).mean())
            r, c = divmod(i, cols)
            grid[r * h:(r + 1) * h, c * w:(c + 1) * w] = m
        path = os.path.join(args.out, f"stage{args.stage}_{tag}.pgm")
        write_pgm(path, grid)
        stats[tag] = float(np.mean(energy))
        print(f"wrote {path} (mean gradient energy {stats[tag]:.4f})")
    print(f"global branch {'is' if stats['global'] < stats['local'] else 'is NOT'} "
          f"smoother than the local branch at stage {args.stage}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fsnet", description="joint frequency/spatial learning toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    p.add_argument("--bits", type=int, choices=(32, 64), default=64)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("params", help="parameter count and size comparison")
    p.add_argument("--variant", choices=("S", "L"), default="S")
    p.add_argument("--head", choices=("depth", "pose", "segmentation"),
                   default="depth")
    p.set_defaults(func=cmd_params)

    for name, fn in (("train-depth", cmd_train_depth), ("train-seg", cmd_train_seg)):
        p = sub.add_parser(name, help=f"run {name.replace('-', ' ')}")
        p.add_argument("--config", required=True)
        p.add_argument("--out", default=None)
        p.set_defaults(func=fn)

    for name, fn in (("eval-depth", cmd_eval_depth), ("eval-seg", cmd_eval_seg),
                     ("eval-pose", cmd_eval_pose)):
        p = sub.add_parser(name, help=f"run {name.replace('-', ' ')}")
        p.add_argument("--checkpoint", required=True)
        p.add_argument("--out", default=None)
        p.set_defaults(func=fn)

    p = sub.add_parser("inspect", help="dump per-stage feature maps as PGM grids")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--stage", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except SystemExit2 as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
