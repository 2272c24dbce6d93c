"""Evaluation metrics: standard depth-error suite, per-class IoU for
segmentation, and snippet absolute trajectory error for ego-motion."""

from __future__ import annotations

import numpy as np

from .geometry import pose_to_matrix

DEPTH_METRIC_NAMES = ("abs_rel", "sq_rel", "rms", "rms_log",
                      "delta1", "delta2", "delta3")


def depth_metrics(pred: np.ndarray, gt: np.ndarray, median_scale: bool = True,
                  valid: np.ndarray | None = None) -> dict:
    """AbsRel/SqRel/RMS/RMSlog and delta-threshold accuracies.

    pred/gt are positive depth arrays of equal shape; `valid` optionally
    masks pixels. With `median_scale`, pred is rescaled per call by
    median(gt)/median(pred) before scoring.
    """
    pred = np.asarray(pred, dtype=np.float64).reshape(-1)
    gt = np.asarray(gt, dtype=np.float64).reshape(-1)
    if valid is not None:
        keep = np.asarray(valid).reshape(-1).astype(bool)
        pred, gt = pred[keep], gt[keep]
    if gt.size == 0:
        raise ValueError("depth_metrics: empty valid mask")
    if np.any(gt <= 0) or np.any(pred <= 0):
        raise ValueError("depth_metrics requires positive depths")
    if median_scale:
        pred = pred * (np.median(gt) / np.median(pred))
    ratio = np.maximum(pred / gt, gt / pred)
    return {
        "abs_rel": float(np.mean(np.abs(pred - gt) / gt)),
        "sq_rel": float(np.mean((pred - gt) ** 2 / gt)),
        "rms": float(np.sqrt(np.mean((pred - gt) ** 2))),
        "rms_log": float(np.sqrt(np.mean((np.log(pred) - np.log(gt)) ** 2))),
        "delta1": float(np.mean(ratio < 1.25)),
        "delta2": float(np.mean(ratio < 1.25 ** 2)),
        "delta3": float(np.mean(ratio < 1.25 ** 3)),
    }


def iou_metric(pred_labels: np.ndarray, gt_labels: np.ndarray, num_classes: int,
               ignore_index: int = 255) -> dict:
    """Per-class intersection over union plus the mean over classes that
    appear in prediction or ground truth."""
    pred = np.asarray(pred_labels).reshape(-1)
    gt = np.asarray(gt_labels).reshape(-1)
    keep = gt != ignore_index
    pred, gt = pred[keep], gt[keep]
    per_class = {}
    present = []
    for c in range(num_classes):
        p, g = pred == c, gt == c
        union = np.logical_or(p, g).sum()
        if union == 0:
            per_class[c] = float("nan")
            continue
        per_class[c] = float(np.logical_and(p, g).sum() / union)
        present.append(per_class[c])
    mean = float(np.mean(present)) if present else float("nan")
    return {"per_class": per_class, "mean_iou": mean}


def _snippet_positions(poses) -> np.ndarray:
    """Camera centers of a 3-frame snippet from [target->prev, target->next]
    6-vector motions, in the target frame."""
    pts = [np.zeros(3)]
    for p in poses:
        M = np.linalg.inv(pose_to_matrix(p))    # ref camera center in target frame
        pts.append(M[:3, 3])
    return np.stack(pts)


def ate_metric(pred_poses, gt_poses) -> dict:
    """Absolute trajectory error over 3-frame snippets.

    pred_poses/gt_poses are sequences of [target->prev, target->next] pose
    pairs. Each predicted snippet is scaled by the least-squares factor
    aligning it to ground truth before the error is computed.
    """
    errors = []
    for pp, gp in zip(pred_poses, gt_poses):
        p = _snippet_positions(pp)
        g = _snippet_positions(gp)
        denom = float(np.sum(p * p))
        scale = float(np.sum(p * g)) / denom if denom > 1e-12 else 1.0
        errors.append(float(np.sqrt(np.mean(np.sum((scale * p - g) ** 2, axis=1)))))
    errors = np.array(errors)
    return {"ate_mean": float(errors.mean()), "ate_std": float(errors.std())}
