"""Training objectives: masked minimum-reprojection reconstruction loss,
3D geometry smoothness, the morphological self-contrast term, and
per-pixel cross-entropy for segmentation.

Binary masks, identity-reprojection baselines and opened disparity maps
are treated as constants (stop-gradient); the differentiable paths run
through the reconstruction, the normals and the disparity itself.
"""

from __future__ import annotations

import warnings

import numpy as np
from scipy import ndimage

from . import geometry, ops
from .tensor import (ShapeError, Tensor, absolute, clamp, concat_channels,
                     exp, exp_neg, log, minimum_over, reduce_mean,
                     reduce_sum, shift2d, slice_channels, sqrt)

SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2
L1_WEIGHT = 0.15
SSIM_WEIGHT = 0.85
SMOOTH_WEIGHT = 1e-3      # weight of the geometry-smoothness term
CONTRAST_WEIGHT = 1e-3    # weight of the self-contrast term
OPENING_SIZE = 31
CONTRAST_FRACTION = 0.3   # threshold = fraction of the per-sample range


def ssim_map(a: Tensor, b: Tensor) -> Tensor:
    """Per-pixel structural similarity with 3x3 mean-filter statistics."""
    if a.shape != b.shape:
        raise ShapeError(f"ssim_map shape mismatch: {a.shape} vs {b.shape}")
    mu_a = ops.box3_mean(a)
    mu_b = ops.box3_mean(b)
    var_a = ops.box3_mean(a * a) - mu_a * mu_a
    var_b = ops.box3_mean(b * b) - mu_b * mu_b
    cov = ops.box3_mean(a * b) - mu_a * mu_b
    num = (2.0 * mu_a * mu_b + SSIM_C1) * (2.0 * cov + SSIM_C2)
    den = (mu_a * mu_a + mu_b * mu_b + SSIM_C1) * (var_a + var_b + SSIM_C2)
    return num / den


def pairwise_loss(recon: Tensor, target: Tensor) -> Tensor:
    """Per-pixel image difference: 0.15 L1 + 0.85 (1 - SSIM)/2, channel-
    averaged; shape (n,1,h,w)."""
    l1 = reduce_mean(absolute(recon - target), (1,))
    dssim = reduce_mean((1.0 - ssim_map(recon, target)) * 0.5, (1,))
    return L1_WEIGHT * l1 + SSIM_WEIGHT * dssim


def _box3_np(x: np.ndarray) -> np.ndarray:
    return ndimage.uniform_filter(x, size=(1, 1, 3, 3), mode="mirror")


def pairwise_loss_np(recon: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Plain-array twin of `pairwise_loss` for constant baselines (no tape)."""
    mu_a, mu_b = _box3_np(recon), _box3_np(target)
    var_a = _box3_np(recon * recon) - mu_a * mu_a
    var_b = _box3_np(target * target) - mu_b * mu_b
    cov = _box3_np(recon * target) - mu_a * mu_b
    ssim = ((2.0 * mu_a * mu_b + SSIM_C1) * (2.0 * cov + SSIM_C2)) \
        / ((mu_a * mu_a + mu_b * mu_b + SSIM_C1) * (var_a + var_b + SSIM_C2))
    l1 = np.abs(recon - target).mean(axis=1, keepdims=True)
    dssim = ((1.0 - ssim) * 0.5).mean(axis=1, keepdims=True)
    return L1_WEIGHT * l1 + SSIM_WEIGHT * dssim


def reconstruction_loss(target: Tensor, refs, depth: Tensor, poses,
                        K: geometry.CameraIntrinsics, masks=None):
    """Masked minimum-reprojection loss over the reference frames.

    refs/poses are parallel lists; poses[i] maps the target camera to the
    camera of refs[i]. Each candidate is gated by a binary constant mask
    comparing its warped loss against the unwarped (identity) loss of the
    same reference, then the per-pixel minimum over gated candidates is
    averaged. Returns (scalar loss, diagnostics dict); the dict carries
    the mask arrays, which can be passed back via `masks` to hold the
    gating fixed (as finite-difference checks must).
    """
    if len(refs) != len(poses) or not refs:
        raise ShapeError(f"need matching non-empty refs/poses, got {len(refs)}/{len(poses)}")
    gated, mus = [], []
    for i, (ref, pose) in enumerate(zip(refs, poses)):
        recon, valid = geometry.project_and_warp(ref, depth, pose, K)
        li = pairwise_loss(recon, target)
        if masks is None:
            lio = pairwise_loss_np(ref.data, target.data)
            mu = ((li.data < lio) & (valid > 0.5)).astype(li.dtype)
        else:
            mu = masks[i]
        gated.append(Tensor(mu) * li)
        mus.append(mu)
    loss = reduce_mean(minimum_over(gated), (0, 1, 2, 3))
    return loss, {"mask_fraction": float(np.mean([m.mean() for m in mus])),
                  "masks": mus}


def _cross(ax, ay, az, bx, by, bz):
    return (ay * bz - az * by, az * bx - ax * bz, ax * by - ay * bx)


_RING = [(-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1)]


def surface_normals(P: Tensor) -> Tensor:
    """Average cross-product normal over the 8-neighbor ring of each point.

    P is a point cloud (n,3,h,w); border neighbors replicate edge points,
    so border normals degrade gracefully. The result is unnormalized.
    """
    if P.shape[1] != 3:
        raise ShapeError(f"surface_normals expects (n,3,h,w), got {P.shape}")
    comps = [slice_channels(P, i, i + 1) for i in range(3)]
    diffs = []
    for dy, dx in _RING:
        diffs.append(tuple(shift2d(c, dy, dx) - c for c in comps))
    nx = ny = nz = None
    for i in range(8):
        a, b = diffs[i], diffs[(i + 1) % 8]
        cx_, cy_, cz_ = _cross(*a, *b)
        nx = cx_ if nx is None else nx + cx_
        ny = cy_ if ny is None else ny + cy_
        nz = cz_ if nz is None else nz + cz_
    return concat_channels(nx * 0.125, ny * 0.125, nz * 0.125)


def sine_distance(n1: Tensor, n2: Tensor) -> Tensor:
    """1 - cos^2 of the angle between per-pixel 3-vectors; in [0, 1] and
    invariant to per-vector scale and sign."""
    dot = reduce_sum(n1 * n2, (1,))
    q1 = reduce_sum(n1 * n1, (1,))
    q2 = reduce_sum(n2 * n2, (1,))
    denom = clamp(sqrt(q1) * sqrt(q2), 1e-12, np.inf)
    c = dot / denom
    return 1.0 - c * c


def _grad_x(t: Tensor) -> Tensor:
    return shift2d(t, 0, 1) - t


def _grad_y(t: Tensor) -> Tensor:
    return shift2d(t, 1, 0) - t


def geometry_smoothness_loss(disparity: Tensor, depth: Tensor, image: Tensor,
                             K: geometry.CameraIntrinsics) -> Tensor:
    """Edge-aware second-order smoothness on the backprojected surface plus
    edge-aware first-order smoothness on the disparity map.

    Adjacent-normal sine distances and absolute disparity gradients are both
    weighted by e^(-|dI|) with channel-mean absolute image gradients.
    """
    P = geometry.backproject(depth, K)
    A = surface_normals(P)
    wx = exp_neg(reduce_mean(absolute(_grad_x(image)), (1,)))
    wy = exp_neg(reduce_mean(absolute(_grad_y(image)), (1,)))
    sx = sine_distance(A, shift2d(A, 0, 1))
    sy = sine_distance(A, shift2d(A, 1, 0))
    dx = absolute(_grad_x(disparity))
    dy = absolute(_grad_y(disparity))
    per_pixel = wx * sx + wy * sy + wx * dx + wy * dy
    return reduce_mean(per_pixel, (0, 1, 2, 3))


def gray_opening(x: np.ndarray, k: int = OPENING_SIZE) -> np.ndarray:
    """Flat-structuring-element grayscale opening (erosion then dilation)
    over the spatial axes, replicate border; plain-array, non-differentiable."""
    if k % 2 == 0:
        raise ValueError(f"opening kernel size must be odd, got {k}")
    size = (1, 1, k, k)
    eroded = ndimage.grey_erosion(x, size=size, mode="nearest")
    return ndimage.grey_dilation(eroded, size=size, mode="nearest")


def self_contrast_loss(disparity: Tensor, k: int = OPENING_SIZE,
                       opened: np.ndarray | None = None) -> Tensor:
    """Mean deviation from the opened disparity over 'effective' pixels.

    Per sample: D_diff = |D - opening(D)|, threshold eps = 0.3 * (max D -
    min D); average D_diff over pixels where D_diff > eps, zero when no
    pixel qualifies; then average over the batch. The opened map and the
    pixel selection are constants; pass a precomputed `opened` map to hold
    the contrast target fixed (as finite-difference checks must).
    """
    if opened is None:
        opened = gray_opening(disparity.data, k)
    diff = absolute(disparity - Tensor(opened.astype(disparity.dtype)))
    d = disparity.data
    eps = CONTRAST_FRACTION * (d.max(axis=(1, 2, 3)) - d.min(axis=(1, 2, 3)))
    mask = (diff.data > eps[:, None, None, None]).astype(disparity.dtype)
    counts = np.maximum(mask.sum(axis=(1, 2, 3)), 1.0)
    per_sample = reduce_sum(Tensor(mask) * diff, (1, 2, 3)) \
        * Tensor((1.0 / counts)[:, None, None, None].astype(disparity.dtype))
    return reduce_mean(per_sample, (0, 1, 2, 3))


def total_depth_loss(target: Tensor, refs, disparity: Tensor, depth: Tensor,
                     poses, K: geometry.CameraIntrinsics,
                     alpha: float = SMOOTH_WEIGHT, beta: float = CONTRAST_WEIGHT,
                     opened: np.ndarray | None = None, masks=None):
    """Reconstruction + alpha * smoothness + beta * self-contrast.

    Returns (scalar loss tensor, per-term float diagnostics)."""
    recon, diag = reconstruction_loss(target, refs, depth, poses, K, masks)
    smooth = geometry_smoothness_loss(disparity, depth, target, K)
    contrast = self_contrast_loss(disparity, opened=opened)
    total = recon + alpha * smooth + beta * contrast
    parts = {"recons": recon.item(), "3dgs": smooth.item(),
             "scontr": contrast.item(), "total": total.item(),
             "mask_fraction": diag["mask_fraction"]}
    return total, parts


def cross_entropy_loss(logits: Tensor, labels: np.ndarray,
                       ignore_index: int = 255) -> Tensor:
    """Mean per-pixel negative log-softmax of the labeled class.

    labels is an integer (n, h, w) array; pixels equal to `ignore_index`
    are excluded. Stabilized by subtracting the per-pixel max logit (a
    constant). All-ignored input yields 0 with a warning.
    """
    n, C, h, w = logits.shape
    if labels.shape != (n, h, w):
        raise ShapeError(f"labels must be (n,h,w)={(n, h, w)}, got {labels.shape}")
    valid = labels != ignore_index
    if not valid.any():
        warnings.warn("cross_entropy_loss: every pixel is ignored; returning 0")
        return Tensor(np.zeros((1, 1, 1, 1), dtype=logits.dtype))
    safe = np.where(valid, labels, 0)
    if safe.min() < 0 or safe.max() >= C:
        raise ValueError(f"labels must lie in [0, {C}) or equal {ignore_index}")
    m = Tensor(logits.data.max(axis=1, keepdims=True))
    z = logits - m
    lse = log(reduce_sum(exp(z), (1,)))
    onehot = np.zeros((n, C, h, w), dtype=logits.dtype)
    np.put_along_axis(onehot, safe[:, None], 1.0, axis=1)
    picked = reduce_sum(Tensor(onehot) * z, (1,))
    nll = (lse - picked) * Tensor(valid[:, None].astype(logits.dtype))
    return reduce_sum(nll, (0, 1, 2, 3)) * (1.0 / valid.sum())
