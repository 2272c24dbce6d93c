"""Pinhole camera geometry: backprojection of a depth map to a point
cloud, rigid-motion construction from axis-angle/translation vectors, and
the differentiable inverse warp that reconstructs a target view from a
reference image.

The tape path (`warp_grid`, `project_and_warp`) composes elementwise
tensor primitives so gradients reach depth and pose; `pose_to_matrix` is
the plain-numpy counterpart used by the synthetic renderer and as a test
oracle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ops
from .tensor import (ShapeError, Tensor, clamp, concat_channels, cos,
                     reduce_sum, sin, slice_channels, sqrt)

_EPS_ANGLE = 1e-12   # keeps the Rodrigues terms finite at zero rotation
_MIN_Z = 1e-6        # projection depth floor; smaller z is flagged invalid


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics in pixel units."""

    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError(f"focal lengths must be positive, got ({self.fx}, {self.fy})")

    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx],
                         [0.0, self.fy, self.cy],
                         [0.0, 0.0, 1.0]])

    def flipped_lr(self, width: int) -> "CameraIntrinsics":
        """Intrinsics after a horizontal image flip (cx mirrors)."""
        return CameraIntrinsics(self.fx, self.fy, width - 1.0 - self.cx, self.cy)

    @classmethod
    def default_for(cls, h: int, w: int) -> "CameraIntrinsics":
        """A plausible synthetic camera: ~53 degree horizontal field of view."""
        return cls(fx=w * 1.0, fy=w * 1.0, cx=(w - 1) / 2.0, cy=(h - 1) / 2.0)


def pose_to_matrix(pose: np.ndarray) -> np.ndarray:
    """(rx, ry, rz, tx, ty, tz) -> 4x4 rigid transform, rotation first.

    The rotation vector is axis-angle (Rodrigues); this is the non-tape
    oracle used by the renderer and the geometry tests.
    """
    pose = np.asarray(pose, dtype=np.float64).reshape(6)
    r, t = pose[:3], pose[3:]
    theta = np.linalg.norm(r)
    if theta < 1e-12:
        R = np.eye(3)
    else:
        k = r / theta
        K = np.array([[0.0, -k[2], k[1]],
                      [k[2], 0.0, -k[0]],
                      [-k[1], k[0], 0.0]])
        R = np.eye(3) + np.sin(theta) * K + (1.0 - np.cos(theta)) * (K @ K)
    M = np.eye(4)
    M[:3, :3] = R
    M[:3, 3] = t
    return M


def invert_pose(pose: np.ndarray) -> np.ndarray:
    """Axis-angle/translation 6-vector of the inverse motion."""
    M = pose_to_matrix(pose)
    Rt = M[:3, :3].T
    pose = np.asarray(pose, dtype=np.float64).reshape(6)
    return np.concatenate([-pose[:3], -Rt @ M[:3, 3]])


def _pixel_rays(h: int, w: int, K: CameraIntrinsics, dtype) -> np.ndarray:
    """(1, 3, h, w) array of K^-1 (u, v, 1) per pixel."""
    u, v = np.meshgrid(np.arange(w, dtype=np.float64),
                       np.arange(h, dtype=np.float64))
    rays = np.stack([(u - K.cx) / K.fx, (v - K.cy) / K.fy, np.ones_like(u)])
    return rays[None].astype(dtype)


def backproject(depth: Tensor, K: CameraIntrinsics) -> Tensor:
    """Depth map (n,1,h,w) -> camera-frame point cloud (n,3,h,w)."""
    n, c, h, w = depth.shape
    if c != 1:
        raise ShapeError(f"backproject expects a single-channel depth map, got {depth.shape}")
    if np.any(depth.data <= 0):
        raise ValueError("backproject requires strictly positive depth")
    rays = Tensor(_pixel_rays(h, w, K, depth.dtype))
    return depth * rays


def rotation_rows(pose: Tensor):
    """Tape Rodrigues: pose (n,6,1,1) -> nine (n,1,1,1) rotation entries
    (row-major) plus the three translation components."""
    if pose.shape[1:] != (6, 1, 1):
        raise ShapeError(f"pose tensor must be (n,6,1,1), got {pose.shape}")
    rx, ry, rz = (slice_channels(pose, i, i + 1) for i in range(3))
    tx, ty, tz = (slice_channels(pose, i, i + 1) for i in range(3, 6))
    theta = sqrt(rx * rx + ry * ry + rz * rz + _EPS_ANGLE)
    kx, ky, kz = rx / theta, ry / theta, rz / theta
    s, cth = sin(theta), cos(theta)
    v = 1.0 - cth
    R = [cth + kx * kx * v, kx * ky * v - kz * s, kx * kz * v + ky * s,
         ky * kx * v + kz * s, cth + ky * ky * v, ky * kz * v - kx * s,
         kz * kx * v - ky * s, kz * ky * v + kx * s, cth + kz * kz * v]
    return R, (tx, ty, tz)


def warp_grid(depth: Tensor, pose: Tensor, K: CameraIntrinsics):
    """Continuous reference-image coordinates for every target pixel.

    depth: (n,1,h,w) target-view depth; pose: (n,6,1,1) motion from the
    target camera to the reference camera. Returns (grid, valid) where
    grid is a (n,2,h,w) tensor of (x, y) sample coordinates and valid is
    a constant (n,1,h,w) 0/1 array marking points that projected in front
    of the reference camera.
    """
    n, _, h, w = depth.shape
    P = backproject(depth, K)
    X = slice_channels(P, 0, 1)
    Y = slice_channels(P, 1, 2)
    Z = slice_channels(P, 2, 3)
    R, (tx, ty, tz) = rotation_rows(pose)
    Xr = R[0] * X + R[1] * Y + R[2] * Z + tx
    Yr = R[3] * X + R[4] * Y + R[5] * Z + ty
    Zr = R[6] * X + R[7] * Y + R[8] * Z + tz
    valid = (Zr.data > _MIN_Z).astype(depth.dtype)
    Zr = clamp(Zr, _MIN_Z, np.inf)
    u = _snap(K.fx * (Xr / Zr) + K.cx)
    v = _snap(K.fy * (Yr / Zr) + K.cy)
    return concat_channels(u, v), valid


def _snap(coord: Tensor, tol: float = 1e-9) -> Tensor:
    """Pull coordinates within `tol` of an integer onto it exactly, via a
    constant offset so gradients are untouched. Makes the identity-pose
    warp an exact identity despite float round-off in the projection."""
    r = np.rint(coord.data)
    fix = np.where(np.abs(r - coord.data) < tol, r - coord.data, 0.0)
    return coord + Tensor(fix.astype(coord.dtype))


def project_and_warp(ref: Tensor, depth: Tensor, pose: Tensor,
                     K: CameraIntrinsics):
    """Reconstruct the target view by sampling `ref` along the projected
    coordinates. Returns (reconstruction, valid) with `valid` as in
    `warp_grid`; gradients flow to ref, depth and pose."""
    if ref.shape[0] != depth.shape[0] or ref.shape[2:] != depth.shape[2:]:
        raise ShapeError(f"ref/depth mismatch: {ref.shape} vs {depth.shape}")
    grid, valid = warp_grid(depth, pose, K)
    return ops.bilinear_sample(ref, grid), valid
