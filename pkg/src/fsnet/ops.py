"""Spatially structured differentiable operations: convolution, pooling,
nearest upsampling, bilinear grid sampling and the 3x3 box filter.

All convolutions are stride-1 cross-correlations with odd kernels and
"same" padding, so spatial shape is always preserved.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import ShapeError, Tensor

_PAD_MODES = {"reflect": "reflect", "zeros": "constant", "replicate": "edge"}

# pad-adjoint index maps, keyed by (h, w, pad, mode)
_FOLD_CACHE: dict = {}


def _pad_spatial(data: np.ndarray, p: int, mode: str) -> np.ndarray:
    if mode not in _PAD_MODES:
        raise ValueError(f"unknown pad mode {mode!r}; expected one of {sorted(_PAD_MODES)}")
    return np.pad(data, ((0, 0), (0, 0), (p, p), (p, p)), mode=_PAD_MODES[mode])


def _fold_indices(h: int, w: int, p: int, mode: str) -> np.ndarray:
    """Flat source index for every padded cell; padding an index grid with the
    same mode yields exactly the adjoint scatter map."""
    key = (h, w, p, mode)
    idx = _FOLD_CACHE.get(key)
    if idx is None:
        grid = np.arange(h * w).reshape(h, w)
        idx = np.pad(grid, p, mode=_PAD_MODES[mode])
        _FOLD_CACHE[key] = idx
    return idx


def _fold_padded(gp: np.ndarray, p: int, mode: str) -> np.ndarray:
    """Adjoint of `_pad_spatial`: route padded-region gradients back to their
    source pixels."""
    n, c, hp, wp = gp.shape
    h, w = hp - 2 * p, wp - 2 * p
    if p == 0:
        return gp
    if mode == "zeros":
        return np.ascontiguousarray(gp[:, :, p:-p, p:-p])
    if p == 1 and h > 2 and w > 2:
        # reflect/edge padding is separable; fold rows then columns
        j = {"reflect": 1, "replicate": 0}[mode]
        rows = np.ascontiguousarray(gp[:, :, 1:-1, :])
        rows[:, :, j, :] += gp[:, :, 0, :]
        rows[:, :, h - 1 - j, :] += gp[:, :, -1, :]
        out = np.ascontiguousarray(rows[:, :, :, 1:-1])
        out[:, :, :, j] += rows[:, :, :, 0]
        out[:, :, :, w - 1 - j] += rows[:, :, :, -1]
        return out
    idx = _fold_indices(h, w, p, mode)
    out = np.zeros((n, c, h * w), dtype=gp.dtype)
    np.add.at(out, (slice(None), slice(None), idx.reshape(-1)), gp.reshape(n, c, -1))
    return out.reshape(n, c, h, w)


def _im2col(xp: np.ndarray, k: int) -> np.ndarray:
    """(n, c, hp, wp) -> contiguous (n * oh * ow, k * k * c) patch matrix.

    The channel axis is kept innermost so both copies below run over
    contiguous spans instead of gathering strided scalars.
    """
    xpt = np.ascontiguousarray(xp.transpose(0, 2, 3, 1))
    wins = sliding_window_view(xpt, (k, k), axis=(1, 2))     # n oh ow c k k
    n, oh, ow, c = wins.shape[:4]
    cols = np.ascontiguousarray(wins.transpose(0, 1, 2, 4, 5, 3))
    return cols.reshape(n * oh * ow, k * k * c)


def _kt(kern: np.ndarray) -> np.ndarray:
    """Kernel flattened to (co, k * k * ci), matching `_im2col` columns."""
    co, ci, k, _ = kern.shape
    return np.ascontiguousarray(kern.transpose(0, 2, 3, 1)).reshape(co, k * k * ci)


def _corr(xp: np.ndarray, kern: np.ndarray, cols: np.ndarray | None = None):
    """Valid cross-correlation via im2col + matmul; returns (out, cols)."""
    co, ci, k, _ = kern.shape
    n, _, hp, wp = xp.shape
    oh, ow = hp - k + 1, wp - k + 1
    if cols is None:
        cols = _im2col(xp, k)
    out = cols @ _kt(kern).T
    return out.reshape(n, oh, ow, co).transpose(0, 3, 1, 2), cols


def conv2d(x: Tensor, kernel: Tensor, pad_mode: str = "reflect") -> Tensor:
    """Same-size cross-correlation, bias-free.

    kernel shape is (out_c, in_c, k, k) with k odd; the border is extended
    by `pad_mode` before correlating.
    """
    co, ci, k, k2 = kernel.shape
    if k != k2 or k % 2 == 0:
        raise ShapeError(f"kernel must be square with odd size, got {kernel.shape}")
    if x.shape[1] != ci:
        raise ShapeError(f"conv2d channel mismatch: input {x.shape} vs kernel {kernel.shape}")
    n, _, h, w = x.shape
    if k == 1:
        w2 = kernel.data[:, :, 0, 0]
        xm = x.data.reshape(n, ci, h * w)
        out = (w2 @ xm).reshape(n, co, h, w)

        def vjp1(g):
            gm = g.reshape(n, co, h * w)
            dx = (w2.T @ gm).reshape(x.shape) if x.requires_grad else None
            dw = None
            if kernel.requires_grad:
                dw = np.einsum("noq,niq->oi", gm, xm, optimize=True).reshape(kernel.shape)
            return (dx, dw)

        return Tensor(out, _parents=(x, kernel), _vjp=vjp1)

    p = k // 2
    xp = _pad_spatial(x.data, p, pad_mode)
    out, cols = _corr(xp, kernel.data)

    def vjp(g):
        dk = None
        gmat = np.ascontiguousarray(g.transpose(0, 2, 3, 1)) \
            .reshape(n * h * w, co)
        if kernel.requires_grad:
            dk = (gmat.T @ cols).reshape(co, k, k, ci).transpose(0, 3, 1, 2)
        if not x.requires_grad:
            return (None, dk)
        # input gradient: one GEMM gives every patch's gradient, then each
        # of the k*k offsets is added back into the padded grid with a
        # strided slice-add (no second im2col copy)
        patches = (gmat @ _kt(kernel.data)).reshape(n, h, w, k, k, ci)
        hp, wp = h + 2 * p, w + 2 * p
        dxt = np.zeros((n, hp, wp, ci), dtype=g.dtype)
        for dy in range(k):
            for dx_ in range(k):
                dxt[:, dy:dy + h, dx_:dx_ + w] += patches[:, :, :, dy, dx_]
        return (_fold_padded(dxt.transpose(0, 3, 1, 2), p, pad_mode), dk)

    return Tensor(out, _parents=(x, kernel), _vjp=vjp)


def channel_linear(x: Tensor, weight: Tensor) -> Tensor:
    """1x1 channel mixing: out[n,o,y,x] = sum_i weight[o,i] * x[n,i,y,x].

    `weight` is stored as (out_c, in_c, 1, 1).
    """
    co, ci = weight.shape[:2]
    if weight.shape[2:] != (1, 1):
        raise ShapeError(f"channel_linear weight must be (co, ci, 1, 1), got {weight.shape}")
    if x.shape[1] != ci:
        raise ShapeError(f"channel_linear channel mismatch: input {x.shape} vs weight {weight.shape}")
    n, _, h, w = x.shape
    w2 = weight.data[:, :, 0, 0]
    xm = x.data.reshape(n, ci, h * w)
    out = (w2 @ xm).reshape(n, co, h, w)

    def vjp(g):
        gm = g.reshape(n, co, h * w)
        dx = (w2.T @ gm).reshape(x.shape) if x.requires_grad else None
        dw = None
        if weight.requires_grad:
            dw = np.einsum("noq,niq->oi", gm, xm, optimize=True)[:, :, None, None]
        return (dx, dw)

    return Tensor(out, _parents=(x, weight), _vjp=vjp)


def maxpool_3x3_s2(x: Tensor) -> Tensor:
    """3x3 window, stride 2, padding 1; padded cells hold -inf so they never
    win. Gradient goes to the argmax cell, first-in-scan-order on ties."""
    n, c, h, w = x.shape
    if h < 2 or w < 2:
        raise ShapeError(f"maxpool needs h,w >= 2, got {x.shape}")
    neg = np.array(-np.inf, dtype=x.dtype)
    xp = np.pad(x.data, ((0, 0), (0, 0), (1, 1), (1, 1)), constant_values=neg)
    wins = sliding_window_view(xp, (3, 3), axis=(2, 3))[:, :, ::2, ::2]
    oh, ow = wins.shape[2], wins.shape[3]
    flat = wins.reshape(n, c, oh, ow, 9)
    arg = np.argmax(flat, axis=-1)
    out = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]

    oy, ox = np.meshgrid(np.arange(oh), np.arange(ow), indexing="ij")
    sy = 2 * oy[None, None] - 1 + arg // 3
    sx = 2 * ox[None, None] - 1 + arg % 3
    bi = np.arange(n)[:, None, None, None]
    ci = np.arange(c)[None, :, None, None]

    def vjp(g):
        dx = np.zeros_like(x.data)
        np.add.at(dx, (bi, ci, sy, sx), g)
        return (dx,)

    return Tensor(out, _parents=(x,), _vjp=vjp)


def upsample2x(x: Tensor) -> Tensor:
    """Nearest-neighbor doubling: each source pixel becomes a 2x2 block."""
    n, c, h, w = x.shape
    out = np.repeat(np.repeat(x.data, 2, axis=2), 2, axis=3)

    def vjp(g):
        return (g.reshape(n, c, h, 2, w, 2).sum(axis=(3, 5)),)

    return Tensor(out, _parents=(x,), _vjp=vjp)


def bilinear_sample(x: Tensor, grid: Tensor) -> Tensor:
    """Sample x at continuous pixel coordinates.

    grid[:, 0] holds x-coordinates and grid[:, 1] y-coordinates, in pixel
    units. Coordinates outside the image are clamped to the border, where
    the coordinate gradient vanishes.
    """
    n, c, h, w = x.shape
    if grid.shape != (n, 2, h, w):
        raise ShapeError(f"grid must be (n,2,h,w)={(n, 2, h, w)}, got {grid.shape}")
    gx = np.clip(grid.data[:, 0], 0.0, w - 1.0)
    gy = np.clip(grid.data[:, 1], 0.0, h - 1.0)
    inx = (grid.data[:, 0] > 0.0) & (grid.data[:, 0] < w - 1.0)
    iny = (grid.data[:, 1] > 0.0) & (grid.data[:, 1] < h - 1.0)

    x0 = np.floor(gx).astype(np.int64)
    y0 = np.floor(gy).astype(np.int64)
    x0 = np.minimum(x0, w - 2) if w > 1 else x0 * 0
    y0 = np.minimum(y0, h - 2) if h > 1 else y0 * 0
    x1, y1 = x0 + (1 if w > 1 else 0), y0 + (1 if h > 1 else 0)
    # subtract in the grid dtype (int64 would promote float32 to float64)
    wx = (gx - x0.astype(gx.dtype))[:, None]
    wy = (gy - y0.astype(gy.dtype))[:, None]

    bi = np.arange(n)[:, None, None, None]
    ci = np.arange(c)[None, :, None, None]
    y0e, y1e, x0e, x1e = (a[:, None] for a in (y0, y1, x0, x1))
    v00 = x.data[bi, ci, y0e, x0e]
    v01 = x.data[bi, ci, y0e, x1e]
    v10 = x.data[bi, ci, y1e, x0e]
    v11 = x.data[bi, ci, y1e, x1e]
    out = ((1 - wy) * ((1 - wx) * v00 + wx * v01)
           + wy * ((1 - wx) * v10 + wx * v11))

    def vjp(g):
        dx = dgrid = None
        if x.requires_grad:
            dx = np.zeros_like(x.data)
            np.add.at(dx, (bi, ci, y0e, x0e), g * (1 - wy) * (1 - wx))
            np.add.at(dx, (bi, ci, y0e, x1e), g * (1 - wy) * wx)
            np.add.at(dx, (bi, ci, y1e, x0e), g * wy * (1 - wx))
            np.add.at(dx, (bi, ci, y1e, x1e), g * wy * wx)
        if grid.requires_grad:
            ddx = ((1 - wy) * (v01 - v00) + wy * (v11 - v10))
            ddy = ((1 - wx) * (v10 - v00) + wx * (v11 - v01))
            dgx = (g * ddx).sum(axis=1) * inx
            dgy = (g * ddy).sum(axis=1) * iny
            dgrid = np.stack([dgx, dgy], axis=1)
        return (dx, dgrid)

    return Tensor(out, _parents=(x, grid), _vjp=vjp)


def box3_mean(x: Tensor, pad_mode: str = "reflect") -> Tensor:
    """Per-channel 3x3 mean filter; the local-statistics window for SSIM."""
    p = 1
    xp = _pad_spatial(x.data, p, pad_mode)
    wins = sliding_window_view(xp, (3, 3), axis=(2, 3))
    out = wins.mean(axis=(4, 5))

    def vjp(g):
        gz = np.pad(g, ((0, 0), (0, 0), (2, 2), (2, 2)))
        gw = sliding_window_view(gz, (3, 3), axis=(2, 3))
        dxp = gw.sum(axis=(4, 5)) / 9.0
        return (_fold_padded(dxp, p, pad_mode),)

    return Tensor(out, _parents=(x,), _vjp=vjp)
