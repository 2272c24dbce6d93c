"""Orthonormal real-input 2D DFT pair over the spatial axes, stored as a
non-redundant half-spectrum along the width, plus the real/imaginary
channel packing used by the frequency-learning layers.

The fast path rides on numpy's FFT; `naive_rdft2` evaluates the plain
double-sum definition and serves as the independent oracle in tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import ShapeError, Tensor, concat_channels, slice_channels


@dataclass
class ComplexTensor4:
    """Paired real/imaginary rank-4 tensors holding half-spectrum data."""

    re: Tensor
    im: Tensor

    def __post_init__(self):
        if self.re.shape != self.im.shape:
            raise ShapeError(f"re/im shape mismatch: {self.re.shape} vs {self.im.shape}")

    @property
    def shape(self):
        return self.re.shape


def _mirror_rows(h: int) -> np.ndarray:
    return (h - np.arange(h)) % h


def _complete(re: np.ndarray, im: np.ndarray, w: int) -> np.ndarray:
    """Hermitian completion of the half-spectrum to full width."""
    n, c, h, wf = re.shape
    full = np.zeros((n, c, h, w), dtype=np.result_type(re.dtype, np.complex64))
    full[..., :wf] = re + 1j * im
    if w > wf:
        rows = _mirror_rows(h)
        cols = np.arange(w - wf, 0, -1)
        full[..., wf:] = (re - 1j * im)[:, :, rows][:, :, :, cols]
    return full


def rdft2(x: Tensor) -> ComplexTensor4:
    """Forward orthonormal DFT over (h, w); keeps columns 0..floor(w/2)."""
    n, c, h, w = x.shape
    wf = w // 2 + 1
    spec = np.fft.fft2(x.data, axes=(2, 3), norm="ortho")[..., :wf]

    def vjp_re(g):
        gf = np.zeros((n, c, h, w), dtype=np.result_type(g.dtype, np.complex64))
        gf[..., :wf] = g
        return (np.fft.fft2(gf, axes=(2, 3), norm="ortho").real.astype(x.dtype),)

    def vjp_im(g):
        gf = np.zeros((n, c, h, w), dtype=np.result_type(g.dtype, np.complex64))
        gf[..., :wf] = g
        return (np.fft.fft2(gf, axes=(2, 3), norm="ortho").imag.astype(x.dtype),)

    re = Tensor(np.ascontiguousarray(spec.real), _parents=(x,), _vjp=vjp_re)
    im = Tensor(np.ascontiguousarray(spec.imag), _parents=(x,), _vjp=vjp_im)
    return ComplexTensor4(re, im)


def irdft2(F: ComplexTensor4, target_w: int) -> Tensor:
    """Inverse of `rdft2` under hermitian completion of the dropped columns."""
    n, c, h, wf = F.shape
    if wf != target_w // 2 + 1:
        raise ShapeError(f"half-spectrum width {wf} does not match target width "
                         f"{target_w} (needs {target_w // 2 + 1})")
    w = target_w
    full = _complete(F.re.data, F.im.data, w)
    out = np.fft.ifft2(full, axes=(2, 3), norm="ortho").real

    rows = _mirror_rows(h)
    cols = np.arange(w - wf, 0, -1)

    def vjp(g):
        q = np.fft.fft2(g, axes=(2, 3), norm="ortho")
        g_re = np.ascontiguousarray(q.real[..., :wf])
        g_im = np.ascontiguousarray(q.imag[..., :wf])
        if w > wf:
            np.add.at(g_re, (slice(None), slice(None), rows[:, None], cols[None, :]),
                      q.real[..., wf:])
            np.add.at(g_im, (slice(None), slice(None), rows[:, None], cols[None, :]),
                      -q.imag[..., wf:])
        return (g_re.astype(F.re.dtype), g_im.astype(F.im.dtype))

    node = Tensor(out.astype(F.re.dtype), _parents=(F.re, F.im), _vjp=vjp)
    return node


def pack_freq(F: ComplexTensor4) -> Tensor:
    """Channels [0, c) hold the real parts, [c, 2c) the imaginary parts."""
    return concat_channels(F.re, F.im)


def unpack_freq(x: Tensor) -> ComplexTensor4:
    c2 = x.shape[1]
    if c2 % 2 != 0:
        raise ShapeError(f"unpack_freq needs an even channel count, got {c2}")
    c = c2 // 2
    return ComplexTensor4(slice_channels(x, 0, c), slice_channels(x, c, c2))


# -- independent slow-path oracle -------------------------------------------


def _dft_matrix(m: int, sign: float) -> np.ndarray:
    k = np.arange(m)
    return np.exp(sign * 2j * np.pi * np.outer(k, k) / m)


def naive_rdft2(x: np.ndarray) -> np.ndarray:
    """Literal orthonormal DFT double sum; O(h^2 w^2) work per image."""
    n, c, h, w = x.shape
    eh = _dft_matrix(h, -1.0)
    ew = _dft_matrix(w, -1.0)
    full = np.einsum("uy,vx,ncyx->ncuv", eh, ew, x, optimize=False) / np.sqrt(h * w)
    return full[..., : w // 2 + 1]


def naive_irdft2(half: np.ndarray, target_w: int) -> np.ndarray:
    """Inverse oracle: hermitian-complete, then the literal inverse sum."""
    n, c, h, wf = half.shape
    w = target_w
    full = _complete(half.real, half.imag, w)
    eh = _dft_matrix(h, 1.0)
    ew = _dft_matrix(w, 1.0)
    out = np.einsum("yu,xv,ncuv->ncyx", eh, ew, full, optimize=False) / np.sqrt(h * w)
    return out.real
