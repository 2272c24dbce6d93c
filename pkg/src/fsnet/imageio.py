"""Binary PPM (P6) / PGM (P5) image I/O, 8-bit, plus min-max
normalization used when dumping feature maps."""

from __future__ import annotations

import numpy as np


def _read_token(data: bytes, pos: int):
    """Skip whitespace/comments and return (token, next position)."""
    while pos < len(data):
        ch = data[pos:pos + 1]
        if ch == b"#":
            while pos < len(data) and data[pos:pos + 1] != b"\n":
                pos += 1
        elif ch.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < len(data) and not data[pos:pos + 1].isspace():
        pos += 1
    return data[start:pos], pos


def write_ppm(path, img: np.ndarray):
    """img: (3, h, w) floats in [0, 1] -> binary P6 file."""
    if img.ndim != 3 or img.shape[0] != 3:
        raise ValueError(f"write_ppm expects (3, h, w), got {img.shape}")
    data = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)
    _, h, w = data.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(data.transpose(1, 2, 0).tobytes())


def write_pgm(path, img: np.ndarray):
    """img: (h, w) floats in [0, 1] -> binary P5 file."""
    if img.ndim != 2:
        raise ValueError(f"write_pgm expects (h, w), got {img.shape}")
    data = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)
    h, w = data.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def read_image(path) -> np.ndarray:
    """Read P6 -> (3, h, w) or P5 -> (h, w), floats in [0, 1]."""
    with open(path, "rb") as fh:
        data = fh.read()
    magic, pos = _read_token(data, 0)
    if magic not in (b"P5", b"P6"):
        raise ValueError(f"unsupported image magic {magic!r}; expected P5 or P6")
    w_tok, pos = _read_token(data, pos)
    h_tok, pos = _read_token(data, pos)
    maxval_tok, pos = _read_token(data, pos)
    w, h, maxval = int(w_tok), int(h_tok), int(maxval_tok)
    if maxval != 255:
        raise ValueError(f"only 8-bit images are supported, got maxval {maxval}")
    pos += 1  # single whitespace byte after the header
    channels = 3 if magic == b"P6" else 1
    raw = np.frombuffer(data, dtype=np.uint8, count=h * w * channels, offset=pos)
    img = raw.astype(np.float64) / 255.0
    if magic == b"P6":
        return img.reshape(h, w, 3).transpose(2, 0, 1)
    return img.reshape(h, w)


def minmax_normalize(x: np.ndarray) -> np.ndarray:
    """Map to [0, 1] by subtracting the minimum and dividing by the range;
    constant inputs map to zero."""
    lo, hi = float(x.min()), float(x.max())
    if hi - lo < 1e-12:
        return np.zeros_like(x, dtype=np.float64)
    return (x - lo) / (hi - lo)
