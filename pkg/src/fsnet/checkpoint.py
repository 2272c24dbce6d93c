"""Binary checkpoint format.

Layout (all little-endian):
  magic "FSLN" | u32 version=1 | u32 tensor count
  per tensor: u16 name length | UTF-8 name | 4 x u32 shape |
              u8 dtype tag (0 = float32) | raw payload | u32 CRC-32

Tensors of lower rank are padded to rank 4 with leading 1s. The training
configuration travels as a "__config__" pseudo-tensor holding the UTF-8
bytes of its key=value text, so a checkpoint is self-describing.
"""

from __future__ import annotations

import struct
import zlib

import numpy as np

MAGIC = b"FSLN"
VERSION = 1
DTYPE_TAGS = {0: np.float32}
CONFIG_KEY = "__config__"


class CheckpointError(RuntimeError):
    pass


def _pad_shape(shape) -> tuple:
    shape = tuple(int(s) for s in shape)
    if len(shape) > 4:
        raise CheckpointError(f"tensor rank {len(shape)} exceeds format limit 4")
    return (1,) * (4 - len(shape)) + shape


def write_tensors(path, tensors: dict):
    """Write name -> ndarray mappings; arrays are stored as float32."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(tensors)))
        for name, arr in tensors.items():
            arr = np.ascontiguousarray(arr, dtype=np.float32)
            payload = arr.tobytes()
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<4I", *_pad_shape(arr.shape)))
            fh.write(struct.pack("<B", 0))
            fh.write(payload)
            fh.write(struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF))


def read_tensors(path) -> dict:
    """Read a checkpoint back into name -> float32 ndarray (rank 4)."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise CheckpointError(f"bad magic {data[:4]!r}; not a checkpoint file")
    version, count = struct.unpack_from("<II", data, 4)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    out = {}
    off = 12
    try:
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", data, off)
            off += 2
            name = data[off:off + nlen].decode("utf-8")
            off += nlen
            shape = struct.unpack_from("<4I", data, off)
            off += 16
            (tag,) = struct.unpack_from("<B", data, off)
            off += 1
            if tag not in DTYPE_TAGS:
                raise CheckpointError(f"unknown dtype tag {tag} for tensor {name!r}")
            dtype = DTYPE_TAGS[tag]
            nbytes = int(np.prod(shape)) * np.dtype(dtype).itemsize
            payload = data[off:off + nbytes]
            if len(payload) != nbytes:
                raise CheckpointError(f"truncated payload for tensor {name!r}")
            off += nbytes
            (crc,) = struct.unpack_from("<I", data, off)
            off += 4
            if crc != (zlib.crc32(payload) & 0xFFFFFFFF):
                raise CheckpointError(f"checksum mismatch for tensor {name!r}")
            out[name] = np.frombuffer(payload, dtype=dtype).reshape(shape).copy()
    except struct.error as exc:
        raise CheckpointError(f"truncated checkpoint: {exc}") from exc
    return out


def encode_config(config: dict) -> np.ndarray:
    text = "".join(f"{k}={v}\n" for k, v in sorted(config.items()))
    raw = np.frombuffer(text.encode("utf-8"), dtype=np.uint8)
    return raw.astype(np.float32)


def decode_config(arr: np.ndarray) -> dict:
    text = arr.reshape(-1).astype(np.uint8).tobytes().decode("utf-8")
    out = {}
    for line in text.splitlines():
        if line:
            key, _, value = line.partition("=")
            out[key] = value
    return out


def save_checkpoint(path, net, config: dict | None = None,
                    optimizer=None):
    """Persist parameters, running buffers, config echo and (optionally)
    optimizer state."""
    tensors = {}
    if config:
        tensors[CONFIG_KEY] = encode_config(config)
    for name, p in net.named_parameters():
        tensors[f"param.{name}"] = p.data
    for name, b in net.named_buffers():
        tensors[f"buffer.{name}"] = b
    if optimizer is not None:
        tensors.update(optimizer.state_tensors())
    write_tensors(path, tensors)


def load_checkpoint(path, net, optimizer=None) -> dict:
    """Restore parameters/buffers in place; returns the decoded config."""
    tensors = read_tensors(path)
    for name, p in net.named_parameters():
        key = f"param.{name}"
        if key not in tensors:
            raise CheckpointError(f"checkpoint is missing parameter {name!r}")
        value = tensors[key]
        if value.shape != _pad_shape(p.data.shape):
            raise CheckpointError(
                f"shape mismatch for {name!r}: checkpoint {tuple(value.shape)} "
                f"vs model {tuple(p.data.shape)}")
        p.data[...] = value.reshape(p.data.shape).astype(p.data.dtype)
    for name, b in net.named_buffers():
        key = f"buffer.{name}"
        if key in tensors:
            b[...] = tensors[key].reshape(b.shape).astype(b.dtype)
    if optimizer is not None and "__adam_step__" in tensors:
        optimizer.load_state_tensors(tensors)
    if CONFIG_KEY in tensors:
        return decode_config(tensors[CONFIG_KEY])
    return {}
