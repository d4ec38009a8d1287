"""Flat binary checkpoint format for network weights.

Layout: magic header, format version, array count, a shape table
(ndim + dims per array, uint32), then each array's float64 data,
everything little-endian.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import ConfigurationError

MAGIC = b"GDQNAVW\x00"
VERSION = 1


def write_weights(path, arrays) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(arrays)))
        for arr in arrays:
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        for arr in arrays:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def read_weights(path) -> list[np.ndarray]:
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise ConfigurationError(f"{path}: not a weight file (bad magic)")
        version, count = struct.unpack("<II", fh.read(8))
        if version != VERSION:
            raise ConfigurationError(f"{path}: unsupported weight format version {version}")
        shapes = []
        for _ in range(count):
            (ndim,) = struct.unpack("<I", fh.read(4))
            shapes.append(struct.unpack(f"<{ndim}I", fh.read(4 * ndim)))
        arrays = []
        for shape in shapes:
            n = int(np.prod(shape)) if shape else 1
            buf = fh.read(8 * n)
            if len(buf) != 8 * n:
                raise ConfigurationError(f"{path}: truncated weight file")
            arrays.append(np.frombuffer(buf, dtype="<f8").astype(np.float64).reshape(shape))
        return arrays


def load_into(path, arrays) -> None:
    """Load a weight file into existing arrays (shapes must match)."""
    loaded = read_weights(path)
    if len(loaded) != len(arrays):
        raise ConfigurationError(
            f"{path}: has {len(loaded)} arrays, expected {len(arrays)}")
    for dst, src in zip(arrays, loaded):
        if dst.shape != src.shape:
            raise ConfigurationError(
                f"{path}: shape mismatch {src.shape} vs expected {dst.shape}")
        np.copyto(dst, src)
