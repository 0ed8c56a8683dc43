"""File formats: ``.vgrid`` volumes, PFM/PNG images and JSON documents."""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .grid import ScalarGrid, VectorGrid

VGRID_MAGIC = b"VGRD"
VGRID_VERSION = 1
_HEADER = struct.Struct("<4sIIIII")
_MAX_DIM = 1 << 16


class FormatError(ValueError):
    pass


class ConfigError(ValueError):
    """Invalid configuration value; ``field`` names the offending key."""

    def __init__(self, field, message, file=None):
        self.field = field
        self.file = None if file is None else str(file)
        self.message = message
        super().__init__(f"{field}: {message}" if file is None else f"{file}: {field}: {message}")

    def with_file(self, file) -> "ConfigError":
        return ConfigError(self.field, self.message, file)


def write_vgrid(grid, path) -> None:
    """Write a scalar or vector grid as little-endian float32."""
    if isinstance(grid, (ScalarGrid, VectorGrid)):
        data = grid.data
    else:
        data = np.asarray(grid)
    if data.ndim == 3:
        data = data[..., None]
    if data.ndim != 4:
        raise ValueError(f"cannot write array of shape {data.shape} as a grid")
    nz, ny, nx, c = data.shape
    if not np.all(np.isfinite(data)):
        raise ValueError("grid contains non-finite values")
    header = _HEADER.pack(VGRID_MAGIC, VGRID_VERSION, nx, ny, nz, c)
    payload = np.ascontiguousarray(data, dtype="<f4").tobytes()
    with open(path, "wb") as f:
        f.write(header)
        f.write(payload)


def read_vgrid(path):
    """Read a ``.vgrid`` file; 1-channel files become ScalarGrid, 3-channel VectorGrid."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, nx, ny, nz, c = _HEADER.unpack_from(raw)
    if magic != VGRID_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != VGRID_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if max(nx, ny, nz) > _MAX_DIM or c not in (1, 3) or min(nx, ny, nz) < 1:
        raise FormatError(f"{path}: bad dimensions {(nx, ny, nz, c)}")
    n = nx * ny * nz * c
    if len(raw) != _HEADER.size + 4 * n:
        raise FormatError(f"{path}: payload size does not match header")
    data = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size).astype(np.float64)
    data = data.reshape(nz, ny, nx, c)
    if c == 1:
        return ScalarGrid(data[..., 0])
    return VectorGrid(data)


def write_pfm(img, path) -> None:
    """Write a float image, rows top-to-bottom in memory (PFM stores bottom-up)."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 3 and img.shape[2] == 1:
        img = img[..., 0]
    if img.ndim == 2:
        tag = b"Pf"
    elif img.ndim == 3 and img.shape[2] == 3:
        tag = b"PF"
    else:
        raise ValueError(f"cannot write image of shape {img.shape} as PFM")
    h, w = img.shape[:2]
    with open(path, "wb") as f:
        f.write(tag + b"\n" + f"{w} {h}\n".encode() + b"-1.0\n")
        f.write(np.ascontiguousarray(img[::-1], dtype="<f4").tobytes())


def read_pfm(path) -> np.ndarray:
    with open(path, "rb") as f:
        tag = f.readline().strip()
        if tag not in (b"PF", b"Pf"):
            raise FormatError(f"{path}: not a PFM file")
        dims = f.readline().split()
        scale = float(f.readline().strip())
        payload = f.read()
    w, h = int(dims[0]), int(dims[1])
    c = 3 if tag == b"PF" else 1
    dtype = "<f4" if scale < 0 else ">f4"
    if len(payload) != 4 * w * h * c:
        raise FormatError(f"{path}: payload size does not match header")
    data = np.frombuffer(payload, dtype=dtype).astype(np.float64)
    data = data.reshape(h, w, c)[::-1]
    if c == 1:
        data = data[..., 0]
    return np.ascontiguousarray(data)


def write_png(img, path) -> None:
    """8-bit preview of an image with values in [0, 1]."""
    from PIL import Image

    img = np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0)
    Image.fromarray(np.round(img * 255.0).astype(np.uint8)).save(path)


def read_json(path) -> dict:
    with open(path) as f:
        return json.load(f)


def write_json(obj, path) -> None:
    with open(path, "w") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")
