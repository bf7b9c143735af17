"""P3DR raster container: float32 rasters with an explicit channel count.

Layout: magic bytes ``P3DR``, uint32 height, uint32 width, uint32 channels,
then height*width*channels little-endian float32 values in row-major order.
Used for depth maps, point maps, masks (channels=1) and feature grids.
"""

from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .errors import ValidationError

MAGIC = b"P3DR"
_HEADER = struct.Struct("<III")


def write_raster(path: str | Path, values: np.ndarray) -> None:
    """Write a (H, W) or (H, W, C) array as a P3DR file.

    Values are stored as little-endian float32. The write is atomic
    (temp file + rename) so concurrent readers never see a torn file.
    """
    arr = np.asarray(values)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3:
        raise ValidationError(f"raster must be 2-D or 3-D, got shape {np.shape(values)}")
    arr = np.ascontiguousarray(arr, dtype="<f4")
    h, w, c = arr.shape

    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(MAGIC)
            f.write(_HEADER.pack(h, w, c))
            f.write(arr.tobytes())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_raster(path: str | Path) -> np.ndarray:
    """Read a P3DR file into a (H, W, C) float32 array."""
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"raster file not found: {path}")
    data = path.read_bytes()
    if len(data) < 4 + _HEADER.size or data[:4] != MAGIC:
        raise ValidationError(f"not a P3DR raster: {path}")
    h, w, c = _HEADER.unpack_from(data, 4)
    expected = 4 + _HEADER.size + h * w * c * 4
    if len(data) != expected:
        raise ValidationError(
            f"truncated P3DR raster {path}: expected {expected} bytes, got {len(data)}"
        )
    flat = np.frombuffer(data, dtype="<f4", offset=4 + _HEADER.size)
    return flat.reshape(h, w, c).copy()


def read_plane(path: str | Path) -> np.ndarray:
    """Read a single-channel P3DR file as a (H, W) array."""
    arr = read_raster(path)
    if arr.shape[2] != 1:
        raise ValidationError(f"expected 1 channel in {path}, got {arr.shape[2]}")
    return arr[:, :, 0]
