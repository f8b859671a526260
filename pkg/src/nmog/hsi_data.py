"""Hyperspectral cube container, binary I/O and cube/matrix layout conversion.

Cube files are little-endian: the 4-byte magic ``HSIC``, three uint32
dimensions (rows, cols, bands), then ``rows*cols*bands`` float32 values
stored band-major and row-major within each band.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"HSIC"
_HEADER = struct.Struct("<4sIII")


class CubeFormatError(ValueError):
    """Raised when a cube file or array violates the cube format."""


@dataclass(frozen=True)
class Cube:
    """A hyperspectral cube of shape ``(rows, cols, bands)``."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 3 or min(data.shape) < 1:
            raise CubeFormatError(f"cube must be a non-empty 3-D array, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise CubeFormatError("cube contains non-finite values")
        object.__setattr__(self, "data", data)

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def bands(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    def band(self, j: int) -> np.ndarray:
        return self.data[:, :, j]


@dataclass(frozen=True)
class ObservationMatrix:
    """``N x B`` matrix view of a cube: one column per band."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or min(values.shape) < 1:
            raise ValueError(f"observation matrix must be non-empty 2-D, got {values.shape}")
        object.__setattr__(self, "values", values)

    @property
    def n_pixels(self) -> int:
        return self.values.shape[0]

    @property
    def n_bands(self) -> int:
        return self.values.shape[1]


def save_cube(cube: Cube, path) -> None:
    rows, cols, bands = cube.shape
    # band-major, row-major within band
    payload = np.ascontiguousarray(np.transpose(cube.data, (2, 0, 1)), dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, rows, cols, bands))
        fh.write(payload.tobytes())


def load_cube(path) -> Cube:
    """Read a cube file. Values are returned as stored (no normalization)."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such cube file: {path}")
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise CubeFormatError(f"{path}: truncated header")
    magic, rows, cols, bands = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise CubeFormatError(f"{path}: bad magic {magic!r}")
    count = rows * cols * bands
    if count == 0:
        raise CubeFormatError(f"{path}: zero dimension in header ({rows}, {cols}, {bands})")
    if len(raw) - _HEADER.size != 4 * count:
        raise CubeFormatError(
            f"{path}: header declares {count} values but payload holds "
            f"{(len(raw) - _HEADER.size) / 4:g}"
        )
    payload = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size)
    if not np.all(np.isfinite(payload)):
        raise CubeFormatError(f"{path}: payload contains non-finite values")
    data = payload.reshape(bands, rows, cols).transpose(1, 2, 0)
    return Cube(data.astype(np.float64))


def band_ranges(cube: Cube) -> tuple[np.ndarray, np.ndarray]:
    """Per-band minimum and maximum, each of length ``bands``."""
    return cube.data.min(axis=(0, 1)), cube.data.max(axis=(0, 1))


def normalize_bands(cube: Cube) -> Cube:
    """Affinely map every band onto [0, 1]; constant bands become all zeros."""
    lo, hi = band_ranges(cube)
    span = hi - lo
    flat = span == 0
    scale = np.where(flat, 1.0, span)
    out = (cube.data - lo) / scale
    out[:, :, flat] = 0.0
    return Cube(out)


def cube_to_matrix(cube: Cube) -> ObservationMatrix:
    """Pixel ``(r, c)`` becomes row ``r*cols + c``; band ``j`` becomes column ``j``."""
    return ObservationMatrix(cube.data.reshape(cube.rows * cube.cols, cube.bands))


def matrix_to_cube(m: ObservationMatrix, rows: int, cols: int) -> Cube:
    if rows * cols != m.n_pixels:
        raise ValueError(f"rows*cols = {rows * cols} does not match {m.n_pixels} pixels")
    return Cube(m.values.reshape(rows, cols, m.n_bands))
