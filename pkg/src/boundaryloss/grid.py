"""Grid containers and the portable ``SGRID`` file format.

Arrays are stored row-major with axis order ``(y, x)`` in 2D and
``(z, y, x)`` in 3D.  Spacing follows the same axis order and is expressed
in millimetres.

File layout::

    SGRID v1 <ndim> <shape...> <spacing...> <dtype>\\n<little-endian payload>

where ``dtype`` is one of ``f32``, ``f64`` or ``u8``.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .exceptions import FormatError, InvalidThreshold, ShapeError

MAGIC = b"SGRID"
VERSION = b"v1"
_DTYPES = {"f32": np.dtype("<f4"), "f64": np.dtype("<f8"), "u8": np.dtype("u1")}
_MAX_HEADER = 4096


def _check_spacing(spacing, ndim: int) -> tuple:
    if spacing is None:
        return (1.0,) * ndim
    arr = np.atleast_1d(np.asarray(spacing, dtype=float))
    if arr.shape not in ((1,), (ndim,)):
        raise ShapeError(f"spacing {tuple(arr)} does not match ndim={ndim}")
    spacing = tuple(float(s) for s in np.broadcast_to(arr, (ndim,)))
    if not all(math.isfinite(s) and s > 0 for s in spacing):
        raise ShapeError(f"spacing must be finite and strictly positive, got {spacing}")
    return spacing


@dataclass(frozen=True)
class ScalarGrid:
    """Real-valued 2D/3D array with per-axis physical spacing."""

    values: np.ndarray
    spacing: tuple = field(default=None)

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.ndim not in (2, 3):
            raise ShapeError(f"grids are 2D or 3D, got ndim={values.ndim}")
        values = self._coerce(values)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "spacing", _check_spacing(self.spacing, values.ndim))

    def _coerce(self, values: np.ndarray) -> np.ndarray:
        if values.dtype not in (np.float32, np.float64):
            values = values.astype(np.float64)
        else:
            values = values.copy()
        if not np.all(np.isfinite(values)):
            raise ShapeError("grid values must be finite")
        return values

    @property
    def ndim(self) -> int:
        return self.values.ndim

    @property
    def shape(self) -> tuple:
        return self.values.shape

    @property
    def voxel_volume(self) -> float:
        return float(np.prod(self.spacing))


@dataclass(frozen=True)
class BinaryMask(ScalarGrid):
    """Grid whose values are exactly 0 or 1 (stored as ``uint8``)."""

    def _coerce(self, values):
        if values.dtype == bool:
            return values.astype(np.uint8)
        if not np.all((values == 0) | (values == 1)):
            raise ShapeError("binary mask values must be 0 or 1")
        return values.astype(np.uint8)


@dataclass(frozen=True)
class ProbMap(ScalarGrid):
    """Foreground probability map with values in [0, 1]."""

    def _coerce(self, values):
        values = super()._coerce(values)
        if values.size and (values.min() < 0 or values.max() > 1):
            raise ShapeError("probabilities must lie in [0, 1]")
        return values


GridLike = Union[ScalarGrid, np.ndarray]


def as_array(x, spacing=None, dtype=None):
    """Return ``(array, spacing)`` for either a grid or an array-like.

    An explicit ``spacing`` overrides the one carried by a grid.
    """
    if isinstance(x, ScalarGrid):
        arr = x.values
        spacing = x.spacing if spacing is None else spacing
    else:
        arr = np.asarray(x)
    if dtype is not None:
        arr = arr.astype(dtype, copy=False)
    return arr, _check_spacing(spacing, arr.ndim) if arr.ndim else ()


def threshold(p, delta: float = 0.5):
    """Binarize a probability map: 1 where ``p >= delta``.

    Returns a :class:`BinaryMask` when given a grid, otherwise a ``uint8`` array.
    """
    if not 0.0 < delta < 1.0:
        raise InvalidThreshold(f"delta must lie in (0, 1), got {delta}")
    if isinstance(p, ScalarGrid):
        return BinaryMask(p.values >= delta, p.spacing)
    return (np.asarray(p) >= delta).astype(np.uint8)


def _dtype_code(arr: np.ndarray, binary: bool) -> str:
    if binary or arr.dtype in (np.uint8, bool):
        return "u8"
    if arr.dtype == np.float32:
        return "f32"
    return "f64"


def write_grid(grid: ScalarGrid, path) -> None:
    code = _dtype_code(grid.values, isinstance(grid, BinaryMask))
    header = " ".join(
        [MAGIC.decode(), VERSION.decode(), str(grid.ndim)]
        + [str(n) for n in grid.shape]
        + [repr(float(s)) for s in grid.spacing]
        + [code]
    )
    payload = np.ascontiguousarray(grid.values, dtype=_DTYPES[code]).tobytes()
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii") + b"\n")
        fh.write(payload)


def read_grid(path: Union[str, os.PathLike]) -> ScalarGrid:
    """Read a grid file; ``u8`` payloads come back as :class:`BinaryMask`."""
    with open(path, "rb") as fh:
        data = fh.read()
    nl = data.find(b"\n", 0, _MAX_HEADER)
    if nl < 0:
        raise FormatError("missing header terminator")
    tokens = data[:nl].split()
    if len(tokens) < 3 or tokens[0] != MAGIC or tokens[1] != VERSION:
        raise FormatError("bad magic")
    try:
        ndim = int(tokens[2])
    except ValueError:
        raise FormatError("ndim is not an integer") from None
    if ndim not in (2, 3):
        raise FormatError(f"unsupported ndim {ndim}")
    if len(tokens) != 3 + 2 * ndim + 1:
        raise FormatError(
            f"header declares {ndim}D but carries {len(tokens) - 4} shape/spacing tokens"
        )
    try:
        shape = tuple(int(t) for t in tokens[3 : 3 + ndim])
        spacing = tuple(float(t) for t in tokens[3 + ndim : 3 + 2 * ndim])
    except ValueError:
        raise FormatError("malformed shape or spacing") from None
    code = tokens[-1].decode("ascii", "replace")
    if code not in _DTYPES:
        raise FormatError(f"unknown dtype {code!r}")
    if any(n <= 0 for n in shape):
        raise FormatError(f"non-positive extent in {shape}")
    dtype = _DTYPES[code]
    payload = data[nl + 1 :]
    expected = int(np.prod(shape)) * dtype.itemsize
    if len(payload) != expected:
        raise FormatError(f"payload is {len(payload)} bytes, expected {expected}")
    values = np.frombuffer(payload, dtype=dtype).reshape(shape)
    if code != "u8":
        values = values.astype(values.dtype.newbyteorder("="))
    try:
        if code == "u8":
            return BinaryMask(values, spacing)
        return ScalarGrid(values, spacing)
    except ShapeError as exc:
        raise FormatError(str(exc)) from None
