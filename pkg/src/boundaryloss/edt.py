"""Exact Euclidean distance transform with anisotropic spacing.

Separable lower-envelope-of-parabolas transform: one pass per axis over
squared distances, each axis weighted by ``spacing**2``, with a square root
at the end.  Distances are measured between pixel centres.
"""
from __future__ import annotations

import numba
import numpy as np

from .exceptions import EmptyFeatureSet, ShapeError
from .grid import as_array


@numba.njit(cache=True)
def _envelope_lines(f, w, out):
    # f, out: (n_lines, n) squared distances; np.inf marks "no site on this line".
    n_lines, n = f.shape
    v = np.empty(n, dtype=np.int64)
    z = np.empty(n + 1, dtype=np.float64)
    for line in range(n_lines):
        row = f[line]
        k = -1
        for q in range(n):
            fq = row[q]
            if fq == np.inf:
                continue
            s = 0.0
            while k >= 0:
                p = v[k]
                s = ((fq + w * q * q) - (row[p] + w * p * p)) / (2.0 * w * (q - p))
                if s <= z[k]:
                    k -= 1
                else:
                    break
            k += 1
            v[k] = q
            z[k] = -np.inf if k == 0 else s
            z[k + 1] = np.inf
        if k < 0:
            for q in range(n):
                out[line, q] = np.inf
            continue
        j = 0
        for q in range(n):
            while z[j + 1] < q:
                j += 1
            p = v[j]
            out[line, q] = w * (q - p) * (q - p) + row[p]


def _pass(sq: np.ndarray, axis: int, step: float) -> np.ndarray:
    moved = np.moveaxis(sq, axis, -1)
    lines = np.ascontiguousarray(moved).reshape(-1, moved.shape[-1])
    out = np.empty_like(lines)
    _envelope_lines(lines, step * step, out)
    return np.moveaxis(out.reshape(moved.shape), -1, axis)


def squared_edt(features: np.ndarray, spacing) -> np.ndarray:
    """Squared distances to the nearest nonzero pixel; ``inf`` if there is none."""
    sq = np.where(np.asarray(features) != 0, 0.0, np.inf)
    for axis, step in enumerate(spacing):
        sq = _pass(sq, axis, float(step))
    return sq


def edt(features, spacing=None) -> np.ndarray:
    """Distance (mm) from every pixel centre to the nearest feature-pixel centre.

    ``features`` is a :class:`~boundaryloss.grid.BinaryMask` or any array whose
    nonzero entries are feature pixels.  Raises :class:`EmptyFeatureSet` if
    there are none.
    """
    arr, spacing = as_array(features, spacing)
    if arr.ndim == 0:
        raise ShapeError("edt needs at least one axis")
    if not np.any(arr):
        raise EmptyFeatureSet("feature mask has no nonzero pixel")
    return np.sqrt(squared_edt(arr, spacing))


def edt_per_slice(features, spacing=None):
    """Transform each z-slice of a 3D mask independently with its in-plane spacing.

    Returns ``(distances, empty)`` where ``empty[z]`` flags slices without any
    feature pixel.  Those slices are filled with ``inf``; the caller decides
    what they should become.
    """
    arr, spacing = as_array(features, spacing)
    if arr.ndim != 3:
        raise ShapeError(f"edt_per_slice expects a 3D mask, got ndim={arr.ndim}")
    empty = ~np.any(arr.reshape(arr.shape[0], -1), axis=1)
    sq = np.where(arr != 0, 0.0, np.inf)
    for axis in (1, 2):
        sq = _pass(sq, axis, float(spacing[axis]))
    return np.sqrt(sq), empty
