"""Overlap and boundary-distance metrics.

HD95 is the maximum of the two directed 95th percentiles.  The directed
set from ``A`` to ``B`` holds, for every boundary pixel of ``A``, the distance
to the nearest boundary pixel of ``B``.  Percentiles interpolate linearly
between order statistics: for sorted values ``x[0..n-1]`` and rank
``h = (n - 1) * 0.95`` the result is
``x[floor(h)] + (h - floor(h)) * (x[floor(h) + 1] - x[floor(h)])``
(``numpy.percentile`` with ``method="linear"``).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .edt import squared_edt
from .exceptions import ShapeError
from .grid import as_array
from .levelset import boundary_mask


def _pair(pred, g):
    pred, spacing = as_array(pred)
    g, _ = as_array(g)
    if pred.shape != g.shape:
        raise ShapeError(f"shape mismatch {pred.shape} vs {g.shape}")
    return pred != 0, g != 0, spacing


def dsc(pred, g) -> float:
    """Dice coefficient; 1.0 when both masks are empty."""
    p, t, _ = _pair(pred, g)
    total = p.sum() + t.sum()
    if total == 0:
        return 1.0
    return float(2.0 * np.logical_and(p, t).sum() / total)


def directed_boundary_distances(a, b, spacing) -> np.ndarray:
    """Distances from each boundary pixel of ``a`` to the boundary of ``b``."""
    ba, bb = boundary_mask(a), boundary_mask(b)
    return np.sqrt(squared_edt(bb, spacing)[ba])


def domain_diagonal(shape, spacing) -> float:
    return float(np.linalg.norm(np.asarray(shape) * np.asarray(spacing)))


def hd95(pred, g, spacing=None, percentile: float = 95.0) -> float:
    """Symmetric 95th-percentile boundary distance in mm.

    Returns 0 for identical masks (including both empty) and the domain
    diagonal (a sentinel) when exactly one mask is empty or when a mask
    covers the whole domain and so has no boundary pixel.
    """
    p, t, grid_spacing = _pair(pred, g)
    spacing = grid_spacing if spacing is None else as_array(p, spacing)[1]
    if np.array_equal(p, t):
        return 0.0
    if not p.any() or not t.any() or p.all() or t.all():
        return domain_diagonal(p.shape, spacing)
    d_pt = directed_boundary_distances(p, t, spacing)
    d_tp = directed_boundary_distances(t, p, spacing)
    return float(max(np.percentile(d_pt, percentile), np.percentile(d_tp, percentile)))


@dataclass
class EvalReport:
    """Per-case DSC/HD95 with summary statistics.

    ``hd95_sentinel[i]`` marks cases where one mask was empty and the HD95
    value is the domain-diagonal sentinel.  ``run_means`` collects per-run
    mean DSC when the report aggregates several independent runs.
    """

    dsc: List[float] = field(default_factory=list)
    hd95: List[float] = field(default_factory=list)
    hd95_sentinel: List[bool] = field(default_factory=list)
    cases: List[str] = field(default_factory=list)
    run_dsc: Optional[List[float]] = None
    run_hd95: Optional[List[float]] = None

    def add(self, pred, g, spacing=None, case: str = "") -> None:
        p = np.asarray(as_array(pred)[0]) != 0
        t = np.asarray(as_array(g)[0]) != 0
        self.dsc.append(dsc(p, t))
        self.hd95.append(hd95(p, t, spacing))
        self.hd95_sentinel.append(bool(not np.array_equal(p, t) and (not p.any() or not t.any() or p.all() or t.all())))
        self.cases.append(case)

    @property
    def mean_dsc(self) -> float:
        vals = self.run_dsc if self.run_dsc is not None else self.dsc
        return float(np.mean(vals)) if vals else float("nan")

    @property
    def std_dsc(self) -> float:
        vals = self.run_dsc if self.run_dsc is not None else self.dsc
        return float(np.std(vals)) if vals else float("nan")

    @property
    def mean_hd95(self) -> float:
        vals = self.run_hd95 if self.run_hd95 is not None else self.hd95
        return float(np.mean(vals)) if vals else float("nan")

    @property
    def std_hd95(self) -> float:
        vals = self.run_hd95 if self.run_hd95 is not None else self.hd95
        return float(np.std(vals)) if vals else float("nan")

    @classmethod
    def over_runs(cls, reports: List["EvalReport"]) -> "EvalReport":
        """Combine single-run reports; mean/std are then taken over runs."""
        out = cls()
        for r in reports:
            out.dsc += r.dsc
            out.hd95 += r.hd95
            out.hd95_sentinel += r.hd95_sentinel
            out.cases += r.cases
        out.run_dsc = [r.mean_dsc for r in reports]
        out.run_hd95 = [r.mean_hd95 for r in reports]
        return out

    def to_dict(self) -> dict:
        return {
            "mean_dsc": self.mean_dsc,
            "std_dsc": self.std_dsc,
            "mean_hd95": self.mean_hd95,
            "std_hd95": self.std_hd95,
            "cases": self.cases,
            "dsc": self.dsc,
            "hd95": self.hd95,
            "hd95_sentinel": self.hd95_sentinel,
            "run_dsc": self.run_dsc,
            "run_hd95": self.run_hd95,
        }
