"""Segmentation losses with analytic gradients w.r.t. the foreground probability.

Every loss works on a single item (any spatial shape) and returns a
:class:`LossResult` whose ``grad`` has the shape of ``s``.  All losses are
mean-reduced over pixels, except GDL which is a ratio of sums.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .edt import squared_edt
from .exceptions import ShapeError
from .grid import as_array, threshold

EPS = 1e-10


@dataclass
class LossResult:
    value: float
    grad: np.ndarray

    def __add__(self, other: "LossResult") -> "LossResult":
        return LossResult(self.value + other.value, self.grad + other.grad)

    def __mul__(self, k: float) -> "LossResult":
        return LossResult(k * self.value, k * self.grad)

    __rmul__ = __mul__


@dataclass(frozen=True)
class HyperParams:
    w0: float = 10.0
    sigma: float = 5.0
    gamma: float = 2.0
    beta: float = 2.0
    epsilon: float = EPS
    delta: float = 0.5

    def __post_init__(self):
        if self.w0 < 0 or self.sigma <= 0 or self.gamma < 0 or self.beta < 0:
            raise ValueError(f"invalid loss hyper-parameters: {self}")
        if self.epsilon <= 0 or not 0 < self.delta < 1:
            raise ValueError(f"invalid epsilon/delta: {self}")


def _pair(s, other, name="g"):
    s, _ = as_array(s)
    other, _ = as_array(other)
    if s.shape != other.shape:
        raise ShapeError(f"s has shape {s.shape} but {name} has shape {other.shape}")
    return s, other


def boundary_loss(s, phi) -> LossResult:
    """Mean of ``phi * s``; the gradient is ``phi / n_pixels``."""
    s, phi = _pair(s, phi, "phi")
    n = s.size
    return LossResult(float(np.sum(phi * s) / n), phi / n)


def gdl(s, g, eps: float = EPS) -> LossResult:
    """Two-class generalized Dice loss with inverse squared class-volume weights."""
    s, g = _pair(s, g)
    g = g.astype(s.dtype, copy=False)
    w_fg = 1.0 / (g.sum() + eps) ** 2
    w_bg = 1.0 / ((1 - g).sum() + eps) ** 2
    inter = w_fg * np.sum(g * s) + w_bg * np.sum((1 - g) * (1 - s))
    union = w_fg * np.sum(s + g) + w_bg * np.sum(2 - s - g) + eps
    value = 1.0 - 2.0 * inter / union
    d_inter = w_fg * g - w_bg * (1 - g)
    d_union = w_fg - w_bg
    grad = -2.0 * (d_inter * union - inter * d_union) / union**2
    return LossResult(float(value), np.broadcast_to(grad, s.shape).copy())


def boundary_distance(g, spacing=None) -> np.ndarray:
    """Unsigned distance from each pixel to the region of the other class.

    Used as the proximity term of the distance-weighted cross-entropy.  When
    ``g`` is empty or full there is no boundary and the distance is ``inf``.
    """
    g, spacing = as_array(g, spacing)
    fg = g != 0
    if fg.all() or not fg.any():
        return np.full(g.shape, np.inf)
    return np.sqrt(np.where(fg, squared_edt(~fg, spacing), squared_edt(fg, spacing)))


def _clamp(s, eps):
    sc = np.clip(s, eps, 1 - eps)
    live = (s > eps) & (s < 1 - eps)
    return sc, live


def weighted_ce(s, g, D, w0: float = 10.0, sigma: float = 5.0, eps: float = EPS) -> LossResult:
    """Cross-entropy weighted by class frequency plus a boundary-proximity term.

    Pixel weight for its own class ``c``: ``w_c + w0 * exp(-D**2 / (2 sigma**2))``
    with ``w_c`` the fraction of pixels belonging to ``c``.
    """
    s, g = _pair(s, g)
    D, _ = as_array(D)
    if D.shape != s.shape:
        raise ShapeError(f"distance map shape {D.shape} does not match {s.shape}")
    fg = (g != 0).astype(s.dtype)
    n = s.size
    proximity = w0 * np.exp(-(D.astype(np.float64) ** 2) / (2.0 * sigma**2))
    u_fg = fg * (fg.mean() + proximity)
    u_bg = (1 - fg) * ((1 - fg).mean() + proximity)
    sc, live = _clamp(s, eps)
    value = -np.sum(u_fg * np.log(sc) + u_bg * np.log(1 - sc)) / n
    grad = (-u_fg / sc + u_bg / (1 - sc)) / n
    return LossResult(float(value), np.where(live, grad, 0.0).astype(s.dtype, copy=False))


def cross_entropy(s, g, eps: float = EPS) -> LossResult:
    s, g = _pair(s, g)
    fg = (g != 0).astype(s.dtype)
    sc, live = _clamp(s, eps)
    n = s.size
    value = -np.sum(fg * np.log(sc) + (1 - fg) * np.log(1 - sc)) / n
    grad = (-fg / sc + (1 - fg) / (1 - sc)) / n
    return LossResult(float(value), np.where(live, grad, 0.0))


def focal(s, g, gamma: float = 2.0, eps: float = EPS) -> LossResult:
    """Focal loss: cross-entropy modulated by ``(1 - p_true) ** gamma``."""
    s, g = _pair(s, g)
    fg = g != 0
    sc, live = _clamp(s, eps)
    # p: probability of the true class; dp/ds = +1 on foreground, -1 on background.
    p = np.where(fg, sc, 1 - sc)
    sign = np.where(fg, 1.0, -1.0)
    n = s.size
    mod = (1 - p) ** gamma
    value = -np.sum(mod * np.log(p)) / n
    if gamma == 0:
        dmod = np.zeros_like(p)
    else:
        dmod = -gamma * (1 - p) ** (gamma - 1)
    dp = -(dmod * np.log(p) + mod / p)
    return LossResult(float(value), np.where(live, sign * dp / n, 0.0))


def hausdorff_loss(s, g, beta: float = 2.0, delta: float = 0.5, spacing=None,
                   dist_g: Optional[np.ndarray] = None,
                   dist_s: Optional[np.ndarray] = None) -> LossResult:
    """Mean of ``(g - s)**2 * (D_G**beta + D_S**beta)``.

    ``D_S`` is the distance map of the thresholded prediction and is
    recomputed on every call unless passed in.  Both maps are constants for
    the gradient.  An empty (or full) region contributes a zero map.
    """
    s, g = _pair(s, g)
    _, spacing = as_array(g, spacing)
    if dist_g is None:
        dist_g = region_distance(g, spacing)
    if dist_s is None:
        dist_s = region_distance(threshold(s, delta), spacing)
    weight = dist_g**beta + dist_s**beta
    diff = g.astype(s.dtype) - s
    n = s.size
    value = np.sum(diff**2 * weight) / n
    grad = -2.0 * diff * weight / n
    return LossResult(float(value), grad)


def region_distance(mask, spacing=None) -> np.ndarray:
    """Distance to the boundary of ``mask``: outside, to the region; inside, to the complement.

    Zero map if the region is empty or covers the whole domain.
    """
    d = boundary_distance(mask, spacing)
    return np.where(np.isinf(d), 0.0, d)


REGIONAL = ("gdl", "weighted_ce", "focal")


def regional_loss(name: str, s, g, hp: HyperParams = HyperParams(), dist=None) -> LossResult:
    """Dispatch to one of the regional losses by name."""
    if name == "gdl":
        return gdl(s, g, hp.epsilon)
    if name == "weighted_ce":
        if dist is None:
            dist = boundary_distance(g)
        return weighted_ce(s, g, dist, hp.w0, hp.sigma, hp.epsilon)
    if name == "focal":
        return focal(s, g, hp.gamma, hp.epsilon)
    raise ValueError(f"unknown regional loss {name!r}; expected one of {REGIONAL}")


def combined(s, g, phi, regional="gdl", weights=(1.0, 1.0), hp: HyperParams = HyperParams(),
             dist=None) -> LossResult:
    """``w_R * regional + w_B * boundary_loss``.

    ``regional`` is a loss name or a callable ``(s, g) -> LossResult``.
    """
    w_r, w_b = weights
    if callable(regional):
        reg = regional(s, g)
    else:
        reg = regional_loss(regional, s, g, hp, dist)
    return w_r * reg + w_b * boundary_loss(s, phi)

