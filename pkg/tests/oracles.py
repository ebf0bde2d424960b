"""Slow, obviously-correct reference implementations used only by the tests.

Nothing here imports the package's numerical code, so agreement is evidence
of correctness rather than of shared bugs.
"""
import itertools
import math

import numpy as np


def centers(shape, spacing):
    idx = np.array(list(itertools.product(*[range(n) for n in shape])), dtype=float)
    return idx * np.asarray(spacing, dtype=float)


def brute_edt(features, spacing=None):
    features = np.asarray(features, dtype=bool)
    spacing = np.ones(features.ndim) if spacing is None else np.asarray(spacing, float)
    pts = centers(features.shape, spacing)
    feat = pts[features.ravel()]
    d = np.empty(len(pts))
    step = max(1, 2_000_000 // max(len(feat), 1))  # bound the pairwise block size
    for i in range(0, len(pts), step):
        block = pts[i : i + step]
        d[i : i + step] = np.sqrt(((block[:, None, :] - feat[None, :, :]) ** 2).sum(-1)).min(axis=1)
    return d.reshape(features.shape)


def brute_signed(g, spacing=None):
    g = np.asarray(g, dtype=bool)
    if not g.any() or g.all():
        return np.zeros(g.shape)
    return np.where(g, -brute_edt(~g, spacing), brute_edt(g, spacing))


def brute_boundary(g):
    """Foreground pixels with a face-adjacent background pixel inside the domain."""
    g = np.asarray(g, dtype=bool)
    out = np.zeros_like(g)
    for idx in zip(*np.nonzero(g)):
        for ax in range(g.ndim):
            for step in (-1, 1):
                nb = list(idx)
                nb[ax] += step
                if 0 <= nb[ax] < g.shape[ax] and not g[tuple(nb)]:
                    out[idx] = True
    return out


def percentile_linear(values, q):
    x = sorted(values)
    h = (len(x) - 1) * q / 100.0
    lo = math.floor(h)
    hi = min(lo + 1, len(x) - 1)
    return x[lo] + (h - lo) * (x[hi] - x[lo])


def brute_hd95(a, b, spacing=None):
    a, b = np.asarray(a, bool), np.asarray(b, bool)
    spacing = np.ones(a.ndim) if spacing is None else np.asarray(spacing, float)
    if np.array_equal(a, b):
        return 0.0
    if not a.any() or not b.any() or a.all() or b.all():
        return float(np.linalg.norm(np.asarray(a.shape) * spacing))
    pa = np.argwhere(brute_boundary(a)) * spacing
    pb = np.argwhere(brute_boundary(b)) * spacing
    d = np.sqrt(((pa[:, None, :] - pb[None, :, :]) ** 2).sum(-1))
    return max(percentile_linear(d.min(axis=1), 95), percentile_linear(d.min(axis=0), 95))


def brute_dsc(a, b):
    a, b = np.asarray(a, bool).ravel(), np.asarray(b, bool).ravel()
    inter = sum(1 for x, y in zip(a, b) if x and y)
    total = int(a.sum() + b.sum())
    return 1.0 if total == 0 else 2.0 * inter / total


# -- losses by direct formula -------------------------------------------------

def gdl_value(s, g, eps=1e-10):
    s, g = np.asarray(s, float).ravel(), np.asarray(g, float).ravel()
    wg = 1 / (g.sum() + eps) ** 2
    wb = 1 / ((1 - g).sum() + eps) ** 2
    num = wg * (g * s).sum() + wb * ((1 - g) * (1 - s)).sum()
    den = wg * (s + g).sum() + wb * ((1 - s) + (1 - g)).sum() + eps
    return 1 - 2 * num / den


def weighted_ce_value(s, g, w0, sigma, spacing=None, eps=1e-10):
    s, g = np.asarray(s, float), np.asarray(g, bool)
    n = s.size
    total = 0.0
    for c, prob in ((1, s), (0, 1 - s)):
        region = g if c == 1 else ~g
        wc = region.mean()
        if region.all() or not region.any():
            dist = np.full(s.shape, np.inf)
        else:
            dist = brute_edt(~region, spacing)  # distance from class pixels to the other class
        u = region * (wc + w0 * np.exp(-dist**2 / (2 * sigma**2)))
        total -= (u * np.log(np.clip(prob, eps, 1 - eps))).sum()
    return total / n


def ce_value(s, g, eps=1e-10):
    s, g = np.asarray(s, float), np.asarray(g, bool)
    p = np.clip(np.where(g, s, 1 - s), eps, 1 - eps)
    return float(-np.log(p).mean())


def focal_value(s, g, gamma, eps=1e-10):
    s, g = np.asarray(s, float), np.asarray(g, bool)
    p = np.clip(np.where(g, s, 1 - s), eps, 1 - eps)
    return float((-(1 - p) ** gamma * np.log(p)).mean())


def region_dist(mask, spacing=None):
    mask = np.asarray(mask, bool)
    if not mask.any() or mask.all():
        return np.zeros(mask.shape)
    return np.where(mask, brute_edt(~mask, spacing), brute_edt(mask, spacing))


def hausdorff_value(s, g, beta, delta=0.5, spacing=None):
    s, g = np.asarray(s, float), np.asarray(g, bool)
    dg = region_dist(g, spacing)
    ds = region_dist(s >= delta, spacing)
    return float(((g - s) ** 2 * (dg**beta + ds**beta)).mean())


def boundary_value(s, phi):
    return float((np.asarray(s) * np.asarray(phi)).sum() / np.asarray(s).size)


# -- finite differences --------------------------------------------------------

def central_diff(f, x, h=1e-6):
    """Central finite-difference gradient of scalar ``f`` at array ``x``."""
    x = np.array(x, dtype=float)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    g = grad.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = f(x)
        flat[i] = old - h
        fm = f(x)
        flat[i] = old
        g[i] = (fp - fm) / (2 * h)
    return grad


def rel_err(a, b, floor=1e-9):
    """Pixelwise relative error with an absolute floor in the denominator."""
    a, b = np.asarray(a, float), np.asarray(b, float)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
