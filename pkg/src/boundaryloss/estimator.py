"""scikit-learn style estimators wrapping the network, losses and schedules."""
from __future__ import annotations

import math
import time
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import ConfigError, ShapeError
from .grid import threshold
from .levelset import signed_distance
from .losses import (
    REGIONAL,
    HyperParams,
    LossResult,
    boundary_distance,
    boundary_loss,
    hausdorff_loss,
    region_distance,
    regional_loss,
)
from .metrics import EvalReport
from .model import AdamState, PlateauHalver, TinySegNet, adam_step
from .schedule import AlphaSchedule

BOUNDARY_MODES = ("off", "2d", "3d", "hausdorff")
LOG_COLUMNS = ("epoch", "loss_total", "loss_regional", "loss_boundary", "alpha",
               "val_dsc", "val_hd95", "lr", "batch_ms")


def check_images(X, name="X"):
    """Return images as ``(n, H, W, C)`` or ``(n, Z, H, W, C)`` float arrays."""
    X = np.asarray(X)
    if X.dtype.kind not in "fiub":
        raise ShapeError(f"{name} must be numeric")
    if X.ndim == 3:
        X = X[..., None]
    if X.ndim not in (4, 5):
        raise ShapeError(f"{name} must be (n, H, W[, C]) or (n, Z, H, W, C), got {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ShapeError(f"{name} contains non-finite values")
    return X


def check_masks(y, images, name="y"):
    y = np.asarray(y)
    if y.shape != images.shape[:-1]:
        raise ShapeError(f"{name} has shape {y.shape}, expected {images.shape[:-1]}")
    if not np.all((y == 0) | (y == 1)):
        raise ShapeError(f"{name} must be binary")
    return y.astype(np.uint8)


class SignedDistanceTransformer(TransformerMixin, BaseEstimator):
    """Maps a stack of binary masks to their level-set maps.

    Stateless: ``fit`` only validates.  ``mode`` is ``"2d"`` (per slice) or
    ``"3d"`` (whole volume) and only matters for 3D masks.
    """

    def __init__(self, mode="2d", spacing=None, convention="center"):
        self.mode = mode
        self.spacing = spacing
        self.convention = convention

    def fit(self, X, y=None):
        self.n_dims_in_ = np.asarray(X).ndim - 1
        return self

    def transform(self, X):
        X = np.asarray(X)
        if X.ndim not in (3, 4):
            raise ShapeError(f"expected a stack of 2D or 3D masks, got shape {X.shape}")
        return np.stack([signed_distance(m, self.mode, self.spacing, self.convention) for m in X])


class BoundaryLossSegmenter(BaseEstimator):
    """Binary segmenter trained with a regional loss plus a scheduled second term.

    ``boundary`` selects the second term: ``"off"`` (regional only), ``"2d"`` /
    ``"3d"`` (boundary loss; the mode matters when ``phi`` comes from volumes)
    or ``"hausdorff"``.  ``regional="none"`` trains on the second term alone
    with weight ``alpha_init``.

    After ``fit``, ``history_`` holds one dict per epoch and the network
    weights are those of the epoch with the best validation DSC (the final
    weights when no validation set is given).
    """

    def __init__(self, regional="gdl", boundary="2d", alpha_strategy="rebalance",
                 alpha_init=0.01, alpha_step=0.01, alpha_cap=None, epochs=40, batch_size=8,
                 lr=1e-3, lr_patience=20, delta=0.5, w0=10.0, sigma=5.0, gamma=2.0, beta=2.0,
                 spacing=None, seed=0, dtype="float32", prior=0.01, time_batches=False, verbose=False):
        self.regional = regional
        self.boundary = boundary
        self.alpha_strategy = alpha_strategy
        self.alpha_init = alpha_init
        self.alpha_step = alpha_step
        self.alpha_cap = alpha_cap
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.lr_patience = lr_patience
        self.delta = delta
        self.w0 = w0
        self.sigma = sigma
        self.gamma = gamma
        self.beta = beta
        self.spacing = spacing
        self.seed = seed
        self.dtype = dtype
        self.prior = prior
        self.time_batches = time_batches
        self.verbose = verbose

    # -- configuration -------------------------------------------------
    def _validate_params(self):
        if self.regional not in REGIONAL + ("none",):
            raise ConfigError(f"regional must be one of {REGIONAL + ('none',)}, got {self.regional!r}")
        if self.boundary not in BOUNDARY_MODES:
            raise ConfigError(f"boundary must be one of {BOUNDARY_MODES}, got {self.boundary!r}")
        if self.regional == "none" and self.boundary == "off":
            raise ConfigError("at least one loss term is required")
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("epochs must be >= 0 and batch_size >= 1")
        return HyperParams(self.w0, self.sigma, self.gamma, self.beta, delta=self.delta)

    def schedule(self) -> Optional[AlphaSchedule]:
        if self.boundary == "off":
            return None
        strategy = "constant" if self.regional == "none" else self.alpha_strategy
        return AlphaSchedule(strategy, self.alpha_init, self.alpha_step, self.alpha_cap)

    def loss_weights(self, epoch: int):
        sched = self.schedule()
        if sched is None:
            return 1.0, 0.0
        w_r, w_b = sched.weights(epoch)
        return (0.0 if self.regional == "none" else w_r), w_b

    # -- loss ----------------------------------------------------------
    def _item_losses(self, s, g, phi, dist_g, hp, spacing):
        if self.regional == "none":
            reg = LossResult(0.0, np.zeros_like(s))
        else:
            reg = regional_loss(self.regional, s, g, hp, dist=dist_g)
        if self.boundary == "off":
            sec = LossResult(0.0, np.zeros_like(s))
        elif self.boundary == "hausdorff":
            sec = hausdorff_loss(s, g, hp.beta, hp.delta, spacing, dist_g=region_distance(g, spacing)
                                 if dist_g is None else np.where(np.isinf(dist_g), 0.0, dist_g))
        else:
            sec = boundary_loss(s, phi)
        return reg, sec

    def batch_loss(self, s, g, phi, dist, weights, hp=None, spacing=None):
        """Mean over the batch of ``w_R * regional + w_B * second``.

        Returns ``(total, regional, second)`` as :class:`LossResult` objects
        whose gradients are w.r.t. the batch of probabilities ``s``.
        """
        hp = hp or self._validate_params()
        spacing = spacing or getattr(self, "_spacing2d", None)
        w_r, w_b = weights
        n = len(s)
        reg_v, sec_v = 0.0, 0.0
        reg_g, sec_g = np.zeros(s.shape), np.zeros(s.shape)
        for i in range(n):
            reg, sec = self._item_losses(s[i].astype(np.float64), g[i], None if phi is None else phi[i],
                                         None if dist is None else dist[i], hp, spacing)
            reg_v += reg.value / n
            sec_v += sec.value / n
            reg_g[i] = reg.grad / n
            sec_g[i] = sec.grad / n
        regional = LossResult(reg_v, reg_g)
        second = LossResult(sec_v, sec_g)
        return w_r * regional + w_b * second, regional, second

    # -- data prep -----------------------------------------------------
    def _prepare_targets(self, y, phi, spacing):
        n = len(y)
        if self.boundary in ("2d", "3d"):
            if phi is None:
                phi = np.stack([signed_distance(m, "2d", spacing) for m in y])
            phi = np.asarray(phi, dtype=np.float64)
            if phi.shape != y.shape:
                raise ShapeError(f"phi has shape {phi.shape}, expected {y.shape}")
        dist = None
        if self.regional == "weighted_ce" or self.boundary == "hausdorff":
            dist = np.stack([boundary_distance(y[i], spacing) for i in range(n)])
        return phi, dist

    # -- public API ----------------------------------------------------
    def fit(self, X, y, phi=None, eval_set=None):
        """Train on 2D images ``X`` (n, H, W[, C]) with masks ``y`` (n, H, W).

        ``phi`` optionally supplies precomputed level-set maps (for instance
        slices of volume maps).  ``eval_set=(X_val, y_val)`` enables
        per-epoch validation; validation cases may be 2D images or volumes
        ``(n, Z, H, W, C)`` evaluated slice by slice.
        """
        hp = self._validate_params()
        X = check_images(X)
        if X.ndim != 4:
            raise ShapeError("training images must be 2D: (n, H, W[, C])")
        y = check_masks(y, X)
        dtype = np.dtype(self.dtype)
        spacing = tuple(self.spacing) if self.spacing is not None else (1.0,) * (y.ndim - 1)
        self._spacing2d = spacing[-2:]
        phi, dist = self._prepare_targets(y, phi, self._spacing2d)
        if eval_set is not None:
            X_val = check_images(eval_set[0], "X_val")
            y_val = check_masks(eval_set[1], X_val, "y_val")

        rng = np.random.default_rng(self.seed)
        self.net_ = TinySegNet(X.shape[-1], seed=int(rng.integers(2**63)), dtype=dtype,
                               prior=self.prior)
        self.adam_ = AdamState(lr=self.lr)
        halver = PlateauHalver(self.lr_patience)
        self.history_ = []
        self.status_ = "ok"
        best = -math.inf
        self.best_epoch_ = None
        best_params = None
        Xc = X.astype(dtype)
        n = len(X)

        for epoch in range(self.epochs):
            weights = self.loss_weights(epoch)
            order = rng.permutation(n)
            sums = np.zeros(3)
            n_batches = 0
            batch_ms = []
            for start in range(0, n, self.batch_size):
                idx = order[start : start + self.batch_size]
                t0 = time.perf_counter()
                s, cache = self.net_.forward(Xc[idx])
                total, reg, sec = self.batch_loss(
                    s, y[idx], None if phi is None else phi[idx],
                    None if dist is None else dist[idx], weights, hp,
                )
                if not math.isfinite(total.value) or not np.all(np.isfinite(total.grad)):
                    self.status_ = f"aborted: non-finite loss at epoch {epoch}"
                    self.history_.append(self._row(epoch, [total.value, reg.value, sec.value], 1,
                                                   weights[1], math.nan, math.nan, math.nan))
                    return self._finish(best_params)
                recomposed = weights[0] * reg.value + weights[1] * sec.value
                if abs(total.value - recomposed) > 1e-9:
                    raise AssertionError("combined loss is not the weighted sum of its terms")
                grads = self.net_.backward(cache, total.grad)
                adam_step(self.adam_, self.net_.params, grads)
                self.net_.mark_updated()
                batch_ms.append(1e3 * (time.perf_counter() - t0))
                sums += (total.value, reg.value, sec.value)
                n_batches += 1
            val_dsc = val_hd = math.nan
            if eval_set is not None:
                report = self.evaluate(X_val, y_val)
                val_dsc, val_hd = report.mean_dsc, report.mean_hd95
                if val_dsc > best:
                    best = val_dsc
                    self.best_epoch_ = epoch
                    best_params = {k: v.copy() for k, v in self.net_.params.items()}
            row = self._row(epoch, sums, max(n_batches, 1), weights[1], val_dsc, val_hd, self.adam_.lr,
                            float(np.mean(batch_ms)) if self.time_batches and batch_ms else math.nan)
            self.history_.append(row)
            if eval_set is not None:
                self.adam_.lr = halver.step(val_dsc, self.adam_.lr)
            if self.verbose:
                print(" ".join(f"{k}={v:.4g}" if isinstance(v, float) else f"{k}={v}" for k, v in row.items()))
        return self._finish(best_params)

    def _row(self, epoch, sums, n_batches, alpha, val_dsc, val_hd, lr, batch_ms=math.nan):
        total, reg, sec = (float(v) / n_batches for v in sums)
        return dict(zip(LOG_COLUMNS, (epoch, total, reg, sec, float(alpha), float(val_dsc),
                                      float(val_hd), float(lr), float(batch_ms))))

    def _finish(self, best_params):
        self.final_params_ = {k: v.copy() for k, v in self.net_.params.items()}
        if best_params is not None:
            self.net_.params.update(best_params)
            self.net_.mark_updated()
        return self

    def predict_proba(self, X, batch_size: int = 16):
        """Foreground probabilities with the spatial shape of ``X``."""
        check_is_fitted(self, "net_")
        X = check_images(X)
        flat = X.reshape((-1,) + X.shape[-3:])
        out = np.empty(flat.shape[:-1])
        for start in range(0, len(flat), batch_size):
            s, _ = self.net_.forward(flat[start : start + batch_size].astype(self.net_.dtype), keep_cache=False)
            out[start : start + batch_size] = s
        return out.reshape(X.shape[:-1])

    def predict(self, X):
        return threshold(self.predict_proba(X), self.delta)

    def evaluate(self, X, y, spacing=None) -> EvalReport:
        X = check_images(X)
        y = check_masks(y, X)
        spacing = spacing or (tuple(self.spacing) if self.spacing is not None else None)
        pred = self.predict(X)
        report = EvalReport()
        for i in range(len(y)):
            sp = spacing[-(y.ndim - 1):] if spacing is not None else None
            report.add(pred[i], y[i], sp, case=str(i))
        return report

    def score(self, X, y):
        """Mean DSC over cases."""
        return self.evaluate(X, y).mean_dsc
