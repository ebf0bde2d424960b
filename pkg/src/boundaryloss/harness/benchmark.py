"""Per-batch wall-clock comparison of loss variants under identical conditions."""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Dict, List, Sequence

import numpy as np

from ..estimator import BoundaryLossSegmenter
from ..losses import HyperParams
from ..model import AdamState, TinySegNet, adam_step
from ..synthdata import SynthConfig, generate
from .experiment import level_sets

# variant name -> (regional, second term)
VARIANTS = {
    "gdl": ("gdl", "off"),
    "gdl+boundary": ("gdl", "2d"),
    "gdl+hausdorff": ("gdl", "hausdorff"),
}


@dataclass
class TimingRow:
    variant: str
    mean_ms: float
    std_ms: float
    n_batches: int
    samples_ms: List[float]


def benchmark_losses(n_batches: int = 200, batch_size: int = 8, shape=(64, 64), seed: int = 0,
                     variants: Sequence[str] = tuple(VARIANTS), warmup: int = 5,
                     dtype: str = "float32") -> List[TimingRow]:
    """Time full training steps (forward, loss, backward, Adam) per variant.

    Variants are interleaved batch by batch, in rotating order, so drifts in
    machine load hit all of them equally.  Distance maps that depend only on
    the ground truth are precomputed; the Hausdorff prediction map is
    recomputed every step.
    """
    # ~0.3% foreground, but at least a few pixels on small grids
    frac = min(0.05, max(0.003, 12.0 / float(np.prod(shape))))
    synth = SynthConfig(shape=tuple(shape), seed=seed, val_fraction=0.0, target_foreground_fraction=frac)
    ds = generate(synth, max(batch_size * 4, 16))
    X = ds.images.astype(dtype)
    y = ds.masks
    phi = level_sets(y, "2d", ds.spacing)
    ests, nets, states, dists = {}, {}, {}, {}
    for v in variants:
        regional, second = VARIANTS[v]
        est = BoundaryLossSegmenter(regional=regional, boundary=second, alpha_strategy="constant",
                                    alpha_init=1.0, seed=seed, dtype=dtype)
        ests[v] = est
        nets[v] = TinySegNet(X.shape[-1], seed=seed, dtype=np.dtype(dtype))
        states[v] = AdamState()
        dists[v] = est._prepare_targets(y, phi, ds.spacing)[1]
    hp = HyperParams()
    rng = np.random.default_rng(seed)
    samples: Dict[str, List[float]] = {v: [] for v in variants}
    order = list(variants)
    for b in range(warmup + n_batches):
        idx = rng.choice(len(X), size=batch_size, replace=False)
        for v in order:
            est, net = ests[v], nets[v]
            t0 = time.perf_counter()
            s, cache = net.forward(X[idx])
            total, _, _ = est.batch_loss(s, y[idx], phi[idx], None if dists[v] is None else dists[v][idx],
                                         est.loss_weights(0), hp)
            grads = net.backward(cache, total.grad)
            adam_step(states[v], net.params, grads)
            net.mark_updated()
            elapsed = 1e3 * (time.perf_counter() - t0)
            if b >= warmup:
                samples[v].append(elapsed)
        order = order[1:] + order[:1]
    return [TimingRow(v, float(np.mean(samples[v])), float(np.std(samples[v])), len(samples[v]), samples[v])
            for v in variants]


def format_table(rows: List[TimingRow]) -> str:
    lines = ["variant,mean_ms,std_ms,n_batches"]
    lines += [f"{r.variant},{r.mean_ms:.4f},{r.std_ms:.4f},{r.n_batches}" for r in rows]
    return "\n".join(lines) + "\n"
