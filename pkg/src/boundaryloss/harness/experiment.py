"""Training runs driven by :class:`ExperimentConfig`."""
from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..estimator import BoundaryLossSegmenter
from ..grid import ScalarGrid, read_grid, write_grid
from ..levelset import signed_distance
from ..metrics import EvalReport
from ..model import save_checkpoint
from ..synthdata import Dataset, generate
from .config import ExperimentConfig
from .logs import MetricsLog

OUTPUT_ROOT_ENV = "BOUNDARYLOSS_OUTPUT_ROOT"


def output_root() -> Path:
    return Path(os.environ.get(OUTPUT_ROOT_ENV, "runs"))


def load_dataset(cfg: ExperimentConfig) -> Dataset:
    if cfg.data_path:
        return Dataset.load(cfg.data_path)
    return generate(cfg.synth_config(), cfg.n_samples)


def case_names(ds: Dataset, split: str) -> List[str]:
    return [f"case{i:04d}" for i, s in enumerate(ds.split) if s == split]


def distmap_name(case: str, mode: str) -> str:
    return f"{case}_phi_{mode}.sgrid"


def level_sets(masks: np.ndarray, mode: str, spacing) -> np.ndarray:
    """Level-set maps for a stack of 2D images or 3D volumes.

    For volumes, ``"2d"`` treats every slice independently and ``"3d"``
    uses the whole volume.  For 2D images both modes coincide.
    """
    full = "per_slice_2d" if mode == "2d" else "full_3d"
    return np.stack([signed_distance(m, full, spacing) for m in masks])


def write_distmaps(ds: Dataset, mode: str, directory) -> List[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    phi = level_sets(ds.masks, mode, ds.spacing)
    paths = []
    for i in range(len(ds)):
        p = directory / distmap_name(f"case{i:04d}", mode)
        write_grid(ScalarGrid(phi[i], ds.spacing), p)
        paths.append(p)
    return paths


def training_arrays(ds: Dataset, cfg: ExperimentConfig) -> Tuple[np.ndarray, np.ndarray, Optional[np.ndarray]]:
    """Training images, masks and level-set maps as 2D slices."""
    train = ds.train
    phi = None
    if cfg.boundary in ("2d", "3d"):
        if cfg.distmaps_path:
            phi = np.stack([read_grid(Path(cfg.distmaps_path) / distmap_name(c, cfg.boundary)).values
                            for c in case_names(ds, "train")])
        else:
            phi = level_sets(train.masks, cfg.boundary, ds.spacing)
    images, masks = train.images, train.masks
    if masks.ndim == 4:  # volumes -> stacks of independent slices
        images = images.reshape((-1,) + images.shape[-3:])
        masks = masks.reshape((-1,) + masks.shape[-2:])
        phi = None if phi is None else phi.reshape((-1,) + phi.shape[-2:])
    return images, masks, phi


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    log: MetricsLog
    report: EvalReport
    estimator: BoundaryLossSegmenter
    output_dir: Optional[Path]

    @property
    def status(self) -> str:
        return self.estimator.status_


def run_experiment(cfg: ExperimentConfig, seed: Optional[int] = None, output_dir=None,
                   dataset: Optional[Dataset] = None, write: bool = True) -> ExperimentResult:
    """Train one run and evaluate the best-validation-DSC weights on the validation split.

    Writes ``metrics.csv``, ``checkpoint.tsnet``, ``report.json`` and the
    resolved ``config.cfg`` to ``output_dir`` unless ``write`` is false.
    """
    if seed is not None:
        cfg = cfg.replace(seed=seed)
    ds = dataset if dataset is not None else load_dataset(cfg)
    X, y, phi = training_arrays(ds, cfg)
    val = ds.val
    est = cfg.estimator(spacing=ds.spacing)
    eval_set = (val.images, val.masks) if len(val) else None
    est.fit(X, y, phi=phi, eval_set=eval_set)
    log = MetricsLog(est.history_)
    report = est.evaluate(val.images, val.masks) if len(val) else EvalReport()
    report.cases = case_names(ds, "val")

    out = None
    if write:
        out = Path(output_dir or cfg.output_dir or output_root() / cfg.name / f"seed{cfg.seed}")
        out.mkdir(parents=True, exist_ok=True)
        log.write(out / "metrics.csv")
        save_checkpoint(out / "checkpoint.tsnet", est.net_, est.adam_)
        (out / "config.cfg").write_text(cfg.to_text())
        summary = {"status": est.status_, "best_epoch": est.best_epoch_, **report.to_dict()}
        (out / "report.json").write_text(json.dumps(summary, indent=2))
    return ExperimentResult(cfg, log, report, est, out)


def run_seeds(cfg: ExperimentConfig, seeds: Sequence[int], dataset: Optional[Dataset] = None,
              write: bool = True):
    """Independent runs differing only in the training seed; returns ``(results, pooled report)``."""
    ds = dataset if dataset is not None else load_dataset(cfg)
    results = [run_experiment(cfg, seed=s, dataset=ds, write=write) for s in seeds]
    return results, EvalReport.over_runs([r.report for r in results])
