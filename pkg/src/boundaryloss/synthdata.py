"""Synthetic, highly unbalanced segmentation tasks.

Each sample is a smooth random background with Gaussian noise and a few
small bright lesions (soft discs in 2D, ellipsoids in 3D).  The lesion mask
marks pixel centres inside the lesion.  Every sample is drawn from its own
generator seeded with ``(seed, index)``, so generation order does not matter.
"""
from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
from scipy.ndimage import gaussian_filter

from .exceptions import ConfigError
from .grid import BinaryMask, ScalarGrid, read_grid, write_grid

MANIFEST = "manifest.csv"
_MANIFEST_FIELDS = ["case", "split", "image", "mask", "foreground_fraction", "empty"]


@dataclass(frozen=True)
class SynthConfig:
    shape: Tuple[int, ...] = (64, 64)
    spacing: Optional[Tuple[float, ...]] = None
    n_lesions: Tuple[int, int] = (1, 3)
    lesion_radius: Tuple[float, float] = (1.0, 2.5)
    target_foreground_fraction: float = 0.003
    contrast: float = 1.0
    noise_std: float = 0.35
    background_amplitude: float = 0.5
    background_smoothness: float = 4.0
    distractors: Tuple[int, int] = (0, 0)
    distractor_radius: Tuple[float, float] = (3.0, 5.0)
    distractor_contrast: float = 0.6
    empty_fraction: float = 0.0
    n_channels: int = 1
    val_fraction: float = 0.2
    seed: int = 0
    max_tries: int = 200

    def __post_init__(self):
        if len(self.shape) not in (2, 3):
            raise ConfigError(f"shape must be 2D or 3D, got {self.shape}")
        if not 0 < self.target_foreground_fraction <= 0.05:
            raise ConfigError("target_foreground_fraction must lie in (0, 0.05]")
        lo, hi = self.lesion_radius
        if lo < 1 or hi < lo:
            raise ConfigError(f"lesion radii must satisfy 1 <= min <= max, got {self.lesion_radius}")
        if self.n_lesions[0] < 0 or self.n_lesions[1] < self.n_lesions[0]:
            raise ConfigError(f"invalid n_lesions range {self.n_lesions}")
        if self.contrast <= 0:
            raise ConfigError("contrast must be positive so lesions are learnable")
        if not 0 <= self.empty_fraction <= 1:
            raise ConfigError("empty_fraction must lie in [0, 1]")
        if not 0 <= self.val_fraction < 1:
            raise ConfigError("val_fraction must lie in [0, 1)")

    @property
    def grid_spacing(self) -> Tuple[float, ...]:
        return tuple(self.spacing) if self.spacing is not None else (1.0,) * len(self.shape)


@dataclass
class Sample:
    image: np.ndarray  # (*shape, n_channels), values in [0, 1]
    mask: np.ndarray  # (*shape) uint8
    empty: bool
    foreground_fraction: float


@dataclass
class Dataset:
    images: np.ndarray  # (n, *shape, n_channels)
    masks: np.ndarray  # (n, *shape)
    spacing: Tuple[float, ...]
    split: List[str]
    empty: List[bool] = field(default_factory=list)

    def __len__(self):
        return len(self.split)

    def subset(self, name: str) -> "Dataset":
        idx = [i for i, s in enumerate(self.split) if s == name]
        return Dataset(self.images[idx], self.masks[idx], self.spacing,
                       [name] * len(idx), [self.empty[i] for i in idx])

    @property
    def train(self) -> "Dataset":
        return self.subset("train")

    @property
    def val(self) -> "Dataset":
        return self.subset("val")

    @property
    def foreground_fractions(self) -> np.ndarray:
        return self.masks.reshape(len(self), -1).mean(axis=1)

    def save(self, directory) -> Path:
        """Write every case as SGRID files plus ``manifest.csv``."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        rows = []
        for i in range(len(self)):
            case = f"case{i:04d}"
            img_name, mask_name = f"{case}_image.sgrid", f"{case}_mask.sgrid"
            for c in range(self.images.shape[-1]):
                name = img_name if c == 0 else f"{case}_image_c{c}.sgrid"
                write_grid(ScalarGrid(self.images[i, ..., c], self.spacing), directory / name)
            write_grid(BinaryMask(self.masks[i], self.spacing), directory / mask_name)
            rows.append({
                "case": case, "split": self.split[i], "image": img_name, "mask": mask_name,
                "foreground_fraction": repr(float(self.masks[i].mean())),
                "empty": int(self.empty[i]),
            })
        with open(directory / MANIFEST, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=_MANIFEST_FIELDS + ["channels"])
            writer.writeheader()
            for r in rows:
                writer.writerow({**r, "channels": self.images.shape[-1]})
        return directory

    @classmethod
    def load(cls, directory) -> "Dataset":
        directory = Path(directory)
        with open(directory / MANIFEST, newline="") as fh:
            rows = list(csv.DictReader(fh))
        if not rows:
            raise ConfigError(f"empty manifest in {directory}")
        images, masks, split, empty = [], [], [], []
        spacing = None
        for r in rows:
            n_ch = int(r.get("channels") or 1)
            chans = []
            for c in range(n_ch):
                name = r["image"] if c == 0 else f"{r['case']}_image_c{c}.sgrid"
                chans.append(read_grid(directory / name).values)
            m = read_grid(directory / r["mask"])
            spacing = m.spacing
            images.append(np.stack(chans, axis=-1))
            masks.append(m.values)
            split.append(r["split"])
            empty.append(bool(int(r["empty"])))
        return cls(np.stack(images), np.stack(masks), spacing, split, empty)


def _ellipsoid_coordinate(shape, spacing, centre, radii, rotation):
    """Normalised ellipsoid coordinate (< 1 inside) of every pixel centre."""
    grids = np.meshgrid(*[np.arange(n) * h for n, h in zip(shape, spacing)], indexing="ij")
    rel = [g - c for g, c in zip(grids, centre)]
    # Rotate in the (y, x) plane; in 3D that is the last two axes.
    cos, sin = np.cos(rotation), np.sin(rotation)
    y, x = rel[-2], rel[-1]
    rel[-2], rel[-1] = cos * y - sin * x, sin * y + cos * x
    return np.sqrt(sum((r / a) ** 2 for r, a in zip(rel, radii)))


def _blobs(rng, shape, spacing, count, radius_range):
    """``count`` random ellipsoids; returns (coordinate field, mean radius in mm) pairs."""
    out = []
    for _ in range(count):
        r = rng.uniform(*radius_range) * min(spacing)
        radii = [max(r * rng.uniform(0.75, 1.25), 0.6 * h) for h in spacing]
        centre = [rng.uniform(ri + h, n * h - ri - 2 * h) if n * h - ri - 2 * h > ri + h else 0.5 * (n - 1) * h
                  for n, h, ri in zip(shape, spacing, radii)]
        coord = _ellipsoid_coordinate(shape, spacing, centre, radii, rng.uniform(0, np.pi))
        out.append((coord, float(np.mean(radii))))
    return out


def _soft(coord, radius, width):
    return 1.0 / (1.0 + np.exp(np.clip((coord - 1.0) * radius / width, -50, 50)))


def generate_sample(cfg: SynthConfig, index: int) -> Sample:
    """Draw sample ``index``; deterministic in ``(cfg.seed, index)``.

    Raises :class:`ConfigError` when no lesion layout within the foreground
    fraction band ``[0.5, 2] * target`` is found in ``cfg.max_tries`` draws.
    """
    rng = np.random.default_rng([cfg.seed, index])
    spacing = cfg.grid_spacing
    shape = cfg.shape
    width = 0.5 * min(spacing)
    empty = cfg.n_lesions[1] == 0 or rng.random() < cfg.empty_fraction
    lo, hi = 0.5 * cfg.target_foreground_fraction, 2.0 * cfg.target_foreground_fraction
    mask = np.zeros(shape, dtype=bool)
    lesion = np.zeros(shape)
    if not empty:
        for _ in range(cfg.max_tries):
            count = int(rng.integers(max(cfg.n_lesions[0], 1), cfg.n_lesions[1] + 1))
            blobs = _blobs(rng, shape, spacing, count, cfg.lesion_radius)
            mask = np.zeros(shape, dtype=bool)
            for coord, _ in blobs:
                mask |= coord <= 1.0
            if lo <= mask.mean() <= hi:
                lesion = np.max([_soft(c, r, width) for c, r in blobs], axis=0)
                break
        else:
            raise ConfigError(
                f"could not place lesions within foreground fraction [{lo:.4g}, {hi:.4g}] "
                f"after {cfg.max_tries} tries"
            )

    channels = []
    for _ in range(cfg.n_channels):
        bg = gaussian_filter(rng.standard_normal(shape), cfg.background_smoothness / np.asarray(spacing))
        bg *= cfg.background_amplitude / (bg.std() + 1e-12)
        n_distract = int(rng.integers(cfg.distractors[0], cfg.distractors[1] + 1))
        for coord, r in _blobs(rng, shape, spacing, n_distract, cfg.distractor_radius):
            bg += cfg.distractor_contrast * _soft(coord, r, 2 * width)
        img = bg + cfg.contrast * lesion + cfg.noise_std * rng.standard_normal(shape)
        img -= img.min()
        img /= max(img.max(), 1e-12)
        channels.append(img)
    image = np.stack(channels, axis=-1)
    return Sample(image, mask.astype(np.uint8), bool(not mask.any()), float(mask.mean()))


def generate(cfg: SynthConfig, n_samples: int) -> Dataset:
    """``n_samples`` cases; the first ``round((1 - val_fraction) * n)`` form the training split."""
    if n_samples < 1:
        raise ConfigError("n_samples must be positive")
    samples = [generate_sample(cfg, i) for i in range(n_samples)]
    n_train = int(round((1.0 - cfg.val_fraction) * n_samples))
    split = ["train"] * n_train + ["val"] * (n_samples - n_train)
    return Dataset(
        np.stack([s.image for s in samples]),
        np.stack([s.mask for s in samples]),
        cfg.grid_spacing,
        split,
        [s.empty for s in samples],
    )


def config_dict(cfg: SynthConfig) -> dict:
    return asdict(cfg)
