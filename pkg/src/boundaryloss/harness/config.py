"""Flat ``key = value`` experiment configs with dotted keys.

Example::

    name = gdl_boundary_2d
    loss.regional = gdl
    loss.boundary = 2d
    alpha.strategy = rebalance
    train.epochs = 40
    data.target_foreground_fraction = 0.003

Values are parsed as Python literals where possible (``1,3`` is a tuple),
``true``/``false``/``none`` are recognised, anything else stays a string.
"""
from __future__ import annotations

import ast
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional

from ..estimator import BOUNDARY_MODES, BoundaryLossSegmenter
from ..exceptions import ConfigError
from ..losses import REGIONAL
from ..schedule import STRATEGIES
from ..synthdata import SynthConfig

_SYNTH_FIELDS = {f.name for f in dataclasses.fields(SynthConfig)}

# config key -> (ExperimentConfig attribute, type)
_KEYS = {
    "name": ("name", str),
    "loss.regional": ("regional", str),
    "loss.boundary": ("boundary", str),
    "loss.w0": ("w0", float),
    "loss.sigma": ("sigma", float),
    "loss.gamma": ("gamma", float),
    "loss.beta": ("beta", float),
    "loss.delta": ("delta", float),
    "alpha.strategy": ("alpha_strategy", str),
    "alpha.init": ("alpha_init", float),
    "alpha.step": ("alpha_step", float),
    "alpha.cap": ("alpha_cap", float),
    "train.epochs": ("epochs", int),
    "train.batch_size": ("batch_size", int),
    "train.lr": ("lr", float),
    "train.lr_patience": ("lr_patience", int),
    "train.seed": ("seed", int),
    "train.dtype": ("dtype", str),
    "data.path": ("data_path", str),
    "data.distmaps": ("distmaps_path", str),
    "data.n_samples": ("n_samples", int),
    "output.dir": ("output_dir", str),
    "log.timing": ("log_timing", bool),
}


def parse_value(text: str) -> Any:
    low = text.lower()
    if low == "true":
        return True
    if low == "false":
        return False
    if low in ("none", "null", ""):
        return None
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text


def parse_config_text(text: str) -> Dict[str, Any]:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (p.strip() for p in line.split("=", 1))
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = parse_value(value)
    return out


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if value is None:
        return "none"
    if isinstance(value, tuple):
        return ",".join(_format(v) for v in value)
    return repr(value) if isinstance(value, float) else str(value)


@dataclass
class ExperimentConfig:
    """One training run: regional loss, optional second term, schedule, data and output."""

    name: str = "experiment"
    regional: str = "gdl"
    boundary: str = "2d"
    w0: float = 10.0
    sigma: float = 5.0
    gamma: float = 2.0
    beta: float = 2.0
    delta: float = 0.5
    alpha_strategy: str = "rebalance"
    alpha_init: float = 0.01
    alpha_step: float = 0.01
    alpha_cap: Optional[float] = None
    epochs: int = 40
    batch_size: int = 8
    lr: float = 1e-3
    lr_patience: int = 20
    seed: int = 0
    dtype: str = "float32"
    data_path: Optional[str] = None
    distmaps_path: Optional[str] = None
    n_samples: int = 250
    synth: Dict[str, Any] = field(default_factory=dict)
    output_dir: Optional[str] = None
    log_timing: bool = False

    def __post_init__(self):
        if self.regional not in REGIONAL + ("none",):
            raise ConfigError(f"loss.regional must be one of {REGIONAL + ('none',)}, got {self.regional!r}")
        if self.boundary not in BOUNDARY_MODES:
            raise ConfigError(f"loss.boundary must be one of {BOUNDARY_MODES}, got {self.boundary!r}")
        if self.regional == "none" and self.boundary == "off":
            raise ConfigError("a run needs at least one loss term")
        if self.alpha_strategy not in STRATEGIES:
            raise ConfigError(f"alpha.strategy must be one of {STRATEGIES}")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError("train.dtype must be float32 or float64")
        unknown = set(self.synth) - _SYNTH_FIELDS
        if unknown:
            raise ConfigError(f"unknown data keys: {sorted('data.' + k for k in unknown)}")
        self.synth_config()  # validates

    # -- conversions ----------------------------------------------------
    @classmethod
    def from_dict(cls, flat: Dict[str, Any]) -> "ExperimentConfig":
        kwargs: Dict[str, Any] = {"synth": {}}
        for key, value in flat.items():
            if key in _KEYS:
                attr, typ = _KEYS[key]
                if value is not None and typ is not str:
                    try:
                        value = typ(value)
                    except (TypeError, ValueError):
                        raise ConfigError(f"{key}: cannot convert {value!r} to {typ.__name__}") from None
                elif value is not None:
                    value = str(value)
                kwargs[attr] = value
            elif key.startswith("data.") and key[5:] in _SYNTH_FIELDS:
                kwargs["synth"][key[5:]] = value
            else:
                raise ConfigError(f"unknown config key {key!r}")
        if "boundary" in kwargs and kwargs["boundary"] is None:
            kwargs["boundary"] = "off"
        if "regional" in kwargs and kwargs["regional"] is None:
            kwargs["regional"] = "none"
        return cls(**kwargs)

    def to_dict(self) -> Dict[str, Any]:
        flat = {key: getattr(self, attr) for key, (attr, _) in _KEYS.items()}
        flat.update({f"data.{k}": v for k, v in sorted(self.synth.items())})
        return flat

    def to_text(self) -> str:
        return "".join(f"{k} = {_format(v)}\n" for k, v in self.to_dict().items())

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def synth_config(self) -> SynthConfig:
        kw = {k: tuple(v) if isinstance(v, list) else v for k, v in self.synth.items()}
        try:
            return SynthConfig(**kw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def estimator(self, spacing=None) -> BoundaryLossSegmenter:
        return BoundaryLossSegmenter(
            regional=self.regional, boundary=self.boundary, alpha_strategy=self.alpha_strategy,
            alpha_init=self.alpha_init, alpha_step=self.alpha_step, alpha_cap=self.alpha_cap,
            epochs=self.epochs, batch_size=self.batch_size, lr=self.lr, lr_patience=self.lr_patience,
            delta=self.delta, w0=self.w0, sigma=self.sigma, gamma=self.gamma, beta=self.beta,
            spacing=spacing, seed=self.seed, dtype=self.dtype, time_batches=self.log_timing,
        )


def load_config(path, overrides: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
    """Read a config file; ``overrides`` are dotted keys applied on top."""
    flat = parse_config_text(Path(path).read_text())
    flat.update(overrides or {})
    return ExperimentConfig.from_dict(flat)


def shipped_configs() -> Dict[str, Path]:
    """Config files bundled with the package, by stem."""
    root = Path(__file__).resolve().parent.parent / "configs"
    return {p.stem: p for p in sorted(root.glob("*.cfg"))}
