"""Boundary loss for highly unbalanced segmentation, with the distance-map
machinery, competing regional losses, weighting schedules, metrics, a small
hand-differentiated network and a synthetic data generator."""
from .edt import edt, edt_per_slice, squared_edt
from .estimator import BoundaryLossSegmenter, SignedDistanceTransformer
from .exceptions import (
    BoundaryLossError,
    CacheError,
    ConfigError,
    EmptyFeatureSet,
    FormatError,
    InvalidSchedule,
    InvalidThreshold,
    NoIntersection,
    NonFiniteGradient,
    ShapeError,
)
from .grid import BinaryMask, ProbMap, ScalarGrid, read_grid, threshold, write_grid
from .levelset import (
    boundary,
    boundary_change_differential,
    boundary_change_integral,
    boundary_mask,
    signed_distance,
)
from .losses import (
    HyperParams,
    LossResult,
    boundary_loss,
    combined,
    focal,
    gdl,
    hausdorff_loss,
    weighted_ce,
)
from .metrics import EvalReport, dsc, hd95
from .model import AdamState, TinySegNet, adam_step, load_checkpoint, lr_on_plateau, save_checkpoint
from .schedule import AlphaSchedule, weights
from .synthdata import Dataset, SynthConfig, generate

__version__ = "0.1.0"
