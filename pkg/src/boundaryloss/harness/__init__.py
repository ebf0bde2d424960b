"""Experiment configuration, training runs, timing and learning-curve output."""
from .benchmark import TimingRow, benchmark_losses, format_table
from .config import ExperimentConfig, load_config, parse_config_text, shipped_configs
from .curves import emit_curves, read_curves_csv
from .experiment import ExperimentResult, load_dataset, run_experiment, run_seeds, write_distmaps
from .logs import MetricsLog
