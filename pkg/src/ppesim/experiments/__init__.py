"""Config-driven experiment runner, scaling fits, and the command-line interface."""

from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .seeding import child_seed
from .runner import run_delta_grid, run_pop_experiment, write_delta_csv
from .fits import FitRefusal, OnsetFit, ScalingFit, fit_collapse, fit_onset
