"""Experiment configs, seeded sweeps and result emission."""
from .config import ConfigError, ExperimentConfig, config_from_dict, load_config
from .emit import ResultRow, emit
from .experiments import metric_detection, metric_wpt_zeta, run_experiment
from .seeds import derive_seed, splitmix64
