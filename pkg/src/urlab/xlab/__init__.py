"""Experiment front door: configs, seed streams, analyses and file outputs.

The runner and CLI live in :mod:`urlab.xlab.cli`; they are not imported here
so that the harness can depend on the config and seed modules.
"""

from .analysis import Correlogram, cross_correlation, final_quarter_mean, paired_bootstrap
from .config import ConfigError, ExperimentConfig, dump_config, load_config
from .io import write_metadata, write_run_csv
from .seeds import SeedStreams, derive_streams
