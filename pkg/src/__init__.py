"""
MANAS Simulator Package

Multi-agent adversarial bandit search over combinatorial architecture
spaces: per-edge agents, MANAS / MANAS-LS credit assignment, synthetic loss
oracles and regret accounting.
"""

__version__ = "0.1.0"
__author__ = "manas-sim contributors"

from .core import JointAction, Topology
from .config import ExperimentConfig, load_config
from .environment import (
    CallbackEnvironment,
    GaussianSqueezeEnvironment,
    LinearEnvironment,
    TabularEnvironment,
)
from .runner import ExperimentRunner, LossTrace, run_experiment, run_repeats

__all__ = [
    'Topology',
    'JointAction',
    'ExperimentConfig',
    'load_config',
    'GaussianSqueezeEnvironment',
    'LinearEnvironment',
    'TabularEnvironment',
    'CallbackEnvironment',
    'ExperimentRunner',
    'LossTrace',
    'run_experiment',
    'run_repeats',
]
