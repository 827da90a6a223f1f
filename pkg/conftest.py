import sys
from pathlib import Path

import numpy as np
import pytest

ROOT = Path(__file__).resolve().parent
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from src.config import ExperimentConfig  # noqa: E402
from src.core import Topology  # noqa: E402
from src.environment import LinearEnvConfig, LinearEnvironment  # noqa: E402

SMALL_BETA = [0.1, 0.9, 0.2, 0.8]


def linear_document(algorithm="manas", horizon=200, beta=None, num_agents=2, num_actions=2, **extra):
    """Raw configuration of a stationary linear experiment."""
    doc = {
        "topology": {"num_agents": num_agents, "num_actions": num_actions},
        "algorithm": algorithm,
        "horizon": horizon,
        "environment": {
            "kind": "linear",
            "beta_schedule": {"kind": "stationary", "beta": list(beta if beta is not None else SMALL_BETA)},
        },
        "seed": 0,
        "repeats": 1,
    }
    doc.update(extra)
    return doc


@pytest.fixture
def small_topology():
    return Topology(2, 2)


@pytest.fixture
def small_linear_env(small_topology):
    return LinearEnvironment(small_topology, LinearEnvConfig.stationary_beta(SMALL_BETA))


@pytest.fixture
def make_config():
    def _make(algorithm="manas", horizon=200, **extra):
        return ExperimentConfig.model_validate(linear_document(algorithm, horizon, **extra))
    return _make


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def configs_dir():
    return ROOT / "configs"
