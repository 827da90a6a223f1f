"""End-to-end behaviour checks on the standard experiments (long-running)."""

import numpy as np
import pytest

from conftest import linear_document
from src.config import ExperimentConfig
from src.core import JointAction, Topology
from src.environment import GsdConfig
from src.regret import exp3_bound_curve, loss_trend
from src.runner import run_manas_ls, run_repeats

pytestmark = pytest.mark.slow

GSD_AGENTS = 100
GSD_ACTIONS = 10
GSD_HORIZON = 5000


def _gsd_config(algorithm):
    topo = Topology(GSD_AGENTS, GSD_ACTIONS)
    cfg = GsdConfig.scaled(topo, start_sum=11)
    return ExperimentConfig.model_validate({
        "topology": {"num_agents": GSD_AGENTS, "num_actions": GSD_ACTIONS},
        "algorithm": algorithm,
        "horizon": GSD_HORIZON,
        "environment": {"kind": "gsd", "mu": 1.0, "sigma": 10.0, "contributions": list(cfg.contributions)},
        "manas": {"eta": 0.1},
        "seed": 0,
        "repeats": 8,
    })


@pytest.fixture(scope="module")
def gsd_results():
    return {name: run_repeats(_gsd_config(name)) for name in ("manas", "random_search")}


class TestGaussianSqueeze:

    def test_manas_beats_random_search(self, gsd_results):
        tail = GSD_HORIZON // 10
        manas = gsd_results["manas"].summary.to_frame()["mean_instantaneous_regret"].to_numpy()
        random = gsd_results["random_search"].summary.to_frame()["mean_instantaneous_regret"].to_numpy()
        assert manas[-tail:].mean() <= 0.5 * random[-tail:].mean()

    def test_manas_regret_decreases(self, gsd_results):
        per_round = gsd_results["manas"].summary.to_frame()["mean_instantaneous_regret"].to_numpy()
        quintiles = np.array_split(per_round, 5)
        assert quintiles[0].mean() > quintiles[-1].mean()

    def test_random_search_is_flat(self, gsd_results):
        per_round = gsd_results["random_search"].summary.to_frame()["mean_instantaneous_regret"].to_numpy()
        slope, stderr = loss_trend(per_round)
        assert abs(slope) <= 3 * stderr

    def test_bound_dominates_every_repeat(self, gsd_results):
        bound = exp3_bound_curve(Topology(GSD_AGENTS, GSD_ACTIONS), GSD_HORIZON)
        for run in gsd_results["manas"].runs:
            assert np.all(run.report.cumulative_curve <= bound)


class TestLeastSquaresIdentification:

    def test_misidentification_rate_decays(self):
        beta = [
            0.0, 0.3, 0.6, 0.9,
            0.9, 0.0, 0.3, 0.6,
            0.6, 0.9, 0.0, 0.3,
            0.3, 0.6, 0.9, 0.0,
        ]
        optimum = JointAction((0, 1, 2, 3))
        checkpoints = (250, 500, 1000)
        misses = {t: 0 for t in checkpoints + (2000,)}
        seeds = range(200)
        for seed in seeds:
            doc = linear_document("manas_ls", 2000, beta=beta, num_agents=4, num_actions=4,
                                  seed=seed, snapshot_interval=250)
            trace, rec = run_manas_ls(ExperimentConfig.model_validate(doc))
            for t in checkpoints:
                # Snapshot at round t + 1 holds the scores after t rounds.
                misses[t] += trace.recommendation_at(t + 1) != optimum
            misses[2000] += rec != optimum
        rates = np.array([misses[t] / len(seeds) for t in sorted(misses)])
        assert np.all(np.diff(rates) <= 0)
        assert rates[-1] < 0.05
