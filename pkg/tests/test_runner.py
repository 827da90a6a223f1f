import json

import numpy as np
import pytest

from conftest import linear_document
from src.config import ExperimentConfig
from src.core import JointAction, RunAbortedError, Topology
from src.environment import CallbackEnvironment, LinearEnvConfig, LinearEnvironment
from src.policy import LsBatch, harmonic_number, ls_batch_solve
from src.regret import loss_trend
from src.reporting import read_csv
from src.runner import (
    ExperimentRunner,
    LossTrace,
    run_experiment,
    run_manas,
    run_manas_comband,
    run_manas_ls,
    run_random_search,
    run_repeats,
)

LS_BETA = [
    0.0, 0.3, 0.6, 0.9,
    0.9, 0.0, 0.3, 0.6,
    0.6, 0.9, 0.0, 0.3,
    0.3, 0.6, 0.9, 0.0,
]


def _config(algorithm="manas", horizon=200, **extra):
    return ExperimentConfig.model_validate(linear_document(algorithm, horizon, **extra))


class TestManas:

    def test_same_seed_same_trace(self, make_config):
        cfg = make_config("manas", 300, seed=42)
        first, rec_a = run_manas(cfg)
        second, rec_b = run_manas(cfg)
        np.testing.assert_array_equal(first.actions, second.actions)
        np.testing.assert_array_equal(first.losses, second.losses)
        assert rec_a == rec_b
        assert first.to_frame().to_csv(index=False) == second.to_frame().to_csv(index=False)

    def test_trace_shapes(self, make_config):
        trace, rec = run_manas(make_config("manas", 50))
        assert trace.horizon == 50
        assert trace.actions.shape == (50, 2)
        assert trace.probabilities.shape == (50, 2)
        assert np.all((trace.probabilities > 0) & (trace.probabilities <= 1))
        assert trace.algorithm == "manas" and trace.seed == 0
        assert len(rec) == 2

    def test_recorded_probabilities_match_snapshots(self, make_config):
        cfg = make_config("manas", 40, snapshot_interval=1, manas={"eta": 0.5, "gamma": 0.1})
        trace, _ = run_manas(cfg)
        assert sorted(trace.snapshots) == list(range(1, 41))
        for t in range(1, 41):
            policies = trace.snapshots[t]
            for i, action in enumerate(trace.actions[t - 1]):
                assert policies[i].probabilities[action] == trace.probabilities[t - 1, i]

    def test_zero_temperature_matches_random_search(self, make_config):
        manas, _ = run_manas(make_config("manas", 300, seed=9, manas={"eta": 0.0, "gamma": 0.0}))
        random, _ = run_random_search(make_config("random_search", 300, seed=9))
        np.testing.assert_array_equal(manas.actions, random.actions)

    def test_learns_small_linear_instance(self, make_config):
        trace, rec = run_manas(make_config("manas", 5000, seed=1))
        assert rec == JointAction((0, 0))

    @pytest.mark.slow
    def test_recommends_optimum_across_seeds(self, make_config):
        hits = sum(run_manas(make_config("manas", 5000, seed=seed))[1] == JointAction((0, 0))
                   for seed in range(100))
        assert hits >= 95

    def test_sample_recommendation(self, make_config):
        _, rec = run_manas(make_config("manas", 100, recommend_mode="sample"))
        rec.validate(Topology(2, 2))

    def test_wrong_algorithm(self, make_config):
        with pytest.raises(ValueError):
            run_manas(make_config("manas_ls", 10))

    def test_environment_topology_must_match(self, make_config):
        env = LinearEnvironment(Topology(3, 2), LinearEnvConfig.stationary_beta(np.zeros(6)))
        with pytest.raises(ValueError):
            run_manas(make_config("manas", 10), env)

    def test_single_action_topology(self):
        cfg = _config("manas", 20, beta=[0.5, 0.25], num_agents=2, num_actions=1)
        trace, rec = run_manas(cfg)
        assert np.all(trace.actions == 0)
        assert np.all(trace.probabilities == 1.0)
        assert rec == JointAction((0, 0))


class TestManasLs:

    def _ls_config(self, horizon, seed=0, **extra):
        return _config("manas_ls", horizon, beta=LS_BETA, num_agents=4, num_actions=4, seed=seed, **extra)

    def test_identifies_noise_free_optimum(self):
        for seed in range(5):
            _, rec = run_manas_ls(self._ls_config(160, seed))
            assert rec == JointAction((0, 1, 2, 3))

    @pytest.mark.slow
    def test_recommends_block_argmin_across_seeds(self, make_config):
        hits = sum(run_manas_ls(make_config("manas_ls", 5000, seed=seed))[1] == JointAction((0, 0))
                   for seed in range(100))
        assert hits >= 95

    def test_first_refit_fits_observed_losses(self):
        trace, _ = run_manas_ls(self._ls_config(16))
        batch = LsBatch.from_actions(trace.actions, trace.losses, trace.topology)
        estimate = ls_batch_solve(batch)
        assert np.abs(batch.design.T @ estimate - trace.losses).max() < 1e-8

    def test_zipf_probabilities_before_first_refit(self):
        trace, _ = run_manas_ls(self._ls_config(16))
        law = {1.0 / (rank * harmonic_number(4)) for rank in range(1, 5)}
        for value in trace.probabilities.ravel():
            assert any(abs(value - p) < 1e-15 for p in law)

    def test_scores_follow_refits(self):
        cfg = self._ls_config(33, snapshot_interval=1)
        trace, _ = run_manas_ls(cfg)
        assert np.all(trace.snapshots[16][0].scores == 0.0)
        assert not np.all(trace.snapshots[17][0].scores == 0.0)
        np.testing.assert_array_equal(trace.snapshots[17][0].scores, trace.snapshots[32][0].scores)
        expected = JointAction(tuple(int(np.argmin(p.scores)) for p in trace.snapshots[33]))
        assert trace.recommendation_at(33) == expected

    def test_min_samples_delays_refit(self):
        cfg = self._ls_config(40, snapshot_interval=1, manas_ls={"solve_period": 8, "min_samples": 20})
        trace, _ = run_manas_ls(cfg)
        assert np.all(trace.snapshots[17][0].scores == 0.0)
        assert not np.all(trace.snapshots[25][0].scores == 0.0)


class TestComband:

    def test_learns_small_linear_instance(self, make_config):
        _, rec = run_manas_comband(make_config("manas_comband", 2000, seed=2))
        assert rec == JointAction((0, 0))


class TestRandomSearch:

    def test_uniform_probabilities(self, make_config):
        trace, _ = run_random_search(make_config("random_search", 100))
        np.testing.assert_array_equal(trace.probabilities, 0.5)

    def test_recommends_best_observed(self):
        cfg = _config("random_search", 30, beta=[0.4, 0.1, 0.7, 0.2, 0.3, 0.0], num_agents=2, num_actions=3)
        trace, rec = run_random_search(cfg)
        first_best = int(np.argmin(trace.losses))
        assert rec == JointAction.from_array(trace.actions[first_best])
        assert trace.losses[first_best] == trace.losses.min()

    def test_losses_do_not_trend(self):
        cfg = _config("random_search", 2000, beta=np.linspace(0, 1, 9).tolist(), num_agents=3, num_actions=3)
        trace, _ = run_random_search(cfg)
        slope, stderr = loss_trend(trace.losses)
        assert abs(slope) <= 3 * stderr


class TestFailures:

    def test_environment_error_aborts_with_partial_trace(self, make_config):
        def failing(actions, t, rng):
            if t == 5:
                raise RuntimeError("evaluation crashed")
            return 0.5

        env = CallbackEnvironment(Topology(2, 2), failing)
        with pytest.raises(RunAbortedError) as info:
            run_manas(make_config("manas", 10), env)
        assert info.value.trace.horizon == 4
        assert np.all(info.value.trace.losses == 0.5)

    def test_non_finite_loss_aborts(self, make_config):
        env = CallbackEnvironment(Topology(2, 2), lambda a, t, rng: float("nan") if t == 3 else 0.1)
        with pytest.raises(RunAbortedError) as info:
            run_manas(make_config("manas", 10), env)
        assert info.value.trace.horizon == 2

    def test_bounded_losses(self, make_config):
        env = CallbackEnvironment(Topology(2, 2), lambda a, t, rng: 1.5)
        with pytest.raises(RunAbortedError):
            run_manas(make_config("manas", 10, bounded_losses=True), env)
        trace, _ = run_manas(make_config("manas", 10), env)
        assert np.all(trace.losses == 1.5)


class TestTrace:

    def test_frame_columns_and_round_trip(self, make_config, tmp_path):
        trace, _ = run_manas(make_config("manas", 25))
        path = tmp_path / "trace.csv"
        trace.to_frame().to_csv(path, index=False)
        frame = read_csv(path)
        assert list(frame.columns) == ["round", "actions", "loss", "probabilities"]
        assert frame["round"].tolist() == list(range(1, 26))
        np.testing.assert_array_equal(frame["loss"].to_numpy(), trace.losses)
        assert [json.loads(a) for a in frame["actions"]] == trace.actions.tolist()
        assert [json.loads(p) for p in frame["probabilities"]] == trace.probabilities.tolist()

    def test_recommendation_at(self, make_config):
        trace, _ = run_manas(make_config("manas", 30, snapshot_interval=10))
        assert sorted(trace.snapshots) == [1, 11, 21]
        assert trace.recommendation_at(1) == JointAction((0, 0))
        with pytest.raises(KeyError):
            trace.recommendation_at(5)

    def test_truncated_and_dict(self, make_config):
        trace, _ = run_manas(make_config("manas", 30, snapshot_interval=10))
        short = trace.truncated(12)
        assert short.horizon == 12
        assert sorted(short.snapshots) == [1, 11]
        payload = short.to_dict()
        assert payload["num_agents"] == 2
        assert len(payload["losses"]) == 12
        assert sorted(payload["snapshots"]) == ["1", "11"]

    def test_joint(self):
        trace = LossTrace(Topology(2, 2), np.array([[1, 0], [0, 1]]), np.zeros(2), np.ones((2, 2)))
        assert trace.joint(2) == JointAction((0, 1))


class TestRepeats:

    def test_seeds_and_summary(self, make_config):
        result = run_repeats(make_config("manas", 50, repeats=3, seed=4))
        assert [run.seed for run in result.runs] == [4, 5, 6]
        assert result.summary.repeats == 3
        assert result.failures == []
        assert result.best.seed in (4, 5, 6)
        single, _ = run_experiment(make_config("manas", 50, seed=5))
        np.testing.assert_array_equal(result.runs[1].trace.losses, single.losses)

    def test_failed_runs_are_recorded(self, make_config):
        calls = {"n": 0}

        def flaky(actions, t, rng):
            calls["n"] += 1
            if calls["n"] == 15:
                raise RuntimeError("lost evaluation")
            return float(actions.sum())

        env = CallbackEnvironment(Topology(2, 2), flaky, expected=lambda a, t: float(a.sum()),
                                  deterministic=True, stationary=True)
        result = run_repeats(make_config("manas", 10, repeats=3), env=env)
        assert [run.seed for run in result.runs] == [0, 2]
        assert result.failures[0]["seed"] == 1
        assert "lost evaluation" in result.failures[0]["error"]
        assert result.summary.repeats == 2
        assert result.summary.to_dict()["failures"] == result.failures

    def test_all_runs_failing(self, make_config):
        env = CallbackEnvironment(Topology(2, 2), lambda a, t, rng: float("inf"))
        with pytest.raises(RuntimeError):
            run_repeats(make_config("manas", 5, repeats=2), env=env)

    def test_parallel_matches_sequential(self, make_config):
        sequential = run_repeats(make_config("manas", 100, repeats=3))
        parallel = run_repeats(make_config("manas", 100, repeats=3, parallel=True, processes=2))
        for a, b in zip(sequential.runs, parallel.runs):
            assert a.trace.to_frame().to_csv(index=False) == b.trace.to_frame().to_csv(index=False)

    def test_non_replayable_environment(self, make_config):
        env = CallbackEnvironment(Topology(2, 2), lambda a, t, rng: float(a.sum()))
        result = run_repeats(make_config("random_search", 20, repeats=2), env=env)
        assert result.summary is None
        assert all(run.report is None for run in result.runs)
        assert result.best.trace.losses.min() == min(run.trace.losses.min() for run in result.runs)

    def test_experiment_runner_keeps_results(self, make_config):
        runner = ExperimentRunner()
        runner.run(make_config("manas", 20), name="a")
        runner.run(make_config("random_search", 20))
        assert runner.list_runs() == ["a", "random_search"]
        assert runner.get_run_results("missing") is None
        assert runner.get_run_results("a").config.algorithm == "manas"
