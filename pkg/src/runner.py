# -*- coding: utf-8 -*-
"""
Experiment Runner Module

Round loop of the multi-agent search: every agent samples an operation, the
environment scores the joint architecture once, credit is assigned back to
the agents, and a recommendation is made after the last round.

Random draws come from a single generator seeded by the configuration, in a
fixed order: initial tie-breaking (MANAS-LS only), then per round the agents
in index order followed by environment noise, then the sampled
recommendation.
"""

import json
import logging
from collections import deque
from dataclasses import dataclass, field
from multiprocessing import Pool
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from .config import ExperimentConfig
from .core import (
    JointAction,
    RunAbortedError,
    SearchSpaceTooLargeError,
    Topology,
    UnsupportedMetricError,
    check_loss,
    encode_many,
)
from .environment import LossEnvironment
from .policy import (
    AgentPolicy,
    LsBatch,
    LsSchedule,
    ManasHyperparams,
    comband_estimate,
    exp3_update_agents,
    ls_batch_solve,
    pinv_second_moment,
    sample_actions,
    softmax_distribution,
    zipf_distribution,
)
from .regret import RegretReport, RegretSummary, aggregate_reports, build_report

logger = logging.getLogger(__name__)

TRACE_COLUMNS = ["round", "actions", "loss", "probabilities"]


@dataclass
class LossTrace:
    """
    Per-round record of a run.

    Attributes
    ----------
    actions : np.ndarray
        (T, N) joint actions, row t-1 holding round t.
    losses : np.ndarray
        (T,) observed losses.
    probabilities : np.ndarray
        (T, N) probability with which each agent sampled its action.
    snapshots : dict
        Round -> per-agent policies in force when that round was sampled.
    """

    topology: Topology
    actions: np.ndarray
    losses: np.ndarray
    probabilities: np.ndarray
    algorithm: str = ""
    seed: Optional[int] = None
    snapshots: Dict[int, Tuple[AgentPolicy, ...]] = field(default_factory=dict)

    @property
    def horizon(self) -> int:
        return int(self.losses.shape[0])

    def joint(self, round_index: int) -> JointAction:
        return JointAction.from_array(self.actions[round_index - 1])

    def truncated(self, rounds: int) -> "LossTrace":
        return LossTrace(
            self.topology, self.actions[:rounds].copy(), self.losses[:rounds].copy(),
            self.probabilities[:rounds].copy(), self.algorithm, self.seed,
            {t: s for t, s in self.snapshots.items() if t <= rounds},
        )

    def recommendation_at(self, round_index: int) -> JointAction:
        """Per-agent argmin of the scores snapshotted at ``round_index``."""
        if round_index not in self.snapshots:
            raise KeyError(f"No policy snapshot at round {round_index}")
        return JointAction(tuple(int(np.argmin(p.scores)) for p in self.snapshots[round_index]))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "round": np.arange(1, self.horizon + 1),
            "actions": [json.dumps(row.tolist()) for row in self.actions],
            "loss": self.losses,
            "probabilities": [json.dumps(row.tolist()) for row in self.probabilities],
        }, columns=TRACE_COLUMNS)

    def to_dict(self) -> Dict:
        return {
            "algorithm": self.algorithm,
            "seed": self.seed,
            "num_agents": self.topology.num_agents,
            "num_actions": self.topology.num_actions,
            "actions": self.actions.tolist(),
            "losses": self.losses.tolist(),
            "probabilities": self.probabilities.tolist(),
            "snapshots": {
                str(t): {
                    "scores": [p.scores.tolist() for p in policies],
                    "probabilities": [p.probabilities.tolist() for p in policies],
                }
                for t, policies in sorted(self.snapshots.items())
            },
        }


class _Learner:
    """Sampling laws and credit assignment of all agents for one algorithm."""

    def __init__(self, topology: Topology):
        self.topology = topology
        self.scores = np.zeros((topology.num_agents, topology.num_actions))

    def distribution(self) -> np.ndarray:
        raise NotImplementedError

    def update(self, round_index: int, actions: np.ndarray, loss: float,
               p_chosen: np.ndarray, probabilities: np.ndarray):
        raise NotImplementedError

    def recommend(self, mode: str, rng: np.random.Generator, trace: LossTrace) -> JointAction:
        if mode == "sample":
            return JointAction.from_array(sample_actions(self.distribution(), rng))
        return JointAction.from_array(np.argmin(self.scores, axis=1))


class ManasLearner(_Learner):
    """Softmax sampling with importance-weighted coordinated descent."""

    def __init__(self, topology: Topology, hp: ManasHyperparams):
        super().__init__(topology)
        self.hp = hp

    def distribution(self):
        return softmax_distribution(self.scores, self.hp)

    def update(self, round_index, actions, loss, p_chosen, probabilities):
        self.scores = exp3_update_agents(self.scores, actions, loss, p_chosen)


class ManasLsLearner(_Learner):
    """Zipf sampling over scores refitted by least squares every ``solve_period`` rounds."""

    def __init__(self, topology: Topology, schedule: LsSchedule, rng: np.random.Generator):
        super().__init__(topology)
        self.schedule = schedule
        # Random priorities order the all-zero initial scores.
        self.tie_order = np.argsort(rng.random(self.scores.shape), axis=1)
        self.fitted = False
        self.refits = 0
        self._actions = deque(maxlen=schedule.window)
        self._losses = deque(maxlen=schedule.window)

    def distribution(self):
        return zipf_distribution(self.scores, None if self.fitted else self.tie_order)

    def update(self, round_index, actions, loss, p_chosen, probabilities):
        self._actions.append(np.array(actions))
        self._losses.append(loss)
        if round_index % self.schedule.solve_period:
            return
        if len(self._losses) < self.schedule.min_samples:
            logger.debug(
                f"Round {round_index}: {len(self._losses)} samples, refit waits for "
                f"{self.schedule.min_samples}"
            )
            return
        batch = self.batch()
        self.scores = ls_batch_solve(batch).reshape(self.scores.shape)
        self.fitted = True
        self.refits += 1

    def batch(self) -> LsBatch:
        return LsBatch.from_actions(np.vstack(self._actions), list(self._losses), self.topology)


class ComBandLearner(_Learner):
    """Softmax sampling with the per-round estimate loss * P^+ z added to the scores."""

    def __init__(self, topology: Topology, hp: ManasHyperparams):
        super().__init__(topology)
        self.hp = hp

    def distribution(self):
        return softmax_distribution(self.scores, self.hp)

    def update(self, round_index, actions, loss, p_chosen, probabilities):
        z = encode_many(actions[None, :], self.topology)[0]
        estimate = comband_estimate(loss, z, pinv_second_moment(probabilities))
        self.scores = self.scores + estimate.reshape(self.scores.shape)


class RandomSearchLearner(_Learner):
    """Uniform sampling; recommends the best architecture observed."""

    def __init__(self, topology: Topology):
        super().__init__(topology)
        self._uniform = np.full(self.scores.shape, 1.0 / topology.num_actions)

    def distribution(self):
        return self._uniform

    def update(self, round_index, actions, loss, p_chosen, probabilities):
        pass

    def recommend(self, mode, rng, trace):
        return trace.joint(int(np.argmin(trace.losses)) + 1)


def _run_loop(cfg: ExperimentConfig, env: LossEnvironment, learner_factory) -> Tuple[LossTrace, JointAction]:
    topo = env.topology
    rng = np.random.default_rng(cfg.seed)
    learner = learner_factory(rng)
    horizon = cfg.horizon
    agents = np.arange(topo.num_agents)
    trace = LossTrace(
        topology=topo,
        actions=np.zeros((horizon, topo.num_agents), dtype=np.int64),
        losses=np.zeros(horizon),
        probabilities=np.zeros((horizon, topo.num_agents)),
        algorithm=cfg.algorithm,
        seed=cfg.seed,
    )
    logger.info(
        f"Starting {cfg.algorithm} run: {topo.num_agents} agents, {topo.num_actions} actions, "
        f"{horizon} rounds, seed {cfg.seed}"
    )
    for t in range(1, horizon + 1):
        probabilities = learner.distribution()
        if cfg.snapshot_interval and (t - 1) % cfg.snapshot_interval == 0:
            trace.snapshots[t] = AgentPolicy.snapshot(learner.scores, probabilities)
        actions = sample_actions(probabilities, rng)
        p_chosen = probabilities[agents, actions]
        try:
            loss = check_loss(env.loss(actions, t, rng), bounded=cfg.bounded_losses)
        except Exception as e:
            logger.error(f"Environment failed in round {t} on {actions.tolist()}: {e}")
            raise RunAbortedError(f"Run aborted in round {t}: {e}", trace.truncated(t - 1)) from e
        trace.actions[t - 1] = actions
        trace.losses[t - 1] = loss
        trace.probabilities[t - 1] = p_chosen
        learner.update(t, actions, loss, p_chosen, probabilities)
    recommendation = learner.recommend(cfg.recommend_mode, rng, trace)
    logger.info(
        f"Run completed: mean loss {trace.losses.mean():.6g}, recommendation "
        f"{_short(recommendation)}"
    )
    return trace, recommendation


def _short(joint: JointAction, limit: int = 12) -> str:
    actions = list(joint.actions)
    text = ", ".join(str(a) for a in actions[:limit])
    return f"[{text}{', ...' if len(actions) > limit else ''}]"


def _check_algorithm(cfg: ExperimentConfig, expected: str):
    if cfg.algorithm != expected:
        raise ValueError(f"Configuration selects {cfg.algorithm!r}, this runner executes {expected!r}")


def _environment(cfg: ExperimentConfig, env: Optional[LossEnvironment], base_dir) -> LossEnvironment:
    env = env if env is not None else cfg.build_environment(base_dir)
    topo = cfg.build_topology()
    if (env.topology.num_agents, env.topology.num_actions) != (topo.num_agents, topo.num_actions):
        raise ValueError("Environment topology differs from the configured topology")
    return env


def run_manas(cfg: ExperimentConfig, env: Optional[LossEnvironment] = None,
              base_dir: Union[str, Path, None] = None) -> Tuple[LossTrace, JointAction]:
    """
    MANAS: softmax sampling, importance-weighted score updates

    Parameters
    ----------
    cfg : ExperimentConfig
        Configuration with ``algorithm == "manas"``
    env : LossEnvironment, optional
        Oracle to use instead of the configured one
    base_dir : str or Path, optional
        Directory relative environment paths resolve against

    Returns
    -------
    Tuple[LossTrace, JointAction]
        Trace of every round and the final recommendation
    """
    _check_algorithm(cfg, "manas")
    env = _environment(cfg, env, base_dir)
    hp = cfg.hyperparams()
    logger.info(f"MANAS hyperparameters: eta={hp.eta:.6g}, gamma={hp.gamma:.6g}")
    return _run_loop(cfg, env, lambda rng: ManasLearner(env.topology, hp))


def run_manas_ls(cfg: ExperimentConfig, env: Optional[LossEnvironment] = None,
                 base_dir: Union[str, Path, None] = None) -> Tuple[LossTrace, JointAction]:
    """MANAS-LS: Zipf sampling over least-squares estimates refitted every ``solve_period`` rounds."""
    _check_algorithm(cfg, "manas_ls")
    env = _environment(cfg, env, base_dir)
    schedule = cfg.ls_schedule()
    logger.info(
        f"MANAS-LS schedule: refit every {schedule.solve_period} rounds once {schedule.min_samples} "
        f"samples are held, window {schedule.window or 'full history'}"
    )
    return _run_loop(cfg, env, lambda rng: ManasLsLearner(env.topology, schedule, rng))


def run_manas_comband(cfg: ExperimentConfig, env: Optional[LossEnvironment] = None,
                      base_dir: Union[str, Path, None] = None) -> Tuple[LossTrace, JointAction]:
    """Softmax sampling driven by the per-round second-moment estimator (small instances)."""
    _check_algorithm(cfg, "manas_comband")
    env = _environment(cfg, env, base_dir)
    if env.topology.dim > 200:
        logger.warning(
            f"Pseudo-inverting a {env.topology.dim}x{env.topology.dim} matrix every round will be slow"
        )
    hp = cfg.hyperparams()
    return _run_loop(cfg, env, lambda rng: ComBandLearner(env.topology, hp))


def run_random_search(cfg: ExperimentConfig, env: Optional[LossEnvironment] = None,
                      base_dir: Union[str, Path, None] = None) -> Tuple[LossTrace, JointAction]:
    """Uniform sampling baseline; recommends the best observed architecture."""
    _check_algorithm(cfg, "random_search")
    env = _environment(cfg, env, base_dir)
    return _run_loop(cfg, env, lambda rng: RandomSearchLearner(env.topology))


RUNNERS = {
    "manas": run_manas,
    "manas_ls": run_manas_ls,
    "manas_comband": run_manas_comband,
    "random_search": run_random_search,
}


def run_experiment(cfg: ExperimentConfig, env: Optional[LossEnvironment] = None,
                   base_dir: Union[str, Path, None] = None) -> Tuple[LossTrace, JointAction]:
    """Dispatch on ``cfg.algorithm``."""
    return RUNNERS[cfg.algorithm](cfg, env, base_dir)


@dataclass
class RunResult:
    seed: int
    trace: LossTrace
    recommendation: JointAction
    report: Optional[RegretReport] = None


@dataclass
class RepeatResult:
    """Outcome of R seeded runs: per-run results, failures and the aggregated regret."""

    config: ExperimentConfig
    runs: List[RunResult]
    summary: Optional[RegretSummary] = None
    failures: List[Dict] = field(default_factory=list)

    @property
    def best(self) -> RunResult:
        """Run with the lowest simple regret, or the lowest observed loss without regret reports."""
        if self.summary is not None:
            return self.runs[self.summary.best_index]
        return min(self.runs, key=lambda run: float(run.trace.losses.min()))


def run_single(cfg: ExperimentConfig, env: Optional[LossEnvironment] = None,
               base_dir: Union[str, Path, None] = None) -> RunResult:
    """One run plus its regret report (None when the environment has no hindsight oracle)."""
    env = _environment(cfg, env, base_dir)
    trace, recommendation = run_experiment(cfg, env, base_dir)
    try:
        report = build_report(trace, env, recommendation)
    except (UnsupportedMetricError, SearchSpaceTooLargeError) as e:
        logger.warning(f"Regret not computed for seed {cfg.seed}: {e}")
        report = None
    return RunResult(cfg.seed, trace, recommendation, report)


def _run_seed(args) -> Tuple[int, Optional[RunResult], Optional[str]]:
    cfg, seed, env, base_dir = args
    try:
        return seed, run_single(cfg.with_seed(seed), env, base_dir), None
    except Exception as e:
        logger.error(f"Run with seed {seed} failed: {e}")
        return seed, None, f"{type(e).__name__}: {e}"


def run_repeats(cfg: ExperimentConfig, base_dir: Union[str, Path, None] = None,
                env: Optional[LossEnvironment] = None) -> RepeatResult:
    """
    Execute ``cfg.repeats`` runs with seeds seed, seed+1, ..., seed+R-1

    Runs go to a process pool when ``cfg.parallel`` is set; results do not
    depend on the number of processes. Failed runs are recorded and the
    aggregation covers the completed ones.

    Raises
    ------
    RuntimeError
        Every run failed
    """
    seeds = [cfg.seed + r for r in range(cfg.repeats)]
    logger.info(f"Running {cfg.repeats} repeats of {cfg.algorithm} (seeds {seeds[0]}..{seeds[-1]})")
    jobs = [(cfg, seed, env, base_dir) for seed in seeds]
    if cfg.parallel and cfg.repeats > 1 and env is None:
        with Pool(processes=cfg.processes) as pool:
            outcomes = pool.map(_run_seed, jobs)
    else:
        outcomes = [_run_seed(job) for job in jobs]

    runs = [result for _, result, _ in outcomes if result is not None]
    failures = [{"seed": seed, "error": error} for seed, result, error in outcomes if result is None]
    if not runs:
        raise RuntimeError(f"All {cfg.repeats} runs failed; first error: {failures[0]['error']}")
    reports = [run.report for run in runs if run.report is not None]
    summary = aggregate_reports(reports, failures) if len(reports) == len(runs) else None
    return RepeatResult(cfg, runs, summary, failures)


class ExperimentRunner:
    """Runs configured experiments and keeps their results by name"""

    def __init__(self, base_dir: Union[str, Path, None] = None):
        self.base_dir = base_dir
        self.results: Dict[str, RepeatResult] = {}

    def run(self, cfg: ExperimentConfig, name: Optional[str] = None,
            env: Optional[LossEnvironment] = None) -> RepeatResult:
        """
        Run every repeat of an experiment

        Parameters
        ----------
        cfg : ExperimentConfig
            Validated configuration
        name : str, optional
            Key under which the result is stored (defaults to the algorithm)
        env : LossEnvironment, optional
            Oracle to use instead of the configured one

        Returns
        -------
        RepeatResult
            Runs and aggregated regret
        """
        name = name or cfg.algorithm
        result = run_repeats(cfg, self.base_dir, env)
        self.results[name] = result
        if result.summary is not None:
            logger.info(
                f"Experiment {name} completed: mean cumulative regret "
                f"{result.summary.to_dict()['cumulative_regret_mean']:.6g} over {result.summary.repeats} runs"
            )
        else:
            logger.info(f"Experiment {name} completed: {len(result.runs)} runs, regret unavailable")
        return result

    def get_run_results(self, name: str) -> Optional[RepeatResult]:
        """Get results of a named experiment"""
        return self.results.get(name)

    def list_runs(self) -> List[str]:
        """List all experiment names"""
        return list(self.results.keys())
