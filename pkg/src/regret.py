# -*- coding: utf-8 -*-
"""
Regret Accounting Module

Cumulative and simple regret against the best fixed joint action in
hindsight, the per-agent factorisation of linear environments, exhaustive
hindsight oracles and the theoretical bound / complexity diagnostics.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from scipy import stats

from .core import (
    JointAction,
    Topology,
    TopologyError,
    UnsupportedMetricError,
    all_joint_actions,
)
from .environment import LinearEnvironment, LossEnvironment

if TYPE_CHECKING:
    from .runner import LossTrace

logger = logging.getLogger(__name__)

# Rows evaluated per vectorised call of the exhaustive scan.
BRUTEFORCE_CHUNK = 1 << 16

REGRET_COLUMNS = ["round", "loss", "instantaneous_regret", "cumulative_regret", "bound"]


@dataclass
class RegretReport:
    """
    Regret of one run.

    ``per_round`` holds instantaneous regrets L_t(a_t) - L_t(a*), whose sum is
    ``cumulative_regret``.
    """

    cumulative_regret: float
    simple_regret: Optional[float]
    per_round: np.ndarray
    losses: np.ndarray
    best_hindsight_action: JointAction
    oracle_min: float
    recommended: JointAction
    per_agent: Optional[np.ndarray] = None
    theoretical_bound_curve: Optional[np.ndarray] = None
    complexity: Optional["ComplexityDiagnostic"] = None
    noisy: bool = False
    seed: Optional[int] = None

    @property
    def horizon(self) -> int:
        return int(self.per_round.shape[0])

    @property
    def cumulative_curve(self) -> np.ndarray:
        return np.cumsum(self.per_round)

    @property
    def negative(self) -> bool:
        """Measured regret below zero, possible only under observation noise."""
        return self.cumulative_regret < 0

    def to_frame(self) -> pd.DataFrame:
        bound = (self.theoretical_bound_curve if self.theoretical_bound_curve is not None
                 else np.full(self.horizon, np.nan))
        return pd.DataFrame({
            "round": np.arange(1, self.horizon + 1),
            "loss": self.losses,
            "instantaneous_regret": self.per_round,
            "cumulative_regret": self.cumulative_curve,
            "bound": bound,
        }, columns=REGRET_COLUMNS)

    def to_dict(self) -> Dict:
        return {
            "seed": self.seed,
            "horizon": self.horizon,
            "cumulative_regret": self.cumulative_regret,
            "simple_regret": self.simple_regret,
            "mean_instantaneous_regret": float(self.per_round.mean()),
            "oracle_min": self.oracle_min,
            "best_hindsight_action": list(self.best_hindsight_action.actions),
            "recommended": list(self.recommended.actions),
            "per_agent": None if self.per_agent is None else self.per_agent.tolist(),
            "complexity": None if self.complexity is None else self.complexity.to_dict(),
            "noisy": self.noisy,
            "negative_regret": self.negative,
        }


@dataclass(frozen=True)
class ComplexityDiagnostic:
    """Gap-based difficulty H = N * min_i (second best - best of block i)."""

    h: float
    degenerate: bool
    gaps: Tuple[float, ...] = ()

    def to_dict(self) -> Dict:
        return {"h": self.h, "degenerate": self.degenerate, "gaps": list(self.gaps)}


def _losses_of(trace) -> np.ndarray:
    return np.asarray(trace.losses if hasattr(trace, "losses") else trace, dtype=np.float64)


def cumulative_regret(trace: "LossTrace", oracle_min: float, horizon: Optional[int] = None) -> float:
    """
    Summed played loss minus the best fixed joint action's summed loss

    Parameters
    ----------
    trace : LossTrace or array_like
        Played losses L_t(a_t)
    oracle_min : float
        min over joint actions of sum_t L_t(a)
    horizon : int, optional
        Expected trace length

    Returns
    -------
    float
        Regret; negative values can only come from noisy observations
    """
    losses = _losses_of(trace)
    if horizon is not None and losses.shape[0] != horizon:
        raise ValueError(f"Trace holds {losses.shape[0]} rounds, horizon is {horizon}")
    regret = float(losses.sum() - oracle_min)
    if regret < 0:
        logger.warning(f"Negative cumulative regret {regret:.6g}: observations are noisy")
    return regret


def simple_regret(trace: "LossTrace", recommended: JointAction, oracle_min: float,
                  env: LossEnvironment) -> float:
    """
    Regret of replaying ``recommended`` over every round of the trace

    Raises
    ------
    UnsupportedMetricError
        The environment cannot replay losses
    """
    horizon = _losses_of(trace).shape[0]
    replayed = env.loss_sequence(recommended.validate(env.topology).as_array(), horizon)
    return float(replayed.sum() - oracle_min)


def best_in_hindsight_bruteforce(env: LossEnvironment, topo: Topology, horizon: int) -> Tuple[JointAction, float]:
    """
    Exhaustive minimiser of sum_t L_t(a) over every joint action

    Ties resolve to the lexicographically lowest joint action.

    Raises
    ------
    SearchSpaceTooLargeError
        K**N exceeds one million; use the environment-specific oracle
    """
    actions = all_joint_actions(topo)
    best_value = math.inf
    best_row = 0
    for start in range(0, actions.shape[0], BRUTEFORCE_CHUNK):
        totals = env.total_expected_loss(actions[start:start + BRUTEFORCE_CHUNK], horizon)
        idx = int(np.argmin(totals))
        if totals[idx] < best_value:
            best_value = float(totals[idx])
            best_row = start + idx
    return JointAction.from_array(actions[best_row]), best_value


def best_in_hindsight(env: LossEnvironment, horizon: int) -> Tuple[JointAction, float]:
    """Environment-specific oracle when available, exhaustive scan otherwise."""
    oracle = env.hindsight_oracle(horizon)
    if oracle is not None:
        return oracle
    env._require_replay("best in hindsight")
    return best_in_hindsight_bruteforce(env, env.topology, horizon)


def per_agent_regret(trace: "LossTrace", env: LossEnvironment) -> np.ndarray:
    """
    Agent-specific regrets of a linear environment

    Entry i is sum_t beta_t^i[a_t^i] - min_k sum_t beta_t^i[k]; the entries
    sum to the cumulative regret of the noise-free losses.

    Raises
    ------
    UnsupportedMetricError
        The environment is not linear
    """
    if not isinstance(env, LinearEnvironment):
        raise UnsupportedMetricError(f"Per-agent regret needs a linear environment, got {env.name}")
    topo = env.topology
    actions = np.asarray(trace.actions, dtype=np.int64)
    if actions.ndim != 2 or actions.shape[1] != topo.num_agents:
        raise TopologyError(f"Trace actions have shape {actions.shape}, expected (T, {topo.num_agents})")
    horizon = actions.shape[0]
    agents = np.arange(topo.num_agents)
    if env.stationary:
        blocks = env.beta_at(1).reshape(topo.num_agents, topo.num_actions)
        played = blocks[agents, actions].sum(axis=0)
    else:
        played = np.zeros(topo.num_agents)
        for t in range(1, horizon + 1):
            blocks = env.beta_at(t).reshape(topo.num_agents, topo.num_actions)
            played += blocks[agents, actions[t - 1]]
    totals = env.beta_totals(horizon).reshape(topo.num_agents, topo.num_actions)
    return played - totals.min(axis=1)


def exp3_bound_curve(topo: Topology, horizon: int) -> np.ndarray:
    """Upper bound 2 N sqrt(t K ln K) on MANAS cumulative regret for t = 1..horizon (zero when K = 1)."""
    t = np.arange(1, horizon + 1, dtype=np.float64)
    k = topo.num_actions
    if k == 1:
        return np.zeros(horizon)
    return 2.0 * topo.num_agents * np.sqrt(t * k * math.log(k))


def ls_complexity_H(beta_totals, topo: Topology) -> ComplexityDiagnostic:
    """
    Complexity H = N * min over agents of the gap between the best and the
    second best summed contribution

    A block whose minimum is shared by two actions has gap 0, making H = 0
    and the diagnostic degenerate.
    """
    if topo.num_actions < 2:
        raise TopologyError("Complexity needs at least two actions per agent")
    totals = np.asarray(beta_totals, dtype=np.float64)
    if totals.shape != (topo.dim,):
        raise TopologyError(f"Expected {topo.dim} summed contributions, got shape {totals.shape}")
    blocks = np.sort(totals.reshape(topo.num_agents, topo.num_actions), axis=1)
    gaps = blocks[:, 1] - blocks[:, 0]
    degenerate = bool(np.any(gaps == 0))
    h = topo.num_agents * float(gaps.min())
    if degenerate:
        logger.warning("Complexity is degenerate: some agent has tied best operations")
    return ComplexityDiagnostic(h=h, degenerate=degenerate, gaps=tuple(float(g) for g in gaps))


def loss_trend(losses) -> Tuple[float, float]:
    """Least-squares slope of loss against round, with its standard error."""
    losses = _losses_of(losses)
    rounds = np.arange(1, losses.shape[0] + 1, dtype=np.float64)
    fit = stats.linregress(rounds, losses)
    return float(fit.slope), float(fit.stderr)


def build_report(trace: "LossTrace", env: LossEnvironment, recommended: JointAction,
                 with_bound: bool = True) -> RegretReport:
    """
    Assemble every regret measure of one finished run

    Parameters
    ----------
    trace : LossTrace
        Played joint actions and observed losses
    env : LossEnvironment
        Environment the trace was collected on (must be replayable)
    recommended : JointAction
        Final recommendation of the run
    with_bound : bool
        Attach the 2 N sqrt(t K ln K) curve
    """
    topo = env.topology
    horizon = trace.horizon
    best_action, oracle_min = best_in_hindsight(env, horizon)
    reference = env.loss_sequence(best_action.as_array(), horizon)
    losses = _losses_of(trace)
    per_round = losses - reference
    total = cumulative_regret(trace, oracle_min, horizon)
    simple = simple_regret(trace, recommended, oracle_min, env)

    per_agent = None
    complexity = None
    if isinstance(env, LinearEnvironment):
        per_agent = per_agent_regret(trace, env)
        if topo.num_actions >= 2:
            complexity = ls_complexity_H(env.beta_totals(horizon), topo)

    return RegretReport(
        cumulative_regret=total,
        simple_regret=simple,
        per_round=per_round,
        losses=losses,
        best_hindsight_action=best_action,
        oracle_min=oracle_min,
        recommended=recommended,
        per_agent=per_agent,
        theoretical_bound_curve=exp3_bound_curve(topo, horizon) if with_bound else None,
        complexity=complexity,
        noisy=not env.deterministic,
        seed=getattr(trace, "seed", None),
    )


@dataclass
class RegretSummary:
    """Reports of repeated runs with their mean / spread curves."""

    reports: List[RegretReport]
    failures: List[Dict] = field(default_factory=list)

    def __post_init__(self):
        if not self.reports:
            raise ValueError("No completed runs to aggregate")
        lengths = {r.horizon for r in self.reports}
        if len(lengths) != 1:
            raise ValueError(f"Runs have different horizons: {sorted(lengths)}")

    @property
    def repeats(self) -> int:
        return len(self.reports)

    @property
    def best_index(self) -> int:
        """Run whose recommendation replays with the lowest loss (first on ties)."""
        values = [r.simple_regret if r.simple_regret is not None else math.inf for r in self.reports]
        return int(np.argmin(values))

    @property
    def best(self) -> RegretReport:
        return self.reports[self.best_index]

    def _stack(self, attr: str) -> np.ndarray:
        return np.vstack([getattr(r, attr) for r in self.reports])

    def to_frame(self) -> pd.DataFrame:
        cumulative = self._stack("cumulative_curve")
        instant = self._stack("per_round")
        return pd.DataFrame({
            "round": np.arange(1, cumulative.shape[1] + 1),
            "mean_regret": cumulative.mean(axis=0),
            "std_regret": cumulative.std(axis=0),
            "mean_instantaneous_regret": instant.mean(axis=0),
            "std_instantaneous_regret": instant.std(axis=0),
        })

    def to_dict(self) -> Dict:
        finals = np.array([r.cumulative_regret for r in self.reports])
        simples = np.array([r.simple_regret for r in self.reports], dtype=np.float64)
        return {
            "repeats": self.repeats,
            "cumulative_regret_mean": float(finals.mean()),
            "cumulative_regret_std": float(finals.std()),
            "simple_regret_mean": float(np.nanmean(simples)),
            "simple_regret_std": float(np.nanstd(simples)),
            "best_run": self.best_index,
            "best_recommendation": list(self.best.recommended.actions),
            "runs": [r.to_dict() for r in self.reports],
            "failures": self.failures,
        }


def aggregate_reports(reports: List[RegretReport], failures: Optional[List[Dict]] = None) -> RegretSummary:
    if failures:
        logger.warning(f"Aggregating {len(reports)} completed runs; {len(failures)} runs failed")
    return RegretSummary(list(reports), list(failures or []))
