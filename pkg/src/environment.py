# -*- coding: utf-8 -*-
"""
Environment Module

Loss oracles evaluated once per round on the sampled joint action: the
Gaussian Squeeze Domain, linear adversaries with stationary, piecewise or
random-walk contribution vectors, file-backed tabular benchmarks and a
callback wrapper for user-supplied oracles.

Environments are read-only after construction. Stochastic losses draw from
the generator passed by the caller, never from module state.
"""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np

from .core import (
    MAX_ENUMERATION,
    ArchitectureVector,
    BenchmarkLookupError,
    JointAction,
    SearchSpaceTooLargeError,
    Topology,
    TopologyError,
    UnsupportedMetricError,
    all_joint_actions,
    check_loss,
)

logger = logging.getLogger(__name__)

# Achievable contribution sums are merged after rounding to this many decimals.
SUM_DECIMALS = 9


class LossEnvironment(ABC):
    """
    Base class of the loss oracles.

    Attributes
    ----------
    deterministic : bool
        Observed losses carry no noise.
    stationary : bool
        Expected losses do not depend on the round.
    replayable : bool
        Expected losses of arbitrary joint actions can be re-evaluated, which
        simple regret and hindsight oracles require.
    """

    name = "environment"
    deterministic = True
    stationary = True
    replayable = True

    def __init__(self, topology: Topology):
        self.topology = topology

    @abstractmethod
    def loss(self, actions: np.ndarray, round_index: int, rng: np.random.Generator) -> float:
        """Observed loss of ``actions`` in round ``round_index`` (1-based)."""

    @abstractmethod
    def expected_losses(self, actions: np.ndarray, round_index: int) -> np.ndarray:
        """Noise-free losses of every row of an (S, N) joint-action matrix."""

    def expected_loss(self, actions, round_index: int) -> float:
        return float(self.expected_losses(np.atleast_2d(np.asarray(actions, dtype=np.int64)), round_index)[0])

    def total_expected_loss(self, actions: np.ndarray, horizon: int) -> np.ndarray:
        """Sum over rounds 1..horizon of the noise-free losses of each row."""
        self._require_replay("total expected loss")
        actions = np.atleast_2d(np.asarray(actions, dtype=np.int64))
        if self.stationary:
            return horizon * self.expected_losses(actions, 1)
        totals = np.zeros(actions.shape[0])
        for t in range(1, horizon + 1):
            totals += self.expected_losses(actions, t)
        return totals

    def loss_sequence(self, actions, horizon: int) -> np.ndarray:
        """Noise-free loss of one fixed joint action in every round 1..horizon."""
        self._require_replay("loss replay")
        actions = np.atleast_2d(np.asarray(actions, dtype=np.int64))
        if self.stationary:
            return np.full(horizon, self.expected_losses(actions, 1)[0])
        return np.array([self.expected_losses(actions, t)[0] for t in range(1, horizon + 1)])

    def hindsight_oracle(self, horizon: int) -> Optional[Tuple[JointAction, float]]:
        """Environment-specific best fixed joint action over ``horizon`` rounds, if known."""
        return None

    def _require_replay(self, what: str):
        if not self.replayable:
            raise UnsupportedMetricError(f"{self.name} environment cannot replay losses for {what}")


# ---------------------------------------------------------------------------
# Gaussian Squeeze Domain
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GsdConfig:
    """
    Gaussian Squeeze Domain parameters.

    Agents' contributions are summed into x and scored by
    G(x) = x * exp(-(x - mu)^2 / sigma^2).

    Parameters
    ----------
    mu : float
        Centre of the squeeze.
    sigma : float
        Width of the squeeze, positive.
    contributions : tuple of float, optional
        Non-negative value contributed by each action; action k contributes k
        when omitted.
    """

    mu: float = 1.0
    sigma: float = 10.0
    contributions: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        if not np.isfinite(self.mu):
            raise ValueError(f"mu must be finite, got {self.mu}")
        if not np.isfinite(self.sigma) or self.sigma <= 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.contributions is not None:
            values = tuple(float(c) for c in self.contributions)
            if not values or not all(np.isfinite(c) and c >= 0 for c in values):
                raise ValueError("Contributions must be a non-empty list of finite non-negative numbers")
            object.__setattr__(self, "contributions", values)

    def table(self, topo: Topology) -> np.ndarray:
        """Contribution of each of the K actions."""
        if self.contributions is None:
            return np.arange(topo.num_actions, dtype=np.float64)
        if len(self.contributions) != topo.num_actions:
            raise TopologyError(
                f"Contribution table has {len(self.contributions)} entries, topology has "
                f"{topo.num_actions} actions"
            )
        return np.asarray(self.contributions, dtype=np.float64)

    @classmethod
    def scaled(cls, topo: Topology, start_sum: float, mu: float = 1.0, sigma: float = 10.0) -> "GsdConfig":
        """Evenly spaced contributions 0, s, ..., (K-1)s with uniform play summing to ``start_sum`` on average."""
        if topo.num_actions == 1:
            return cls(mu=mu, sigma=sigma, contributions=(0.0,))
        step = 2.0 * start_sum / (topo.num_agents * (topo.num_actions - 1))
        return cls(mu=mu, sigma=sigma, contributions=tuple(step * k for k in range(topo.num_actions)))


def gaussian_squeeze(x, mu: float, sigma: float):
    """G(x) = x * exp(-(x - mu)^2 / sigma^2)."""
    x = np.asarray(x, dtype=np.float64)
    return x * np.exp(-((x - mu) ** 2) / sigma ** 2)


def log_gaussian_squeeze(x, mu: float, sigma: float):
    """log G(x) = log x - (x - mu)^2 / sigma^2; -inf at x = 0."""
    x = np.asarray(x, dtype=np.float64)
    with np.errstate(divide="ignore"):
        return np.log(x) - ((x - mu) ** 2) / sigma ** 2


def _round_sums(values):
    return np.round(values, SUM_DECIMALS)


def _joint_sums(actions: np.ndarray, table: np.ndarray) -> np.ndarray:
    """Rounded contribution sum of every row of an (S, N) joint-action matrix."""
    return _round_sums(table[np.atleast_2d(actions)].sum(axis=1))


@lru_cache(maxsize=64)
def _reachable_sums(cfg: GsdConfig, topo: Topology) -> Tuple[np.ndarray, Tuple[np.ndarray, ...],
                                                              Tuple[np.ndarray, ...]]:
    """
    Achievable contribution sums after all N agents (dynamic programming)

    Returns the sorted rounded sums and, per agent, the parent index and
    action leading to each sum, so that one joint action reaching any sum can
    be traced back.
    """
    table = cfg.table(topo)
    k = topo.num_actions
    sums = np.zeros(1)
    parents, choices = [], []
    for agent in range(topo.num_agents):
        candidates = (sums[:, None] + table[None, :]).reshape(-1)
        # Sums are merged on rounded keys but carried unrounded, so rounding
        # error does not accumulate from one agent to the next.
        keys, first = np.unique(_round_sums(candidates), return_index=True)
        if keys.size > MAX_ENUMERATION:
            raise SearchSpaceTooLargeError(
                f"More than {MAX_ENUMERATION} distinct contribution sums after {agent + 1} agents"
            )
        parents.append(first // k)
        choices.append(first % k)
        sums = candidates[first]
    return _round_sums(sums), tuple(parents), tuple(choices)


def _trace_back(parents: Sequence[np.ndarray], choices: Sequence[np.ndarray], index: int) -> JointAction:
    chosen = [0] * len(parents)
    for agent in range(len(parents) - 1, -1, -1):
        chosen[agent] = int(choices[agent][index])
        index = int(parents[agent][index])
    return JointAction(tuple(chosen))


def _lowest_maximiser(sums: np.ndarray, scores: np.ndarray) -> int:
    candidates = np.flatnonzero(scores == scores.max())
    return int(candidates[np.argmin(sums[candidates])])


@lru_cache(maxsize=64)
def _gsd_optimum(cfg: GsdConfig, topo: Topology) -> Tuple[JointAction, float, float]:
    """
    (joint action reaching the optimal sum, optimal sum, log G at that sum)

    The optimum maximises log G, which stays finite where G itself underflows;
    the lowest sum wins ties. The returned sum is recomputed from the joint
    action exactly as per-round losses are, so every joint action reaching it
    scores loss 0.
    """
    table = cfg.table(topo)
    try:
        sums, parents, choices = _reachable_sums(cfg, topo)
        best = _lowest_maximiser(sums, log_gaussian_squeeze(sums, cfg.mu, cfg.sigma))
        joint = _trace_back(parents, choices, best)
    except SearchSpaceTooLargeError:
        logger.warning("Contribution sums are not enumerable, falling back to brute force")
        actions = all_joint_actions(topo)
        sums = _joint_sums(actions, table)
        best = _lowest_maximiser(sums, log_gaussian_squeeze(sums, cfg.mu, cfg.sigma))
        joint = JointAction.from_array(actions[best])
    optimal_sum = float(_joint_sums(joint.as_array(), table)[0])
    return joint, optimal_sum, float(log_gaussian_squeeze(optimal_sum, cfg.mu, cfg.sigma))


def gsd_loss(joint, cfg: GsdConfig, topo: Topology) -> float:
    """
    Normalised Gaussian Squeeze loss of a joint action

    L = 1 - G(x) / G(x*), x being the summed contribution of the joint action
    and x* the best achievable sum, so that L lies in [0, 1] and every joint
    action reaching x* has loss exactly 0. The ratio is taken in log space.

    Parameters
    ----------
    joint : JointAction or array_like
        One action per agent
    cfg : GsdConfig
        Squeeze parameters and contribution table
    topo : Topology
        Search space (fixes K for the default table)

    Returns
    -------
    float
        Loss in [0, 1]
    """
    actions = np.asarray(joint.actions if isinstance(joint, JointAction) else joint, dtype=np.int64)
    if actions.shape != (topo.num_agents,):
        raise TopologyError(f"Expected {topo.num_agents} actions, got shape {actions.shape}")
    return float(_gsd_losses(actions[None, :], cfg, topo)[0])


def _gsd_losses(actions: np.ndarray, cfg: GsdConfig, topo: Topology) -> np.ndarray:
    _, _, log_g_star = _gsd_optimum(cfg, topo)
    x = _joint_sums(actions, cfg.table(topo))
    if np.isneginf(log_g_star):
        # Every achievable sum is 0, so every joint action is optimal.
        return np.zeros(x.shape[0])
    ratio = np.exp(log_gaussian_squeeze(x, cfg.mu, cfg.sigma) - log_g_star)
    return np.clip(1.0 - ratio, 0.0, 1.0)


def gsd_best_in_hindsight(cfg: GsdConfig, topo: Topology) -> Tuple[float, float]:
    """
    Optimal achievable contribution sum and its loss (always 0)

    Enumerates achievable sums by dynamic programming over agents (O(N K)
    distinct sums for evenly spaced contributions) instead of the K**N joint
    actions; falls back to brute force when the sums do not collapse.
    """
    _, optimal_sum, _ = _gsd_optimum(cfg, topo)
    return optimal_sum, 0.0


def gsd_optimal_joint(cfg: GsdConfig, topo: Topology) -> JointAction:
    """A joint action reaching the optimal sum."""
    joint, _, _ = _gsd_optimum(cfg, topo)
    return joint


class GaussianSqueezeEnvironment(LossEnvironment):
    """Cooperative squeeze: deterministic, stationary, losses in [0, 1]."""

    name = "gsd"

    def __init__(self, topology: Topology, cfg: GsdConfig = GsdConfig()):
        super().__init__(topology)
        self.cfg = cfg
        self.table = cfg.table(topology)
        self.optimal_joint, self.optimal_sum, self.log_g_star = _gsd_optimum(cfg, topology)
        logger.info(
            f"Gaussian squeeze with {topology.num_agents} agents, {topology.num_actions} actions, "
            f"mu={cfg.mu}, sigma={cfg.sigma}: optimal achievable sum {self.optimal_sum}"
        )

    def loss(self, actions, round_index, rng):
        return float(self.expected_losses(np.asarray(actions)[None, :], round_index)[0])

    def expected_losses(self, actions, round_index):
        return _gsd_losses(np.atleast_2d(actions), self.cfg, self.topology)

    def hindsight_oracle(self, horizon):
        return self.optimal_joint, 0.0


# ---------------------------------------------------------------------------
# Linear adversaries
# ---------------------------------------------------------------------------

SCHEDULE_KINDS = ("stationary", "piecewise", "random_walk")


@dataclass(frozen=True)
class LinearEnvConfig:
    """
    Linear loss beta_t^T z with a schedule of contribution vectors.

    Parameters
    ----------
    kind : str
        ``stationary`` (fixed ``beta``), ``piecewise`` (``segments`` of
        (1-based start round, beta), each lasting until the next start) or
        ``random_walk`` (``beta`` plus Gaussian steps of ``step_size`` drawn
        from ``walk_seed``).
    noise_std : float
        Standard deviation of additive Gaussian observation noise.
    """

    kind: str = "stationary"
    beta: Tuple[float, ...] = ()
    segments: Tuple[Tuple[int, Tuple[float, ...]], ...] = ()
    step_size: float = 0.0
    walk_seed: int = 0
    noise_std: float = 0.0

    def __post_init__(self):
        if self.kind not in SCHEDULE_KINDS:
            raise ValueError(f"Unknown beta schedule {self.kind!r}, expected one of {SCHEDULE_KINDS}")
        object.__setattr__(self, "beta", tuple(float(b) for b in self.beta))
        segments = tuple((int(start), tuple(float(b) for b in beta)) for start, beta in self.segments)
        object.__setattr__(self, "segments", segments)
        if not np.isfinite(self.noise_std) or self.noise_std < 0:
            raise ValueError(f"noise_std must be non-negative, got {self.noise_std}")
        if self.kind == "piecewise":
            if not segments:
                raise ValueError("Piecewise schedule needs at least one segment")
            starts = [start for start, _ in segments]
            if starts[0] != 1 or any(b <= a for a, b in zip(starts, starts[1:])):
                raise ValueError(f"Segment starts must begin at round 1 and increase, got {starts}")
            vectors = [beta for _, beta in segments]
        else:
            if not self.beta:
                raise ValueError(f"{self.kind} schedule needs a beta vector")
            vectors = [self.beta]
        if self.kind == "random_walk" and (not np.isfinite(self.step_size) or self.step_size < 0):
            raise ValueError(f"step_size must be non-negative, got {self.step_size}")
        if len({len(v) for v in vectors}) != 1:
            raise ValueError("All beta vectors of a schedule must have the same length")
        if not all(np.all(np.isfinite(v)) for v in vectors):
            raise ValueError("Beta vectors must be finite")

    @classmethod
    def stationary_beta(cls, beta: Sequence[float], noise_std: float = 0.0) -> "LinearEnvConfig":
        return cls(kind="stationary", beta=tuple(beta), noise_std=noise_std)

    @classmethod
    def piecewise_beta(cls, segments: Sequence[Tuple[int, Sequence[float]]],
                       noise_std: float = 0.0) -> "LinearEnvConfig":
        return cls(kind="piecewise", segments=tuple((s, tuple(b)) for s, b in segments),
                   noise_std=noise_std)

    @classmethod
    def random_walk_beta(cls, beta: Sequence[float], step_size: float, walk_seed: int = 0,
                         noise_std: float = 0.0) -> "LinearEnvConfig":
        return cls(kind="random_walk", beta=tuple(beta), step_size=step_size,
                   walk_seed=walk_seed, noise_std=noise_std)

    @property
    def dim(self) -> int:
        return len(self.segments[0][1]) if self.kind == "piecewise" else len(self.beta)

    def validate(self, topo: Topology) -> "LinearEnvConfig":
        if self.dim != topo.dim:
            raise TopologyError(f"Beta vectors have length {self.dim}, topology needs K·N = {topo.dim}")
        return self


@lru_cache(maxsize=16)
def _random_walk_steps(walk_seed: int, dim: int, length: int) -> np.ndarray:
    # Generator streams are prefix-stable, so longer paths extend shorter ones.
    steps = np.random.default_rng(walk_seed).standard_normal((length, dim))
    return np.cumsum(steps, axis=0)


def beta_at(cfg: LinearEnvConfig, round_index: int) -> np.ndarray:
    """Contribution vector in force at 1-based ``round_index``."""
    if round_index < 1:
        raise ValueError(f"Rounds are 1-based, got {round_index}")
    if cfg.kind == "stationary":
        return np.asarray(cfg.beta)
    if cfg.kind == "piecewise":
        current = cfg.segments[0][1]
        for start, beta in cfg.segments:
            if start > round_index:
                break
            current = beta
        return np.asarray(current)
    if round_index == 1 or cfg.step_size == 0:
        return np.asarray(cfg.beta)
    length = 1 << (round_index - 2).bit_length()
    walk = _random_walk_steps(cfg.walk_seed, cfg.dim, max(length, round_index - 1))
    return np.asarray(cfg.beta) + cfg.step_size * walk[round_index - 2]


def linear_loss(z: ArchitectureVector, cfg: LinearEnvConfig, round_index: int,
                rng: Optional[np.random.Generator] = None) -> float:
    """
    beta_t^T z plus Gaussian noise of standard deviation ``cfg.noise_std``

    A generator is required only when the noise is non-zero.
    """
    z = np.asarray(z, dtype=np.float64)
    beta = beta_at(cfg, round_index)
    if z.shape != beta.shape:
        raise TopologyError(f"Architecture length {z.shape[0]} differs from beta length {beta.shape[0]}")
    value = float(beta @ z)
    if cfg.noise_std > 0:
        if rng is None:
            raise ValueError("Noisy linear loss needs a random generator")
        value += float(rng.normal(0.0, cfg.noise_std))
    return value


class LinearEnvironment(LossEnvironment):
    """Linear adversary over agent-major architecture vectors."""

    name = "linear"

    def __init__(self, topology: Topology, cfg: LinearEnvConfig, horizon: Optional[int] = None):
        super().__init__(topology)
        self.cfg = cfg.validate(topology)
        self.horizon = horizon
        self.deterministic = cfg.noise_std == 0
        self.stationary = cfg.kind == "stationary"
        self._offsets = np.arange(topology.num_agents) * topology.num_actions

    def beta_at(self, round_index: int) -> np.ndarray:
        if self.horizon is not None and round_index > self.horizon:
            raise ValueError(f"Round {round_index} beyond horizon {self.horizon}")
        return beta_at(self.cfg, round_index)

    def beta_totals(self, horizon: int) -> np.ndarray:
        """Sum of beta_t over rounds 1..horizon."""
        if self.stationary:
            return horizon * np.asarray(self.cfg.beta)
        return np.sum([self.beta_at(t) for t in range(1, horizon + 1)], axis=0)

    def loss(self, actions, round_index, rng):
        value = float(self.expected_losses(np.asarray(actions)[None, :], round_index)[0])
        if self.cfg.noise_std > 0:
            value += float(rng.normal(0.0, self.cfg.noise_std))
        return value

    def expected_losses(self, actions, round_index):
        actions = np.atleast_2d(actions)
        return self.beta_at(round_index)[self._offsets + actions].sum(axis=1)

    def total_expected_loss(self, actions, horizon):
        actions = np.atleast_2d(np.asarray(actions, dtype=np.int64))
        return self.beta_totals(horizon)[self._offsets + actions].sum(axis=1)

    def hindsight_oracle(self, horizon):
        # Losses separate across agents: the best fixed architecture is the
        # blockwise argmin of the summed contributions.
        blocks = self.beta_totals(horizon).reshape(self.topology.num_agents, self.topology.num_actions)
        best = np.argmin(blocks, axis=1)
        return JointAction.from_array(best), float(blocks.min(axis=1).sum())


# ---------------------------------------------------------------------------
# Tabular benchmark
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TabularEntry:
    mean: float
    std: Optional[float] = None


@dataclass
class TabularBenchmark:
    """Precomputed loss statistics of evaluated architectures."""

    topology: Topology
    entries: Dict[Tuple[int, ...], TabularEntry] = field(default_factory=dict)

    def __post_init__(self):
        for actions, entry in self.entries.items():
            JointAction(actions).validate(self.topology)
            check_loss(entry.mean)
            if entry.std is not None and (not np.isfinite(entry.std) or entry.std < 0):
                raise ValueError(f"Entry {list(actions)} has invalid std {entry.std}")

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def complete(self) -> bool:
        return len(self.entries) == self.topology.space_size

    def best_entry(self) -> Tuple[Tuple[int, ...], TabularEntry]:
        """Entry with the lowest mean loss (lowest action vector on ties)."""
        return min(self.entries.items(), key=lambda item: (item[1].mean, item[0]))


def tabular_lookup(joint, bench: TabularBenchmark, noisy: bool = False,
                   rng: Optional[np.random.Generator] = None) -> float:
    """
    Loss of a joint action from a tabular benchmark

    Returns the stored mean, plus N(0, std^2) noise when ``noisy`` and the
    entry has a std.

    Raises
    ------
    BenchmarkLookupError
        The architecture is not in the benchmark
    """
    key = tuple(int(a) for a in (joint.actions if isinstance(joint, JointAction) else joint))
    entry = bench.entries.get(key)
    if entry is None:
        raise BenchmarkLookupError(f"Architecture {list(key)} is not in the tabular benchmark")
    if noisy and entry.std:
        if rng is None:
            raise ValueError("Noisy lookup needs a random generator")
        return entry.mean + float(rng.normal(0.0, entry.std))
    return entry.mean


class TabularEnvironment(LossEnvironment):
    """Stationary oracle backed by a :class:`TabularBenchmark`."""

    name = "tabular"

    def __init__(self, bench: TabularBenchmark, noisy: bool = False):
        super().__init__(bench.topology)
        self.bench = bench
        self.noisy = noisy
        self.deterministic = not noisy or all(not e.std for e in bench.entries.values())

    def loss(self, actions, round_index, rng):
        return tabular_lookup(actions, self.bench, self.noisy, rng)

    def expected_losses(self, actions, round_index):
        return np.array([tabular_lookup(row, self.bench) for row in np.atleast_2d(actions)])

    def hindsight_oracle(self, horizon):
        if not self.bench.complete:
            raise UnsupportedMetricError(
                f"Tabular benchmark covers {len(self.bench)} of {self.topology.space_size} "
                "architectures; best in hindsight is undefined"
            )
        actions, entry = self.bench.best_entry()
        return JointAction(actions), horizon * entry.mean


# ---------------------------------------------------------------------------
# User-supplied oracle
# ---------------------------------------------------------------------------


class CallbackEnvironment(LossEnvironment):
    """
    Wraps ``fn(actions, round_index, rng) -> loss``.

    Without ``expected`` (a noise-free ``(actions, round_index) -> loss``)
    the environment cannot be replayed.
    """

    name = "callback"

    def __init__(self, topology: Topology, fn: Callable[[np.ndarray, int, np.random.Generator], float],
                 expected: Optional[Callable[[np.ndarray, int], float]] = None,
                 deterministic: bool = False, stationary: bool = False):
        super().__init__(topology)
        self.fn = fn
        self.expected = expected
        self.deterministic = deterministic
        self.stationary = stationary
        self.replayable = expected is not None

    def loss(self, actions, round_index, rng):
        return self.fn(np.asarray(actions), round_index, rng)

    def expected_losses(self, actions, round_index):
        self._require_replay("expected losses")
        return np.array([self.expected(row, round_index) for row in np.atleast_2d(actions)], dtype=np.float64)
