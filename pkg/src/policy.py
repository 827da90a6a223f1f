# -*- coding: utf-8 -*-
"""
Policy Module

Per-agent sampling laws and credit assignment: softmax/EXP3 coordinated
descent, Zipf sampling with least-squares refits, and the exact second-moment
estimator used by the combinatorial (ComBand-style) variant.

Score arrays keep the actions on the last axis, so every function accepts a
single agent's vector of shape (K,) or all agents at once as (N, K).
"""

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import lstsq, pinvh

from .core import (
    ArchitectureVector,
    FeasibilityError,
    ImportanceWeightError,
    LossValueError,
    Topology,
    TopologyError,
    encode_many,
)

logger = logging.getLogger(__name__)

# Singular values below rtol * sigma_max are treated as zero.
LS_RTOL = 1e-10
PINV_RTOL = 1e-10

RECOMMEND_MODES = ("argmin", "sample")


@dataclass(frozen=True)
class ManasHyperparams:
    """
    Softmax temperature coefficient and exploration mixture of MANAS.

    Parameters
    ----------
    eta : float
        Temperature coefficient of ``exp(-eta * b)``. Zero gives uniform sampling.
    gamma : float
        Weight of the uniform mixture, in [0, 1].
    horizon_n : int, optional
        Planned number of sampled architectures the defaults were derived from.
    degenerate : bool
        Set when the topology has a single action per agent.
    """

    eta: float
    gamma: float
    horizon_n: Optional[int] = None
    degenerate: bool = False

    def __post_init__(self):
        if not math.isfinite(self.eta) or self.eta < 0:
            raise ValueError(f"eta must be a finite non-negative number, got {self.eta}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in [0, 1], got {self.gamma}")
        if self.horizon_n is not None and self.horizon_n < 1:
            raise ValueError(f"horizon_n must be positive, got {self.horizon_n}")


@dataclass(frozen=True)
class AgentPolicy:
    """Score vector of one agent together with the distribution sampled from it."""

    scores: np.ndarray
    probabilities: np.ndarray

    @staticmethod
    def snapshot(scores: np.ndarray, probabilities: np.ndarray) -> Tuple["AgentPolicy", ...]:
        """Freeze (N, K) score and probability matrices into one policy per agent."""
        return tuple(
            AgentPolicy(np.array(s, dtype=np.float64), np.array(p, dtype=np.float64))
            for s, p in zip(scores, probabilities)
        )


def manas_defaults(topo: Topology, horizon_n: int) -> ManasHyperparams:
    """
    Starting values of eta and gamma for a planned number of architectures

    eta = 0.95 * sqrt(ln K) / (n K) and gamma = min(1, 1.05 * K ln K / n).
    A single-action topology yields eta = gamma = 0 and the degenerate flag.
    """
    if horizon_n < 1:
        raise ValueError(f"horizon_n must be positive, got {horizon_n}")
    k = topo.num_actions
    if k == 1:
        logger.warning("Single action per agent: nothing to learn, using eta = gamma = 0")
        return ManasHyperparams(eta=0.0, gamma=0.0, horizon_n=horizon_n, degenerate=True)
    log_k = math.log(k)
    eta = 0.95 * math.sqrt(log_k) / (horizon_n * k)
    gamma = min(1.0, 1.05 * k * log_k / horizon_n)
    return ManasHyperparams(eta=eta, gamma=gamma, horizon_n=horizon_n)


def _as_scores(scores) -> np.ndarray:
    b = np.asarray(scores, dtype=np.float64)
    if b.ndim == 0 or b.shape[-1] == 0:
        raise TopologyError("Scores need at least one action")
    if not np.all(np.isfinite(b)):
        raise ValueError("Scores must be finite")
    return b


def softmax_distribution(scores, hp: ManasHyperparams) -> np.ndarray:
    """
    Softmax over negated cumulative losses mixed with the uniform law

    p[k] = (1 - gamma) * exp(-eta b[k]) / sum_j exp(-eta b[j]) + gamma / K

    Parameters
    ----------
    scores : array_like
        Cumulative loss estimates, shape (K,) or (N, K)
    hp : ManasHyperparams
        Temperature coefficient and mixture weight

    Returns
    -------
    np.ndarray
        Probabilities with the same shape as ``scores``
    """
    b = _as_scores(scores)
    k = b.shape[-1]
    shifted = b - b.min(axis=-1, keepdims=True)
    weights = np.exp(-hp.eta * shifted)
    p = weights / weights.sum(axis=-1, keepdims=True)
    return (1.0 - hp.gamma) * p + hp.gamma / k


def exp3_update(scores, chosen: int, loss: float, p_chosen: float) -> np.ndarray:
    """Importance-weighted update b[chosen] += loss / p_chosen; other entries untouched."""
    b = np.array(scores, dtype=np.float64)
    if not 0 <= chosen < b.shape[-1]:
        raise TopologyError(f"Chosen action {chosen} out of range [0, {b.shape[-1]})")
    if not p_chosen > 0 or p_chosen > 1:
        raise ImportanceWeightError(
            f"Chosen-action probability must lie in (0, 1], got {p_chosen}; "
            "the action was not sampled from this policy"
        )
    if not math.isfinite(loss):
        raise LossValueError(f"Loss must be finite, got {loss}")
    b[chosen] += loss / p_chosen
    return b


def exp3_update_agents(scores: np.ndarray, chosen: np.ndarray, loss: float,
                       p_chosen: np.ndarray) -> np.ndarray:
    """:func:`exp3_update` applied to every agent of an (N, K) score matrix."""
    b = np.array(scores, dtype=np.float64)
    chosen = np.asarray(chosen, dtype=np.int64)
    p_chosen = np.asarray(p_chosen, dtype=np.float64)
    if np.any(p_chosen <= 0) or np.any(p_chosen > 1):
        agent = int(np.flatnonzero((p_chosen <= 0) | (p_chosen > 1))[0])
        raise ImportanceWeightError(
            f"Agent {agent} chosen-action probability {p_chosen[agent]} outside (0, 1]"
        )
    b[np.arange(b.shape[0]), chosen] += loss / p_chosen
    return b


@lru_cache(maxsize=None)
def harmonic_number(k: int) -> float:
    """H_k = 1 + 1/2 + ... + 1/k."""
    return math.fsum(1.0 / j for j in range(1, k + 1))


def zipf_ranks(scores, tie_order: Optional[np.ndarray] = None) -> np.ndarray:
    """
    1-based rank of every action after sorting scores ascending

    Ties are broken by ``tie_order`` when given (lower first), otherwise by
    the lower action index.
    """
    b = _as_scores(scores)
    if tie_order is None:
        order = np.argsort(b, axis=-1, kind="stable")
    else:
        tie_order = np.asarray(tie_order)
        if tie_order.shape != b.shape:
            raise TopologyError(f"tie_order shape {tie_order.shape} differs from scores {b.shape}")
        order = np.lexsort((tie_order, b), axis=-1)
    ranks = np.empty(b.shape, dtype=np.int64)
    positions = np.broadcast_to(np.arange(1, b.shape[-1] + 1), b.shape)
    np.put_along_axis(ranks, order, positions, axis=-1)
    return ranks


def zipf_distribution(scores, tie_order: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Sampling probability inversely proportional to estimated rank

    p[k] = 1 / (rank(k) * H_K), rank 1 being the lowest estimated loss.
    """
    ranks = zipf_ranks(scores, tie_order)
    return 1.0 / (ranks * harmonic_number(ranks.shape[-1]))


@dataclass
class LsBatch:
    """
    Evaluated architectures and their losses for a least-squares refit.

    ``design`` has one column per evaluated architecture (K·N rows, S columns).
    """

    topology: Topology
    design: np.ndarray
    losses: np.ndarray

    def __post_init__(self):
        self.design = np.asarray(self.design, dtype=np.float64)
        self.losses = np.asarray(self.losses, dtype=np.float64).reshape(-1)
        topo = self.topology
        if self.design.ndim != 2 or self.design.shape[0] != topo.dim:
            raise TopologyError(
                f"Design must have {topo.dim} rows, got shape {self.design.shape}"
            )
        if self.design.shape[1] != self.losses.shape[0]:
            raise TopologyError(
                f"{self.design.shape[1]} architectures but {self.losses.shape[0]} losses"
            )
        blocks = self.design.reshape(topo.num_agents, topo.num_actions, -1)
        if not np.all((blocks == 0) | (blocks == 1)) or not np.all(blocks.sum(axis=1) == 1):
            raise FeasibilityError("Every design column must select exactly one action per agent")

    @classmethod
    def from_actions(cls, actions: np.ndarray, losses: Sequence[float], topo: Topology) -> "LsBatch":
        """Build a batch from an (S, N) matrix of joint actions."""
        return cls(topo, encode_many(actions, topo).T, np.asarray(losses, dtype=np.float64))

    @property
    def num_samples(self) -> int:
        return int(self.losses.shape[0])

    def ready(self, min_samples: Optional[int] = None) -> bool:
        """True once the batch holds at least ``min_samples`` (default K·N) architectures."""
        needed = self.topology.dim if min_samples is None else min_samples
        return self.num_samples >= needed


@dataclass(frozen=True)
class LsSchedule:
    """
    Refit cadence of MANAS-LS.

    Parameters
    ----------
    solve_period : int
        Rounds between least-squares refits.
    min_samples : int
        Architectures the batch must hold before the first refit.
    window : int, optional
        Most recent samples kept in the batch; None keeps the full history.
    """

    solve_period: int
    min_samples: int
    window: Optional[int] = None

    def __post_init__(self):
        if self.solve_period < 1 or self.min_samples < 1:
            raise ValueError("solve_period and min_samples must be positive")
        if self.window is not None and self.window < self.min_samples:
            raise ValueError(
                f"Window of {self.window} samples can never reach min_samples={self.min_samples}"
            )


def ls_batch_solve(batch: LsBatch) -> np.ndarray:
    """
    Minimum-norm least-squares fit of losses on architecture vectors

    Solves min_beta sum_s (L_s - beta^T Z_s)^2 through a rank-revealing SVD
    (LAPACK gelsd), singular values below ``LS_RTOL * sigma_max`` being
    treated as zero.

    Parameters
    ----------
    batch : LsBatch
        Design (K·N, S) and losses (S,)

    Returns
    -------
    np.ndarray
        Estimated per-operation contributions, length K·N
    """
    if batch.num_samples < 1:
        raise ValueError("Least-squares batch is empty")
    if not np.all(np.isfinite(batch.losses)):
        raise LossValueError("Least-squares batch contains non-finite losses")
    if not batch.ready():
        logger.debug(
            f"Solving with {batch.num_samples} samples for {batch.topology.dim} unknowns; "
            "estimate is not identifiable"
        )
    beta, _, rank, _ = lstsq(batch.design.T, batch.losses, cond=LS_RTOL, lapack_driver="gelsd")
    logger.debug(f"Least-squares refit on {batch.num_samples} samples, effective rank {rank}")
    return beta


def second_moment(policies) -> np.ndarray:
    """
    Exact E[Z Z^T] under the product of per-agent sampling laws

    Diagonal blocks are diag(pi_i); off-diagonal blocks are outer(pi_i, pi_j).

    Parameters
    ----------
    policies : array_like
        (N, K) matrix, or list of N distributions

    Returns
    -------
    np.ndarray
        Symmetric positive semidefinite (K·N, K·N) matrix
    """
    pi = np.asarray(policies, dtype=np.float64)
    if pi.ndim != 2:
        raise TopologyError(f"Expected an (N, K) policy matrix, got shape {pi.shape}")
    n_agents, k = pi.shape
    flat = pi.reshape(-1)
    p = np.outer(flat, flat)
    for i in range(n_agents):
        blk = slice(i * k, (i + 1) * k)
        p[blk, blk] = np.diag(pi[i])
    return p


def pinv_second_moment(policies) -> np.ndarray:
    """Pseudo-inverse of :func:`second_moment` with relative cutoff ``PINV_RTOL``."""
    return pinvh(second_moment(policies), rtol=PINV_RTOL)


def comband_estimate(loss: float, z: ArchitectureVector, pinv_p: np.ndarray) -> np.ndarray:
    """Per-round estimate loss * P^+ z of the contribution vector."""
    z = np.asarray(z, dtype=np.float64).reshape(-1)
    pinv_p = np.asarray(pinv_p, dtype=np.float64)
    if pinv_p.ndim != 2 or pinv_p.shape != (z.shape[0], z.shape[0]):
        raise TopologyError(
            f"Pseudo-inverse shape {pinv_p.shape} does not match architecture length {z.shape[0]}"
        )
    return float(loss) * (pinv_p @ z)


def sample_actions(probabilities: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """
    Draw one action per row of an (N, K) probability matrix

    Consumes exactly N uniforms from ``rng``, agent 0 first.
    """
    p = np.atleast_2d(np.asarray(probabilities, dtype=np.float64))
    u = rng.random(p.shape[0])
    cdf = np.cumsum(p, axis=1)
    chosen = (cdf <= u[:, None]).sum(axis=1)
    # Round-off can leave u above the final cumulative sum.
    last_positive = p.shape[1] - 1 - np.argmax(p[:, ::-1] > 0, axis=1)
    return np.minimum(chosen, last_positive)


def recommend(scores, mode: str = "argmin", dist=None,
              rng: Optional[np.random.Generator] = None) -> int:
    """
    Final operation of one agent

    ``argmin`` returns the lowest score (lowest index on ties); ``sample``
    draws from ``dist``.
    """
    if mode == "argmin":
        return int(np.argmin(_as_scores(scores)))
    if mode == "sample":
        if dist is None or rng is None:
            raise ValueError("Sample mode needs a distribution and a random generator")
        return int(sample_actions(np.asarray(dist)[None, :], rng)[0])
    raise ValueError(f"Unknown recommend mode {mode!r}, expected one of {RECOMMEND_MODES}")
