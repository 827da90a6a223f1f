# -*- coding: utf-8 -*-
"""
Core Domain Module

Factored action space shared by every other module: topology, joint actions,
one-hot architecture vectors, loss checks and the error hierarchy.
"""

import json
import logging
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np

logger = logging.getLogger(__name__)

# Agents per cell of the searched network (two input edges per node, four
# intermediate nodes: 2 + 3 + 4 + 5).
AGENTS_PER_CELL = 14

ArchitectureVector = np.ndarray


class TopologyError(ValueError):
    """Dimensions of an action, vector or matrix disagree with the topology."""


class FeasibilityError(ValueError):
    """An architecture vector does not select exactly one action per agent."""


class LossValueError(ValueError):
    """A loss is non-finite, or outside [0, 1] when bounded losses are required."""


class ImportanceWeightError(ValueError):
    """Importance weighting requested with a non-positive sampling probability."""


class BenchmarkLookupError(KeyError):
    """A joint action is missing from a tabular benchmark."""


class UnsupportedMetricError(ValueError):
    """A metric was requested from an environment that cannot provide it."""


class SearchSpaceTooLargeError(ValueError):
    """Exhaustive enumeration was requested over too many joint actions."""


class RunAbortedError(RuntimeError):
    """A run stopped early; ``trace`` holds every round completed before the failure."""

    def __init__(self, message: str, trace=None):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class Topology:
    """
    Factored search space: ``num_agents`` agents, each choosing one of
    ``num_actions`` operations.

    Parameters
    ----------
    num_agents : int
        Number of agents N (one per edge of the searched cell graph).
    num_actions : int
        Number of candidate operations K, shared by every agent.
    labels : tuple of str, optional
        Opaque operation names, carried as metadata only.
    """

    num_agents: int
    num_actions: int
    labels: Optional[Tuple[str, ...]] = None

    def __post_init__(self):
        for name in ("num_agents", "num_actions"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < 1:
                raise TopologyError(f"{name} must be a positive integer, got {value!r}")
            object.__setattr__(self, name, int(value))
        if self.labels is not None:
            labels = tuple(str(label) for label in self.labels)
            if len(labels) != self.num_actions:
                raise TopologyError(
                    f"Expected {self.num_actions} operation labels, got {len(labels)}"
                )
            object.__setattr__(self, "labels", labels)

    @classmethod
    def from_cells(cls, num_cells: int, num_actions: int = 8,
                   labels: Optional[Sequence[str]] = None) -> "Topology":
        """Topology of a network with ``num_cells`` searched cells (14 agents per cell)."""
        if isinstance(num_cells, bool) or not isinstance(num_cells, (int, np.integer)) or num_cells < 1:
            raise TopologyError(f"num_cells must be a positive integer, got {num_cells!r}")
        return cls(AGENTS_PER_CELL * int(num_cells), num_actions,
                   tuple(labels) if labels is not None else None)

    @property
    def dim(self) -> int:
        """Length K·N of an architecture vector."""
        return self.num_agents * self.num_actions

    @property
    def space_size(self) -> int:
        """Number of joint actions K**N as an exact integer."""
        return self.num_actions ** self.num_agents

    @property
    def degenerate(self) -> bool:
        """True when every agent has a single action (nothing to learn)."""
        return self.num_actions == 1

    def block(self, agent: int) -> slice:
        """Slots of ``agent`` inside an agent-major architecture vector."""
        if not 0 <= agent < self.num_agents:
            raise TopologyError(f"Agent index {agent} out of range [0, {self.num_agents})")
        return slice(agent * self.num_actions, (agent + 1) * self.num_actions)

    def log10_space_size(self) -> float:
        """log10 of K**N, finite where the exact space size overflows a float."""
        return self.num_agents * math.log10(self.num_actions)


@dataclass(frozen=True)
class JointAction:
    """One action index per agent; the architecture sampled in a round."""

    actions: Tuple[int, ...]

    def __post_init__(self):
        actions = tuple(int(a) for a in self.actions)
        object.__setattr__(self, "actions", actions)

    def __len__(self) -> int:
        return len(self.actions)

    def __iter__(self):
        return iter(self.actions)

    def validate(self, topo: Topology) -> "JointAction":
        if len(self.actions) != topo.num_agents:
            raise TopologyError(
                f"Joint action has {len(self.actions)} entries, topology has {topo.num_agents} agents"
            )
        for agent, action in enumerate(self.actions):
            if not 0 <= action < topo.num_actions:
                raise TopologyError(
                    f"Agent {agent} plays action {action}, valid range is [0, {topo.num_actions})"
                )
        return self

    def as_array(self) -> np.ndarray:
        return np.asarray(self.actions, dtype=np.int64)

    def to_json(self) -> str:
        return json.dumps(list(self.actions))

    @classmethod
    def from_json(cls, text: str) -> "JointAction":
        return cls(tuple(json.loads(text)))

    @classmethod
    def from_array(cls, values: Iterable[int]) -> "JointAction":
        return cls(tuple(int(v) for v in values))


def encode(joint: JointAction, topo: Topology) -> ArchitectureVector:
    """
    One-hot encode a joint action into an agent-major architecture vector

    Parameters
    ----------
    joint : JointAction
        Actions, one per agent
    topo : Topology
        Search space

    Returns
    -------
    np.ndarray
        Read-only int8 vector of length K·N with a single 1 per agent block
    """
    joint.validate(topo)
    bits = np.zeros(topo.dim, dtype=np.int8)
    offsets = np.arange(topo.num_agents) * topo.num_actions + joint.as_array()
    bits[offsets] = 1
    bits.flags.writeable = False
    return bits


def encode_many(actions: np.ndarray, topo: Topology) -> np.ndarray:
    """Encode an (S, N) matrix of joint actions into an (S, K·N) float design."""
    actions = np.asarray(actions, dtype=np.int64)
    if actions.ndim != 2 or actions.shape[1] != topo.num_agents:
        raise TopologyError(
            f"Expected an (S, {topo.num_agents}) action matrix, got shape {actions.shape}"
        )
    if actions.size and (actions.min() < 0 or actions.max() >= topo.num_actions):
        raise TopologyError(f"Action indices must lie in [0, {topo.num_actions})")
    rows = np.zeros((actions.shape[0], topo.dim), dtype=np.float64)
    offsets = np.arange(topo.num_agents) * topo.num_actions + actions
    np.put_along_axis(rows, offsets, 1.0, axis=1)
    return rows


def decode(vec: ArchitectureVector, topo: Topology) -> JointAction:
    """
    Recover the joint action of an architecture vector

    Raises
    ------
    TopologyError
        Vector length differs from K·N
    FeasibilityError
        A block holds zero or several ones, or a non-binary entry
    """
    bits = np.asarray(vec)
    if bits.ndim != 1 or bits.shape[0] != topo.dim:
        raise TopologyError(f"Architecture vector must have length {topo.dim}, got shape {bits.shape}")
    if not np.all((bits == 0) | (bits == 1)):
        raise FeasibilityError("Architecture vector must be binary")
    blocks = bits.reshape(topo.num_agents, topo.num_actions)
    counts = blocks.sum(axis=1)
    bad = np.flatnonzero(counts != 1)
    if bad.size:
        agent = int(bad[0])
        raise FeasibilityError(
            f"Agent {agent} block has {int(counts[agent])} active operations, expected exactly 1"
        )
    return JointAction.from_array(np.argmax(blocks, axis=1))


def check_loss(value: float, bounded: bool = False) -> float:
    """Return ``value`` as float after checking finiteness (and [0, 1] when ``bounded``)."""
    loss = float(value)
    if not math.isfinite(loss):
        raise LossValueError(f"Loss must be finite, got {value!r}")
    if bounded and not 0.0 <= loss <= 1.0:
        raise LossValueError(f"Loss {loss} outside [0, 1] while bounded losses are required")
    return loss


# Largest joint-action space any exhaustive scan is allowed to enumerate.
MAX_ENUMERATION = 10 ** 6


def all_joint_actions(topo: Topology, limit: int = MAX_ENUMERATION) -> np.ndarray:
    """
    Every joint action as rows of a (K**N, N) matrix, in lexicographic order
    (agent 0 most significant).

    Raises
    ------
    SearchSpaceTooLargeError
        K**N exceeds ``limit``
    """
    if topo.space_size > limit:
        raise SearchSpaceTooLargeError(
            f"Joint action space has {topo.space_size} architectures (limit {limit}); "
            "use the environment-specific oracle instead"
        )
    grids = np.indices((topo.num_actions,) * topo.num_agents)
    return grids.reshape(topo.num_agents, -1).T.astype(np.int64)
