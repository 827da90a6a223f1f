# -*- coding: utf-8 -*-
"""
Data Loading Module

Reads and writes the JSON files consumed by the environments: tabular
architecture benchmarks and beta schedules for linear adversaries.
"""

import json
import logging
from pathlib import Path
from typing import List, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .core import MAX_ENUMERATION, SearchSpaceTooLargeError, Topology, all_joint_actions
from .environment import LinearEnvConfig, TabularBenchmark, TabularEntry

logger = logging.getLogger(__name__)


class SegmentSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    start: int = Field(..., ge=1, description="1-based first round of the segment")
    beta: List[float]


class BetaScheduleSection(BaseModel):
    """Beta schedule as written in configs and benchmark containers."""

    model_config = ConfigDict(extra="forbid")

    kind: Literal["stationary", "piecewise", "random_walk"] = "stationary"
    beta: Optional[List[float]] = None
    segments: Optional[List[SegmentSection]] = None
    step_size: float = Field(0.0, ge=0.0)
    walk_seed: int = Field(0, ge=0)

    @model_validator(mode="after")
    def _check_kind_fields(self):
        if self.kind == "piecewise":
            if not self.segments:
                raise ValueError("piecewise schedule needs 'segments'")
            if self.beta is not None:
                raise ValueError("piecewise schedule takes 'segments', not 'beta'")
        else:
            if self.beta is None:
                raise ValueError(f"{self.kind} schedule needs 'beta'")
            if self.segments is not None:
                raise ValueError(f"{self.kind} schedule does not take 'segments'")
        return self

    def to_env_config(self, noise_std: float = 0.0) -> LinearEnvConfig:
        if self.kind == "piecewise":
            return LinearEnvConfig.piecewise_beta([(s.start, s.beta) for s in self.segments], noise_std)
        if self.kind == "random_walk":
            return LinearEnvConfig.random_walk_beta(self.beta, self.step_size, self.walk_seed, noise_std)
        return LinearEnvConfig.stationary_beta(self.beta, noise_std)

    @property
    def dim(self) -> int:
        return len(self.segments[0].beta) if self.kind == "piecewise" else len(self.beta)


class BenchmarkEntrySection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    actions: List[int]
    loss_mean: float
    loss_std: Optional[float] = Field(None, ge=0.0)


class BenchmarkFile(BaseModel):
    """Container file: topology header, optional entries and beta schedule."""

    model_config = ConfigDict(extra="forbid")

    num_agents: int = Field(..., ge=1)
    num_actions: int = Field(..., ge=1)
    entries: List[BenchmarkEntrySection] = Field(default_factory=list)
    beta_schedule: Optional[BetaScheduleSection] = None


class BenchmarkLoader:
    """Tabular benchmark and beta schedule file loader"""

    def __init__(self, data_path: Union[str, Path] = "."):
        self.data_path = Path(data_path)

    def _resolve(self, filename: Union[str, Path]) -> Path:
        path = Path(filename)
        return path if path.is_absolute() else self.data_path / path

    def read_container(self, filename: Union[str, Path]) -> BenchmarkFile:
        """
        Parse and validate a benchmark container

        Parameters
        ----------
        filename : str or Path
            JSON file, relative to ``data_path`` unless absolute

        Returns
        -------
        BenchmarkFile
            Validated container; unknown fields are rejected
        """
        path = self._resolve(filename)
        try:
            with open(path, "r", encoding="utf-8") as fh:
                payload = json.load(fh)
            return BenchmarkFile.model_validate(payload)
        except Exception as e:
            logger.error(f"Failed to load benchmark container {path}: {e}")
            raise

    def load_benchmark(self, filename: Union[str, Path]) -> TabularBenchmark:
        """Load a tabular benchmark; duplicate action vectors are rejected."""
        container = self.read_container(filename)
        topo = Topology(container.num_agents, container.num_actions)
        entries = {}
        for entry in container.entries:
            key = tuple(entry.actions)
            if key in entries:
                raise ValueError(f"Duplicate benchmark entry for architecture {list(key)}")
            entries[key] = TabularEntry(entry.loss_mean, entry.loss_std)
        bench = TabularBenchmark(topo, entries)
        logger.info(
            f"Loaded tabular benchmark with {len(bench)} of {topo.space_size} architectures "
            f"from {self._resolve(filename)}"
        )
        return bench

    def load_beta_schedule(self, filename: Union[str, Path], noise_std: float = 0.0) -> LinearEnvConfig:
        """Beta schedule stored under ``beta_schedule`` in a benchmark container."""
        container = self.read_container(filename)
        if container.beta_schedule is None:
            raise ValueError(f"{self._resolve(filename)} has no 'beta_schedule'")
        cfg = container.beta_schedule.to_env_config(noise_std)
        return cfg.validate(Topology(container.num_agents, container.num_actions))

    def save_benchmark(self, bench: TabularBenchmark, filename: Union[str, Path]) -> Path:
        """Write ``bench`` with entries in lexicographic order (byte-stable output)."""
        path = self._resolve(filename)
        entries = []
        for actions in sorted(bench.entries):
            entry = bench.entries[actions]
            record = {"actions": list(actions), "loss_mean": entry.mean}
            if entry.std is not None:
                record["loss_std"] = entry.std
            entries.append(record)
        payload = {
            "num_agents": bench.topology.num_agents,
            "num_actions": bench.topology.num_actions,
            "entries": entries,
        }
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(json.dumps(payload, indent=2))
            fh.write("\n")
        logger.info(f"Benchmark with {len(entries)} entries saved to: {path}")
        return path


GENERATORS = ("random-uniform", "planted-optimum")


def _sample_joint_actions(topo: Topology, samples: int, rng: np.random.Generator) -> np.ndarray:
    if samples >= topo.space_size:
        return all_joint_actions(topo)
    drawn = np.unique(rng.integers(topo.num_actions, size=(samples, topo.num_agents)), axis=0)
    # Top up after duplicates until the requested count is reached.
    while drawn.shape[0] < samples:
        extra = rng.integers(topo.num_actions, size=(samples - drawn.shape[0], topo.num_agents))
        drawn = np.unique(np.vstack([drawn, extra]), axis=0)
    return drawn


def generate_benchmark(topo: Topology, generator: str = "random-uniform", seed: int = 0,
                       gap: float = 0.2, samples: Optional[int] = None,
                       loss_std: Optional[float] = None) -> TabularBenchmark:
    """
    Synthetic tabular benchmark

    Parameters
    ----------
    topo : Topology
        Agents and actions of the search space
    generator : str
        ``random-uniform`` draws every loss from U(0, 1). ``planted-optimum``
        gives one random architecture loss 0 and every other a loss in
        [gap, 1], the smallest of them exactly ``gap``.
    seed : int
        Seed of the generator; equal seeds give equal benchmarks
    gap : float
        Loss gap of the planted optimum, in (0, 1)
    samples : int, optional
        Number of architectures to tabulate; the whole space when omitted
    loss_std : float, optional
        Standard deviation stored with every entry

    Raises
    ------
    SearchSpaceTooLargeError
        Exhaustive generation requested for more than 10**6 architectures
    """
    if generator not in GENERATORS:
        raise ValueError(f"Unknown generator {generator!r}, expected one of {GENERATORS}")
    if samples is None and topo.space_size > MAX_ENUMERATION:
        raise SearchSpaceTooLargeError(
            f"{topo.space_size} architectures exceed {MAX_ENUMERATION}; pass a sample count"
        )
    if generator == "planted-optimum" and not 0.0 < gap < 1.0:
        raise ValueError(f"Planted gap must lie in (0, 1), got {gap}")

    rng = np.random.default_rng(seed)
    actions = all_joint_actions(topo) if samples is None else _sample_joint_actions(topo, samples, rng)
    losses = rng.random(actions.shape[0])
    if generator == "planted-optimum":
        optimum = rng.integers(topo.num_actions, size=topo.num_agents)
        hit = np.flatnonzero((actions == optimum).all(axis=1))
        if hit.size == 0:
            actions = np.vstack([actions, optimum])
            losses = np.append(losses, 0.0)
            best = actions.shape[0] - 1
        else:
            best = int(hit[0])
        losses = gap + (1.0 - gap) * losses
        others = np.arange(actions.shape[0]) != best
        if others.any():
            losses[np.flatnonzero(others)[np.argmin(losses[others])]] = gap
        losses[best] = 0.0
    entries = {tuple(int(a) for a in row): TabularEntry(float(loss), loss_std)
               for row, loss in zip(actions, losses)}
    logger.info(f"Generated {generator} benchmark with {len(entries)} architectures (seed {seed})")
    return TabularBenchmark(topo, entries)
