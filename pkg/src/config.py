# -*- coding: utf-8 -*-
"""
Experiment Configuration Module

JSON experiment files validated with pydantic. A document is a JSON object
whose nested objects are the sections below; unknown keys are rejected.

Example
-------
{
  "topology": {"num_agents": 2, "num_actions": 2},
  "algorithm": "manas",
  "horizon": 5000,
  "environment": {
    "kind": "linear",
    "beta_schedule": {"kind": "stationary", "beta": [0.1, 0.9, 0.2, 0.8]}
  },
  "seed": 0
}
"""

import json
import logging
from pathlib import Path
from typing import Annotated, Any, Dict, List, Literal, Optional, Sequence, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .core import Topology
from .data_loader import BenchmarkLoader, BetaScheduleSection
from .environment import (
    GaussianSqueezeEnvironment,
    GsdConfig,
    LinearEnvironment,
    LossEnvironment,
    TabularEnvironment,
)
from .policy import ManasHyperparams, LsSchedule, manas_defaults

logger = logging.getLogger(__name__)

ALGORITHMS = ("manas", "manas_ls", "manas_comband", "random_search")


class ConfigError(ValueError):
    """Configuration file cannot be read, parsed or overridden."""


class TopologySection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    num_agents: Optional[int] = Field(None, ge=1)
    num_cells: Optional[int] = Field(None, ge=1, description="14 agents per cell")
    num_actions: int = Field(..., ge=1)
    labels: Optional[List[str]] = None

    @model_validator(mode="after")
    def _agents_or_cells(self):
        if (self.num_agents is None) == (self.num_cells is None):
            raise ValueError("give exactly one of 'num_agents' and 'num_cells'")
        if self.labels is not None and len(self.labels) != self.num_actions:
            raise ValueError(f"'labels' needs {self.num_actions} names, got {len(self.labels)}")
        return self

    def build(self) -> Topology:
        labels = tuple(self.labels) if self.labels is not None else None
        if self.num_cells is not None:
            return Topology.from_cells(self.num_cells, self.num_actions, labels)
        return Topology(self.num_agents, self.num_actions, labels)


class ManasSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    eta: Optional[float] = Field(None, ge=0.0)
    gamma: Optional[float] = Field(None, ge=0.0, le=1.0)


class ManasLsSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    solve_period: Optional[int] = Field(None, ge=1, description="rounds between refits, default K·N")
    min_samples: Optional[int] = Field(None, ge=1, description="default K·N")
    window: Optional[int] = Field(None, ge=1, description="sliding window, default 4·K·N")
    full_history: bool = False


class GsdSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["gsd"]
    mu: float = 1.0
    sigma: float = Field(10.0, gt=0.0)
    contributions: Optional[List[float]] = None


class LinearSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["linear"]
    beta_schedule: Union[BetaScheduleSection, str] = Field(
        ..., description="inline schedule, or path of a container file holding 'beta_schedule'"
    )
    noise_std: float = Field(0.0, ge=0.0)


class TabularSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["tabular"]
    path: str
    noisy: bool = False


EnvironmentSection = Annotated[
    Union[GsdSection, LinearSection, TabularSection], Field(discriminator="kind")
]


class ExperimentConfig(BaseModel):
    """Validated experiment: topology, algorithm, hyperparameters, environment, horizon, seed."""

    model_config = ConfigDict(extra="forbid")

    topology: TopologySection
    algorithm: Literal["manas", "manas_ls", "manas_comband", "random_search"]
    horizon: int = Field(..., ge=1)
    environment: EnvironmentSection
    manas: ManasSection = Field(default_factory=ManasSection)
    manas_ls: ManasLsSection = Field(default_factory=ManasLsSection)
    seed: int = Field(0, ge=0, lt=2 ** 64)
    repeats: int = Field(8, ge=1)
    recommend_mode: Literal["argmin", "sample"] = "argmin"
    snapshot_interval: int = Field(0, ge=0, description="rounds between policy snapshots, 0 disables")
    bounded_losses: bool = False
    parallel: bool = False
    processes: Optional[int] = Field(None, ge=1)

    @model_validator(mode="after")
    def _check_dimensions(self):
        topo = self.topology.build()
        env = self.environment
        if isinstance(env, LinearSection) and isinstance(env.beta_schedule, BetaScheduleSection):
            if env.beta_schedule.dim != topo.dim:
                raise ValueError(
                    f"beta vectors have length {env.beta_schedule.dim}, topology needs K·N = {topo.dim}"
                )
        if isinstance(env, GsdSection) and env.contributions is not None:
            if len(env.contributions) != topo.num_actions:
                raise ValueError(
                    f"'contributions' needs {topo.num_actions} values, got {len(env.contributions)}"
                )
        self.ls_schedule()
        return self

    def build_topology(self) -> Topology:
        return self.topology.build()

    def hyperparams(self) -> ManasHyperparams:
        """MANAS eta / gamma: configured values, defaults from the horizon otherwise."""
        topo = self.build_topology()
        defaults = manas_defaults(topo, self.horizon)
        eta = defaults.eta if self.manas.eta is None else self.manas.eta
        gamma = defaults.gamma if self.manas.gamma is None else self.manas.gamma
        return ManasHyperparams(eta=eta, gamma=gamma, horizon_n=self.horizon,
                                degenerate=defaults.degenerate)

    def ls_schedule(self) -> LsSchedule:
        dim = self.build_topology().dim
        section = self.manas_ls
        return LsSchedule(
            solve_period=section.solve_period or dim,
            min_samples=section.min_samples or dim,
            window=None if section.full_history else (section.window or 4 * dim),
        )

    def build_environment(self, base_dir: Union[str, Path, None] = None) -> LossEnvironment:
        """Instantiate the loss oracle; relative paths resolve against ``base_dir``."""
        topo = self.build_topology()
        env = self.environment
        loader = BenchmarkLoader(base_dir or ".")
        if isinstance(env, GsdSection):
            contributions = tuple(env.contributions) if env.contributions is not None else None
            return GaussianSqueezeEnvironment(topo, GsdConfig(env.mu, env.sigma, contributions))
        if isinstance(env, LinearSection):
            if isinstance(env.beta_schedule, str):
                cfg = loader.load_beta_schedule(env.beta_schedule, env.noise_std)
            else:
                cfg = env.beta_schedule.to_env_config(env.noise_std)
            return LinearEnvironment(topo, cfg, horizon=self.horizon)
        bench = loader.load_benchmark(env.path)
        if bench.topology.num_agents != topo.num_agents or bench.topology.num_actions != topo.num_actions:
            raise ValueError(
                f"Benchmark topology {bench.topology.num_agents}x{bench.topology.num_actions} "
                f"differs from configured {topo.num_agents}x{topo.num_actions}"
            )
        return TabularEnvironment(bench, noisy=env.noisy)

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return self.model_copy(update={"seed": seed})

    def resolved(self) -> Dict[str, Any]:
        """Configuration with every default made explicit, as written to resolved-config.json."""
        data = self.model_dump(mode="json")
        hp = self.hyperparams()
        ls = self.ls_schedule()
        data["manas"] = {"eta": hp.eta, "gamma": hp.gamma}
        data["manas_ls"] = {
            "solve_period": ls.solve_period,
            "min_samples": ls.min_samples,
            "window": ls.window,
            "full_history": ls.window is None,
        }
        return data


def parse_override(text: str) -> tuple:
    """Split ``a.b.c=value``; the value is parsed as JSON, falling back to a plain string."""
    if "=" not in text:
        raise ConfigError(f"Override {text!r} is not of the form key=value")
    key, raw = text.split("=", 1)
    key = key.strip()
    if not key or any(not part for part in key.split(".")):
        raise ConfigError(f"Override {text!r} has an empty key")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key, value


def apply_overrides(raw: Dict[str, Any], overrides: Sequence[str]) -> Dict[str, Any]:
    """Set dotted keys in a raw configuration document, creating sections as needed."""
    data = json.loads(json.dumps(raw))
    for text in overrides:
        key, value = parse_override(text)
        parts = key.split(".")
        node = data
        for part in parts[:-1]:
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                raise ConfigError(f"Override {key!r}: '{part}' is not a section")
            node = child
        node[parts[-1]] = value
    return data


def read_config_document(path: Union[str, Path]) -> Dict[str, Any]:
    """Raw JSON document of a configuration file (JSONDecodeError carries line/column)."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as e:
        raise ConfigError(f"Cannot read configuration {path}: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"Configuration {path} must hold a JSON object")
    return data


def load_config(path: Union[str, Path, None] = None, overrides: Sequence[str] = (),
                base: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
    """
    Read, override and validate an experiment configuration

    Parameters
    ----------
    path : str or Path, optional
        JSON configuration file
    overrides : sequence of str
        ``key=value`` assignments applied before validation
    base : dict, optional
        Document used when no file is given

    Returns
    -------
    ExperimentConfig
        Validated configuration
    """
    raw = read_config_document(path) if path is not None else dict(base or {})
    return ExperimentConfig.model_validate(apply_overrides(raw, overrides))


def format_validation_error(err: ValidationError) -> List[str]:
    """One ``field.path: message`` line per pydantic error."""
    lines = []
    for item in err.errors():
        location = ".".join(str(part) for part in item["loc"]) or "<root>"
        lines.append(f"{location}: {item['msg']}")
    return lines
