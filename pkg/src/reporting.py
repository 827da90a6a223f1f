# -*- coding: utf-8 -*-
"""
Reporting Module

Writes run artifacts: per-round traces, regret curves, figure data and
JSON summaries. Every CSV is produced from a DataFrame with full float
precision, so ``read_csv`` restores the written values exactly.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np
import pandas as pd

from .config import ExperimentConfig
from .core import Topology
from .regret import RegretReport, RegretSummary, exp3_bound_curve, loss_trend
from .runner import LossTrace, RepeatResult

logger = logging.getLogger(__name__)

FIGURE_COLUMNS = ["round", "mean_regret", "std_regret"]


def read_csv(path: Union[str, Path]) -> pd.DataFrame:
    """Read an artifact CSV without losing float precision."""
    return pd.read_csv(path, float_precision="round_trip")


def bound_frame(topo: Topology, horizon: int) -> pd.DataFrame:
    return pd.DataFrame({
        "round": np.arange(1, horizon + 1),
        "bound": exp3_bound_curve(topo, horizon),
    })


class ReportWriter:
    """Artifact writer rooted at one output directory"""

    def __init__(self, out_dir: Union[str, Path]):
        """
        Initialize writer

        Parameters
        ----------
        out_dir : str or Path
            Directory receiving the artifacts, created on demand
        """
        self.out_dir = Path(out_dir)

    def _path(self, filename: str) -> Path:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        return self.out_dir / filename

    def save_frame(self, frame: pd.DataFrame, filename: str) -> Path:
        path = self._path(filename)
        frame.to_csv(path, index=False, encoding="utf-8", lineterminator="\n")
        logger.info(f"Table saved to: {path}")
        return path

    def save_json(self, payload: Any, filename: str) -> Path:
        path = self._path(filename)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(json.dumps(payload, indent=2))
            fh.write("\n")
        logger.info(f"JSON saved to: {path}")
        return path

    def save_trace(self, trace: LossTrace, filename: str = "trace.csv") -> Path:
        """Columns: round, actions (JSON array), loss, probabilities (JSON array)."""
        return self.save_frame(trace.to_frame(), filename)

    def save_trace_json(self, trace: LossTrace, filename: str = "trace.json") -> Path:
        return self.save_json(trace.to_dict(), filename)

    def save_regret(self, report: RegretReport, filename: str = "regret.csv") -> Path:
        """Columns: round, loss, instantaneous_regret, cumulative_regret, bound."""
        return self.save_frame(report.to_frame(), filename)

    def save_resolved_config(self, cfg: ExperimentConfig, filename: str = "resolved-config.json") -> Path:
        return self.save_json(cfg.resolved(), filename)

    def save_report(self, result: RepeatResult, filename: str = "report.json") -> Path:
        """Aggregated outcome of every repeat, best-of-R run and diagnostics."""
        return self.save_json(report_payload(result), filename)

    def save_figure_data(self, summary: RegretSummary, name: str) -> Path:
        """Mean and spread of cumulative regret over repeats, one row per round."""
        return self.save_frame(summary.to_frame()[FIGURE_COLUMNS], f"{name}.csv")

    def save_bound(self, topo: Topology, horizon: int, filename: str = "bound.csv") -> Path:
        return self.save_frame(bound_frame(topo, horizon), filename)


def report_payload(result: RepeatResult) -> Dict[str, Any]:
    cfg = result.config
    topo = cfg.build_topology()
    best = result.best
    slope, stderr = loss_trend(best.trace.losses)
    payload: Dict[str, Any] = {
        "algorithm": cfg.algorithm,
        "num_agents": topo.num_agents,
        "num_actions": topo.num_actions,
        "horizon": cfg.horizon,
        "seed": cfg.seed,
        "completed_runs": len(result.runs),
        "failures": result.failures,
        "best_run_seed": best.seed,
        "recommendation": list(best.recommendation.actions),
        "loss_trend": {"slope": slope, "stderr": stderr},
    }
    if result.summary is not None:
        payload["regret"] = result.summary.to_dict()
    else:
        payload["regret"] = None
        payload["runs"] = [
            {"seed": run.seed, "recommendation": list(run.recommendation.actions),
             "min_observed_loss": float(run.trace.losses.min())}
            for run in result.runs
        ]
    return payload


def write_run_artifacts(result: RepeatResult, out_dir: Union[str, Path],
                        trace_json: bool = False) -> Dict[str, Optional[Path]]:
    """
    Write trace.csv, regret.csv, report.json and resolved-config.json

    The trace and regret curve are those of the first completed run (the
    configured seed unless it failed); repeats add regret_summary.csv.
    """
    writer = ReportWriter(out_dir)
    first = result.runs[0]
    paths: Dict[str, Optional[Path]] = {
        "trace": writer.save_trace(first.trace),
        "regret": None,
        "report": writer.save_report(result),
        "config": writer.save_resolved_config(result.config),
    }
    if first.report is not None:
        paths["regret"] = writer.save_regret(first.report)
    else:
        logger.warning("Environment has no hindsight oracle; regret.csv not written")
    if result.summary is not None and result.summary.repeats > 1:
        paths["regret_summary"] = writer.save_frame(result.summary.to_frame(), "regret_summary.csv")
    if trace_json:
        paths["trace_json"] = writer.save_trace_json(first.trace)
    return paths
