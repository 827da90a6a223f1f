# -*- coding: utf-8 -*-
"""
Command-line front end

    manas-sim run --config configs/linear_small.json --out results/linear
    manas-sim gsd --out results/gsd
    manas-sim sweep --config configs/linear_small.json --grid manas.eta=0.01,0.1 --out results/sweep
    manas-sim gen-tabular --num-agents 2 --num-actions 3 --generator planted-optimum --out bench.json
    manas-sim validate-config --config configs/gsd_small.json

Exit codes: 0 success, 1 runtime failure, 2 invalid configuration.
"""

import argparse
import itertools
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import pandas as pd
from pydantic import ValidationError

from .config import ConfigError, format_validation_error, load_config
from .core import Topology
from .data_loader import GENERATORS, BenchmarkLoader, generate_benchmark
from .environment import GsdConfig
from .reporting import ReportWriter, write_run_artifacts
from .runner import ExperimentRunner

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2

GSD_FIGURE_NAMES = {
    "manas": "manas",
    "manas_ls": "manas_ls",
    "manas_comband": "manas_comband",
    "random_search": "random",
}


def _overrides(args) -> List[str]:
    overrides = list(args.set or [])
    if getattr(args, "seed", None) is not None:
        overrides.append(f"seed={args.seed}")
    if getattr(args, "repeats", None) is not None:
        overrides.append(f"repeats={args.repeats}")
    return overrides


def _base_dir(config_path: Optional[str]) -> Path:
    return Path(config_path).resolve().parent if config_path else Path.cwd()


def cmd_run(args) -> int:
    cfg = load_config(args.config, _overrides(args))
    runner = ExperimentRunner(base_dir=_base_dir(args.config))
    result = runner.run(cfg)
    paths = write_run_artifacts(result, args.out, trace_json=args.trace_json)
    logger.info(f"Artifacts written to {Path(args.out)}: {', '.join(p.name for p in paths.values() if p)}")
    return EXIT_OK


def gsd_document(algorithm: str, args) -> Dict[str, Any]:
    """Configuration document of one algorithm in the GSD figure experiment."""
    topo = Topology(args.num_agents, args.num_actions)
    environment: Dict[str, Any] = {"kind": "gsd", "mu": args.mu, "sigma": args.sigma}
    if not args.integer_contributions:
        scaled = GsdConfig.scaled(topo, args.start_sum, mu=args.mu, sigma=args.sigma)
        environment["contributions"] = list(scaled.contributions)
    return {
        "topology": {"num_agents": args.num_agents, "num_actions": args.num_actions},
        "algorithm": algorithm,
        "horizon": args.horizon,
        "environment": environment,
        "manas": {"eta": args.eta},
        "seed": args.seed,
        "repeats": args.repeats,
        "parallel": args.parallel,
    }


def gsd_settings(cfg) -> Dict[str, Any]:
    """Effective squeeze parameters, temperature and contribution table of one run."""
    env = cfg.environment
    contributions = tuple(env.contributions) if env.contributions is not None else None
    hp = cfg.hyperparams()
    return {
        "mu": env.mu,
        "sigma": env.sigma,
        "eta": hp.eta,
        "gamma": hp.gamma,
        "contributions": GsdConfig(env.mu, env.sigma, contributions).table(cfg.build_topology()).tolist(),
    }


def cmd_gsd(args) -> int:
    configs = {
        algorithm: load_config(None, list(args.set or []), base=gsd_document(algorithm, args))
        for algorithm in args.algorithms
    }
    runner = ExperimentRunner()
    writer = ReportWriter(args.out)
    for algorithm, cfg in configs.items():
        name = GSD_FIGURE_NAMES[algorithm]
        result = runner.run(cfg, name=name)
        writer.save_figure_data(result.summary, name)
        writer.save_json({**result.summary.to_dict(), **gsd_settings(cfg)}, f"{name}.json")
    first = next(iter(configs.values()))
    writer.save_bound(first.build_topology(), first.horizon)
    return EXIT_OK


def _parse_grid(items: Sequence[str]) -> Dict[str, List[Any]]:
    grid: Dict[str, List[Any]] = {}
    for text in items:
        if "=" not in text:
            raise ConfigError(f"Grid entry {text!r} is not of the form key=v1,v2")
        key, raw = text.split("=", 1)
        values = []
        for part in raw.split(","):
            try:
                values.append(json.loads(part))
            except json.JSONDecodeError:
                values.append(part)
        grid[key.strip()] = values
    return grid


def cmd_sweep(args) -> int:
    grid = _parse_grid(args.grid)
    keys = list(grid)
    points = list(itertools.product(*(grid[k] for k in keys)))
    configs = []
    for values in points:
        assignments = [f"{k}={json.dumps(v)}" for k, v in zip(keys, values)]
        configs.append(load_config(args.config, _overrides(args) + assignments))
    logger.info(f"Sweeping {len(points)} grid points over {', '.join(keys)}")

    runner = ExperimentRunner(base_dir=_base_dir(args.config))
    rows = []
    for index, (values, cfg) in enumerate(zip(points, configs)):
        point = f"point-{index:03d}"
        result = runner.run(cfg, name=point)
        write_run_artifacts(result, Path(args.out) / point)
        row: Dict[str, Any] = {"point": point}
        row.update({k: json.dumps(v) for k, v in zip(keys, values)})
        row["completed_runs"] = len(result.runs)
        if result.summary is not None:
            stats = result.summary.to_dict()
            for field in ("cumulative_regret_mean", "cumulative_regret_std",
                          "simple_regret_mean", "simple_regret_std"):
                row[field] = stats[field]
        rows.append(row)
    ReportWriter(args.out).save_frame(pd.DataFrame(rows), "summary.csv")
    return EXIT_OK


def cmd_gen_tabular(args) -> int:
    topo = Topology(args.num_agents, args.num_actions)
    bench = generate_benchmark(topo, args.generator, seed=args.seed, gap=args.gap,
                               samples=args.samples, loss_std=args.loss_std)
    BenchmarkLoader().save_benchmark(bench, args.out)
    return EXIT_OK


def cmd_validate_config(args) -> int:
    cfg = load_config(args.config, _overrides(args))
    print(json.dumps(cfg.resolved(), indent=2))
    topo = cfg.build_topology()
    logger.info(
        f"Configuration valid: {cfg.algorithm} on {topo.num_agents} agents x {topo.num_actions} actions "
        f"(10^{topo.log10_space_size():.1f} architectures), {cfg.horizon} rounds"
    )
    return EXIT_OK


def _add_config_arguments(parser: argparse.ArgumentParser):
    parser.add_argument("--config", required=True, help="JSON experiment configuration")
    parser.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override a dotted configuration key (repeatable)")
    parser.add_argument("--seed", type=int, default=None, help="override the base seed")
    parser.add_argument("--repeats", type=int, default=None, help="override the number of repeats")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="manas-sim",
        description="Multi-agent adversarial bandit architecture search simulator",
    )
    parser.add_argument("--quiet", action="store_true", help="only log warnings and errors")
    subparsers = parser.add_subparsers(dest="command", required=True)

    run = subparsers.add_parser("run", help="run a configured experiment")
    _add_config_arguments(run)
    run.add_argument("--out", default="results", help="output directory")
    run.add_argument("--trace-json", action="store_true", help="also write trace.json")
    run.set_defaults(handler=cmd_run)

    gsd = subparsers.add_parser("gsd", help="Gaussian Squeeze figure data")
    gsd.add_argument("--num-agents", type=int, default=100)
    gsd.add_argument("--num-actions", type=int, default=10)
    gsd.add_argument("--mu", type=float, default=1.0)
    gsd.add_argument("--sigma", type=float, default=10.0)
    gsd.add_argument("--horizon", type=int, default=5000)
    gsd.add_argument("--repeats", type=int, default=8)
    gsd.add_argument("--seed", type=int, default=0)
    gsd.add_argument("--eta", type=float, default=0.1, help="MANAS softmax temperature coefficient")
    gsd.add_argument("--start-sum", type=float, default=11.0,
                     help="expected sum of contributions under uniform play")
    gsd.add_argument("--integer-contributions", action="store_true",
                     help="action k contributes k instead of the scaled table")
    gsd.add_argument("--algorithms", nargs="+", default=["manas", "manas_ls", "random_search"],
                     choices=list(GSD_FIGURE_NAMES))
    gsd.add_argument("--parallel", action="store_true", help="run repeats in a process pool")
    gsd.add_argument("--set", action="append", metavar="KEY=VALUE")
    gsd.add_argument("--out", default="results/gsd")
    gsd.set_defaults(handler=cmd_gsd)

    sweep = subparsers.add_parser("sweep", help="cartesian grid over configuration keys")
    _add_config_arguments(sweep)
    sweep.add_argument("--grid", action="append", required=True, metavar="KEY=V1,V2")
    sweep.add_argument("--out", default="results/sweep")
    sweep.set_defaults(handler=cmd_sweep)

    gen = subparsers.add_parser("gen-tabular", help="write a synthetic tabular benchmark")
    gen.add_argument("--num-agents", type=int, required=True)
    gen.add_argument("--num-actions", type=int, required=True)
    gen.add_argument("--generator", choices=GENERATORS, default="random-uniform")
    gen.add_argument("--gap", type=float, default=0.2, help="loss gap of the planted optimum")
    gen.add_argument("--samples", type=int, default=None, help="tabulate a random subset")
    gen.add_argument("--loss-std", type=float, default=None)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True, help="benchmark JSON file")
    gen.set_defaults(handler=cmd_gen_tabular)

    validate = subparsers.add_parser("validate-config", help="validate and print the resolved configuration")
    _add_config_arguments(validate)
    validate.set_defaults(handler=cmd_validate_config)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.handler(args)
    except json.JSONDecodeError as e:
        logger.error(f"Invalid JSON at line {e.lineno}, column {e.colno}: {e.msg}")
        return EXIT_CONFIG
    except ValidationError as e:
        for line in format_validation_error(e):
            logger.error(f"Invalid configuration: {line}")
        return EXIT_CONFIG
    except ConfigError as e:
        logger.error(str(e))
        return EXIT_CONFIG
    except Exception as e:
        logger.error(f"{args.command} failed: {type(e).__name__}: {e}")
        logger.debug("Traceback", exc_info=True)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
