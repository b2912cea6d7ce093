#!/usr/bin/env python3

import argparse
import logging
import sys
from typing import Optional

import pandas as pd
import toml
from tqdm.auto import tqdm
from tqdm.contrib.logging import logging_redirect_tqdm

from fedcache.cache import CachePolicy
from fedcache.compare_logic import (
    StrategyComparer,
    recommendations_frame,
    strategy_dataset,
    summarize_cells,
)
from fedcache.config import build_experiment_config, load_config_file, merge_settings, sweep_settings
from fedcache.engine import ExperimentResult, run_experiment
from fedcache.errors import ConfigError, FedCacheError
from fedcache.fedavg_reference import run_plain_fedavg
from fedcache.metrics import reduction_vs_baseline
from fedcache.save_data import REPORT_FORMATS, EXTENSIONS, emit_report, load_report, write_frame
from fedcache.sweep_logic import Objective, SweepSpec, run_sweep

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG_ERROR = 1
EXIT_RUNTIME_FAILURE = 2


class CliArgumentParser(argparse.ArgumentParser):
    """argparse exits with 2 on bad arguments; here a bad argument is a config error."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG_ERROR, f"{self.prog}: error: {message}\n")


def _float_list(text: str) -> list[float]:
    return [float(item) for item in text.split(",") if item.strip()]


def _int_list(text: str) -> list[int]:
    return [int(item) for item in text.split(",") if item.strip()]


def _str_list(text: str) -> list[str]:
    return [item.strip() for item in text.split(",") if item.strip()]


def _add_common_arguments(parser: argparse.ArgumentParser):
    parser.add_argument("--config", type=str, default=None, help="Path to a flat TOML config file")
    parser.add_argument("--seed", type=int, default=None, help="Unsigned 64-bit seed of the run")
    parser.add_argument("--out", type=str, default=None, help="Where the report / metrics file is written")
    parser.add_argument(
        "--format", type=str, choices=list(REPORT_FORMATS), default="csv", help="Report format: csv, json or excel"
    )
    parser.add_argument("--workers", type=int, default=None, help="Parallel worker processes (sweep only)")
    parser.add_argument("--tau", type=float, default=None, help="Significance threshold (fraction, e.g. 0.10)")
    parser.add_argument("--capacity", type=int, default=None, help="Cache capacity in entries")
    parser.add_argument("--policy", type=str, default=None, help="Cache policy: NONE, FIFO, LRU or PBR")
    parser.add_argument("--rounds", type=int, default=None, help="Number of training rounds T")
    parser.add_argument("--clients", type=int, default=None, help="Federation size N")
    parser.add_argument("--clients-per-round", type=int, default=None, help="Clients selected per round")
    parser.add_argument("--verbose", action="store_true", help="Log per-round detail")
    parser.add_argument("--quiet", action="store_true", help="Only log warnings and errors")


def build_parser() -> argparse.ArgumentParser:
    parser = CliArgumentParser(
        prog="fedcache", description="Simulate federated learning with significance gating and a server-side update cache."
    )
    subparsers = parser.add_subparsers(dest="command", required=True, parser_class=CliArgumentParser)

    run = subparsers.add_parser("run", help="Run a single experiment")
    _add_common_arguments(run)
    run.add_argument("--round-log", type=str, default=None, help="Write the per-round log (CSV) to this path")
    run.add_argument(
        "--compare-baseline", action="store_true", help="Also run tau=0/NONE with the same seed and compare"
    )

    baseline = subparsers.add_parser("baseline", help="Run the plain FedAvg reference")
    _add_common_arguments(baseline)
    baseline.add_argument("--round-log", type=str, default=None, help="Write the per-round log (CSV) to this path")

    sweep = subparsers.add_parser("sweep", help="Run a (tau, capacity, policy, seed) grid")
    _add_common_arguments(sweep)
    sweep.add_argument("--tau-grid", type=_float_list, default=None, help="Comma separated thresholds")
    sweep.add_argument("--capacity-grid", type=_int_list, default=None, help="Comma separated capacities")
    sweep.add_argument("--policy-grid", type=_str_list, default=None, help="Comma separated policies")
    sweep.add_argument("--repeats", type=int, default=None, help="Seeds per cell (seed, seed+1, ...)")
    sweep.add_argument(
        "--strategy-dataset", type=str, default=None, help="Write the per-cell strategy feature table (CSV)"
    )
    _add_objective_arguments(sweep)

    recommend = subparsers.add_parser("recommend", help="Recommend a caching policy from an existing report")
    recommend.add_argument("--report", type=str, required=True, help="Report written by the sweep subcommand")
    recommend.add_argument("--config", type=str, default=None, help="Path to a flat TOML config file")
    recommend.add_argument("--tau", type=float, default=None, help="Only this threshold")
    recommend.add_argument("--capacity", type=int, default=None, help="Only this capacity")
    recommend.add_argument("--out", type=str, default=None, help="Write the recommendations table here")
    recommend.add_argument("--format", type=str, choices=list(REPORT_FORMATS), default="csv")
    recommend.add_argument("--summary", type=str, default=None, help="Write per-policy seed statistics (CSV)")
    recommend.add_argument("--verbose", action="store_true")
    recommend.add_argument("--quiet", action="store_true")
    _add_objective_arguments(recommend)
    return parser


def _add_objective_arguments(parser: argparse.ArgumentParser):
    parser.add_argument(
        "--objective",
        type=str,
        choices=[objective.value for objective in Objective],
        default=None,
        help="Selection objective for recommendations",
    )
    parser.add_argument("--accuracy-floor", type=float, default=None, help="Minimum mean final accuracy")
    parser.add_argument("--comm-budget", type=int, default=None, help="Maximum mean communication in bytes")


def _settings(args) -> dict:
    file_values = load_config_file(args.config) if args.config else {}
    overrides = {
        "seed": getattr(args, "seed", None),
        "tau": getattr(args, "tau", None),
        "cache_capacity": getattr(args, "capacity", None),
        "policy": getattr(args, "policy", None),
        "rounds": getattr(args, "rounds", None),
        "n_clients": getattr(args, "clients", None),
        "clients_per_round": getattr(args, "clients_per_round", None),
        "workers": getattr(args, "workers", None),
        "tau_grid": getattr(args, "tau_grid", None),
        "capacity_grid": getattr(args, "capacity_grid", None),
        "policy_grid": getattr(args, "policy_grid", None),
        "repeats": getattr(args, "repeats", None),
        "objective": getattr(args, "objective", None),
        "accuracy_floor": getattr(args, "accuracy_floor", None),
        "comm_budget_bytes": getattr(args, "comm_budget", None),
    }
    settings = merge_settings(file_values, overrides)
    # --clients alone shrinks/grows the federation; keep full participation unless told otherwise.
    if "n_clients" in settings and "clients_per_round" not in settings:
        settings["clients_per_round"] = settings["n_clients"]
    return settings


def _default_out(args, stem: str) -> str:
    return args.out if args.out else f"./fedcache_output/{stem}{EXTENSIONS[args.format]}"


def _write_run_outputs(args, result: ExperimentResult, stem: str):
    summary = {
        "policy": CachePolicy.parse(result.config.policy).value,
        "tau": result.config.tau,
        "capacity": result.config.cache_capacity,
        "seed": result.config.seed,
        "rounds": result.config.rounds,
        **result.metrics.as_row(),
        "cache_hits_total": result.metrics.cache_hits_total,
        "transmissions_total": result.metrics.transmissions_total,
        "skips_total": result.metrics.skips_total,
        "mem_limit_exceeded_rounds": result.metrics.mem_limit_exceeded_rounds,
    }
    write_frame(pd.DataFrame([summary]), _default_out(args, stem), args.format)
    if args.round_log:
        write_frame(result.round_log(), args.round_log, "csv")
    tqdm.write(
        f"{summary['policy']}: comm {result.metrics.comm_cost_bytes} bytes, "
        f"cache hits {result.metrics.cache_hits_total}, peak cache memory {result.metrics.peak_mem_bytes} bytes, "
        f"final accuracy {result.metrics.final_accuracy:.4f}"
    )


def command_run(args) -> int:
    config = build_experiment_config(_settings(args))
    result = run_experiment(config, progress=True)
    _write_run_outputs(args, result, "run_metrics")

    if args.compare_baseline:
        baseline = run_experiment(config.with_overrides(tau=0.0, policy=CachePolicy.NONE), progress=True)
        if baseline.metrics.comm_cost_bytes > 0:
            reduction = reduction_vs_baseline(result.metrics, baseline.metrics)
            tqdm.write(f"Communication reduction vs no-cache baseline: {reduction:.2%}")
        accuracy_delta = result.metrics.final_accuracy - baseline.metrics.final_accuracy
        tqdm.write(
            f"Final accuracy: {result.metrics.final_accuracy:.4f} with cache vs "
            f"{baseline.metrics.final_accuracy:.4f} without ({accuracy_delta:+.4f})"
        )
    return EXIT_OK


def command_baseline(args) -> int:
    config = build_experiment_config(_settings(args))
    result = run_plain_fedavg(config)
    _write_run_outputs(args, result, "baseline_metrics")
    return EXIT_OK


def _sweep_spec(settings: dict) -> SweepSpec:
    config = build_experiment_config(settings)
    sweep_values = sweep_settings(settings)
    if "objective" in sweep_values:
        try:
            sweep_values["objective"] = Objective.parse(sweep_values["objective"])
        except ValueError as e:
            raise ConfigError("objective", str(e))
    return SweepSpec(base=config, **sweep_values).validate()


def command_sweep(args) -> int:
    spec = _sweep_spec(_settings(args))
    result = run_sweep(spec)
    emit_report(result.table, args.format, _default_out(args, "sweep_report"))

    if args.strategy_dataset and not result.table.empty:
        try:
            dataset = strategy_dataset(result.table, spec.base, spec.objective)
            write_frame(dataset, args.strategy_dataset, "csv")
        except FedCacheError as e:
            logger.error(f"Could not build the strategy dataset: {e}")

    for failure in result.failures:
        tqdm.write(
            f"ERROR: cell policy={failure.policy} tau={failure.tau} capacity={failure.capacity} "
            f"seed={failure.seed} failed: {failure.error}"
        )
    return EXIT_OK if result.ok else EXIT_RUNTIME_FAILURE


def command_recommend(args) -> int:
    settings = merge_settings(load_config_file(args.config) if args.config else {}, {
        "objective": args.objective,
        "accuracy_floor": args.accuracy_floor,
        "comm_budget_bytes": args.comm_budget,
    })
    values = sweep_settings(settings)
    try:
        objective = Objective.parse(values.get("objective", Objective.MIN_COMM_AT_ACCURACY_FLOOR))
    except ValueError as e:
        raise ConfigError("objective", str(e))

    table = load_report(args.report)
    comparer = StrategyComparer(table, objective, values.get("accuracy_floor"), values.get("comm_budget_bytes"))
    if args.tau is not None and args.capacity is not None:
        recommendations = [comparer.recommend(args.tau, args.capacity)]
        tqdm.write(f"Recommended policy: {recommendations[0].policy.value}")
    else:
        recommendations = [
            r
            for r in comparer.recommend_all()
            if (args.tau is None or abs(r.tau - args.tau) < 1e-12) and (args.capacity is None or r.capacity == args.capacity)
        ]

    if args.out:
        write_frame(recommendations_frame(recommendations), args.out, args.format)
    if args.summary:
        write_frame(summarize_cells(table), args.summary, "csv")
    return EXIT_OK


COMMANDS = {
    "run": command_run,
    "baseline": command_baseline,
    "sweep": command_sweep,
    "recommend": command_recommend,
}


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)

    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="%(levelname)s: %(message)s")

    with logging_redirect_tqdm():
        try:
            return COMMANDS[args.command](args)
        except (ConfigError, toml.TomlDecodeError) as e:
            logger.error(f"Configuration error: {e}")
            return EXIT_CONFIG_ERROR
        except (FedCacheError, OSError, ValueError) as e:
            logger.error(f"Run failed: {e}")
            return EXIT_RUNTIME_FAILURE


if __name__ == "__main__":
    sys.exit(main())
