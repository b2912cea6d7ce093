"""
Configuration layer: built-in defaults, then a flat TOML file, then command-line overrides.

Example file::

    n_clients = 10
    tau = 0.10
    policy = "PBR"
    gamma = 0.5
    task = "logistic-binary"
    dim = 20
    tau_grid = [0.01, 0.10, 0.30]
"""

from __future__ import annotations

import logging
from dataclasses import fields, replace
from pathlib import Path
from typing import Any, Optional

import toml

from fedcache.cache import CachePolicy, PriorityConfig
from fedcache.engine import ExperimentConfig
from fedcache.errors import ConfigError
from fedcache.workloads import Task, WorkloadSpec

logger = logging.getLogger(__name__)

EXPERIMENT_KEYS = {f.name for f in fields(ExperimentConfig)} - {"priority_config", "workload"}
PRIORITY_KEYS = {f.name for f in fields(PriorityConfig)}
WORKLOAD_KEYS = {f.name for f in fields(WorkloadSpec)}
SWEEP_KEYS = {
    "tau_grid",
    "capacity_grid",
    "policy_grid",
    "repeats",
    "objective",
    "accuracy_floor",
    "comm_budget_bytes",
    "workers",
}
KNOWN_KEYS = EXPERIMENT_KEYS | PRIORITY_KEYS | WORKLOAD_KEYS | SWEEP_KEYS

INT_KEYS = {
    "n_clients",
    "clients_per_round",
    "cache_capacity",
    "rounds",
    "seed",
    "mem_limit_bytes",
    "dim",
    "classes",
    "local_epochs",
    "batch_size",
    "repeats",
    "workers",
    "comm_budget_bytes",
}
FLOAT_KEYS = {
    "tau",
    "alpha",
    "beta",
    "gamma",
    "heterogeneity",
    "learning_rate",
    "noise_std",
    "holdout_fraction",
    "accuracy_floor",
}


def load_config_file(path: str | Path) -> dict[str, Any]:
    """Read a flat TOML file; unknown keys are rejected with the key name."""
    path = Path(path)
    if not path.exists():
        raise ConfigError("config", f"file '{path}' does not exist")
    try:
        values = toml.load(path)
    except toml.TomlDecodeError as e:
        raise ConfigError("config", f"could not parse '{path}': {e}")

    for key, value in values.items():
        if key not in KNOWN_KEYS:
            raise ConfigError(key, f"unknown key in '{path}'")
        if isinstance(value, dict):
            raise ConfigError(key, "tables are not supported, use flat keys")
    logger.info(f"Loaded {len(values)} settings from {path}")
    return values


def _coerce(key: str, value: Any) -> Any:
    try:
        if key in INT_KEYS:
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(f"{value} is not an integer")
            return int(value)
        if key in FLOAT_KEYS:
            return float(value)
        if key == "policy":
            return CachePolicy.parse(value)
        if key == "task":
            return Task.parse(value)
        if key == "samples_per_client":
            return int(value) if isinstance(value, (int, float)) else tuple(int(v) for v in value)
    except (TypeError, ValueError) as e:
        raise ConfigError(key, str(e))
    return value


def merge_settings(file_values: Optional[dict[str, Any]], overrides: Optional[dict[str, Any]]) -> dict[str, Any]:
    """CLI overrides win over file values; ``None`` overrides mean "not given"."""
    merged = dict(file_values or {})
    merged.update({key: value for key, value in (overrides or {}).items() if value is not None})
    return merged


def build_experiment_config(settings: dict[str, Any], base: Optional[ExperimentConfig] = None) -> ExperimentConfig:
    base = base if base is not None else ExperimentConfig()
    experiment, priority, workload = {}, {}, {}
    for key, value in settings.items():
        if key in SWEEP_KEYS:
            continue
        if key not in KNOWN_KEYS:
            raise ConfigError(key, "unknown setting")
        value = _coerce(key, value)
        if key in PRIORITY_KEYS:
            priority[key] = value
        elif key in WORKLOAD_KEYS:
            workload[key] = value
        else:
            experiment[key] = value

    try:
        priority_config = replace(base.priority_config, **priority)
    except ValueError as e:
        raise ConfigError(next(iter(priority)), str(e))

    config = replace(
        base,
        priority_config=priority_config,
        workload=replace(base.workload, **workload),
        **experiment,
    )
    return config.validate()


def sweep_settings(settings: dict[str, Any]) -> dict[str, Any]:
    """The sweep-only keys of a merged settings dict, coerced."""
    out = {}
    for key in SWEEP_KEYS & settings.keys():
        value = settings[key]
        if key == "tau_grid":
            value = tuple(_coerce("tau", v) for v in value)
        elif key == "capacity_grid":
            value = tuple(_coerce("cache_capacity", v) for v in value)
        elif key == "policy_grid":
            value = tuple(_coerce("policy", v) for v in value)
        elif value is not None:
            value = _coerce(key, value)
        out[key] = value
    return out
