import pytest

from fedcache.cache import CachePolicy
from fedcache.config import build_experiment_config, load_config_file, merge_settings, sweep_settings
from fedcache.errors import ConfigError
from fedcache.workloads import Task


def _write(tmp_path, text):
    path = tmp_path / "experiment.toml"
    path.write_text(text)
    return path


def test_file_values_reach_every_layer(tmp_path):
    path = _write(
        tmp_path,
        'n_clients = 8\nclients_per_round = 4\npolicy = "pbr"\ngamma = 0.5\ntask = "logistic-binary"\n'
        "dim = 12\nsamples_per_client = 40\n",
    )
    config = build_experiment_config(load_config_file(path))
    assert config.n_clients == 8
    assert config.clients_per_round == 4
    assert config.policy == CachePolicy.PBR
    assert config.priority_config.gamma == 0.5
    assert config.priority_config.alpha == 0.7
    assert config.workload.task == Task.LOGISTIC_BINARY
    assert config.workload.dim == 12


def test_command_line_wins_over_file(tmp_path):
    path = _write(tmp_path, "tau = 0.3\nrounds = 20\n")
    settings = merge_settings(load_config_file(path), {"tau": 0.01, "rounds": None})
    config = build_experiment_config(settings)
    assert config.tau == 0.01
    assert config.rounds == 20


def test_defaults_apply_without_a_file():
    config = build_experiment_config({})
    assert (config.n_clients, config.clients_per_round, config.tau, config.cache_capacity) == (10, 10, 0.10, 4)
    assert config.policy == CachePolicy.LRU
    assert config.rounds == 100


def test_unknown_key_is_named(tmp_path):
    with pytest.raises(ConfigError) as error:
        load_config_file(_write(tmp_path, "cache_size = 4\n"))
    assert error.value.field == "cache_size"


def test_tables_are_rejected(tmp_path):
    with pytest.raises(ConfigError):
        load_config_file(_write(tmp_path, "[workload]\ndim = 3\n"))


def test_missing_and_malformed_files(tmp_path):
    with pytest.raises(ConfigError):
        load_config_file(tmp_path / "absent.toml")
    with pytest.raises(ConfigError):
        load_config_file(_write(tmp_path, "tau = = 3\n"))


@pytest.mark.parametrize(
    "settings, field",
    [
        ({"tau": "lots"}, "tau"),
        ({"cache_capacity": 2.5}, "cache_capacity"),
        ({"policy": "random"}, "policy"),
        ({"alpha": -1.0}, "alpha"),
        ({"heterogeneity": 2.0}, "heterogeneity"),
        ({"n_clients": 4}, "clients_per_round"),
    ],
)
def test_invalid_settings_name_the_field(settings, field):
    with pytest.raises(ConfigError) as error:
        build_experiment_config(settings)
    assert error.value.field == field


def test_sweep_settings_are_coerced():
    values = sweep_settings(
        {"tau_grid": [0.01, 1], "capacity_grid": [3, 4.0], "policy_grid": ["fifo", "NONE"], "repeats": 2, "tau": 0.5}
    )
    assert values == {
        "tau_grid": (0.01, 1.0),
        "capacity_grid": (3, 4),
        "policy_grid": (CachePolicy.FIFO, CachePolicy.NONE),
        "repeats": 2,
    }
