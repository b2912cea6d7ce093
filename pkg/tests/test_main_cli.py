import pandas as pd
import pytest

from fedcache import sweep_logic
from fedcache.cache import CachePolicy
from fedcache.main_cli import EXIT_CONFIG_ERROR, EXIT_OK, EXIT_RUNTIME_FAILURE, main
from fedcache.sweep_logic import REPORT_COLUMNS

TINY = """
n_clients = 4
clients_per_round = 4
rounds = 3
task = "logistic-binary"
dim = 3
samples_per_client = 20
batch_size = 10
"""


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "tiny.toml"
    path.write_text(TINY)
    return path


def test_run_writes_metrics_and_round_log(config_file, tmp_path):
    out = tmp_path / "run.csv"
    log = tmp_path / "rounds.csv"
    code = main(["run", "--config", str(config_file), "--policy", "PBR", "--out", str(out), "--round-log", str(log)])
    assert code == EXIT_OK
    metrics = pd.read_csv(out)
    assert metrics.loc[0, "policy"] == "PBR"
    assert len(pd.read_csv(log)) == 3


def test_run_with_baseline_comparison(config_file, tmp_path):
    code = main(["run", "--config", str(config_file), "--compare-baseline", "--out", str(tmp_path / "run.json"), "--format", "json"])
    assert code == EXIT_OK
    assert (tmp_path / "run.json").exists()


def test_baseline_subcommand(config_file, tmp_path):
    out = tmp_path / "baseline.csv"
    assert main(["baseline", "--config", str(config_file), "--out", str(out)]) == EXIT_OK
    row = pd.read_csv(out).iloc[0]
    assert row["policy"] == "NONE"
    assert row["cache_hits"] == 0


def test_bad_override_is_a_config_error(config_file):
    assert main(["run", "--config", str(config_file), "--policy", "MRU"]) == EXIT_CONFIG_ERROR


def test_unknown_config_key_is_a_config_error(tmp_path):
    path = tmp_path / "bad.toml"
    path.write_text("cache_size = 3\n")
    assert main(["run", "--config", str(path)]) == EXIT_CONFIG_ERROR


def test_bad_argument_exits_with_config_error_code():
    with pytest.raises(SystemExit) as error:
        main(["run", "--format", "parquet"])
    assert error.value.code == EXIT_CONFIG_ERROR


def test_sweep_then_recommend(config_file, tmp_path):
    report = tmp_path / "sweep.csv"
    dataset = tmp_path / "strategies.csv"
    code = main(
        [
            "sweep",
            "--config",
            str(config_file),
            "--tau-grid",
            "0.1,0.3",
            "--capacity-grid",
            "3",
            "--out",
            str(report),
            "--strategy-dataset",
            str(dataset),
        ]
    )
    assert code == EXIT_OK
    table = pd.read_csv(report)
    assert list(table.columns) == REPORT_COLUMNS
    assert len(table) == 2 * 1 * 4
    assert len(pd.read_csv(dataset)) == 2

    recommendations = tmp_path / "recommended.csv"
    summary = tmp_path / "summary.csv"
    code = main(["recommend", "--report", str(report), "--out", str(recommendations), "--summary", str(summary)])
    assert code == EXIT_OK
    assert set(pd.read_csv(recommendations)["policy"]) <= {"FIFO", "LRU", "PBR"}
    assert len(pd.read_csv(summary)) == 8


def test_recommend_on_incomplete_report_fails(config_file, tmp_path):
    report = tmp_path / "sweep.csv"
    args = ["sweep", "--config", str(config_file), "--tau-grid", "0.1", "--capacity-grid", "3", "--policy-grid", "NONE,FIFO"]
    assert main(args + ["--out", str(report)]) == EXIT_OK
    assert main(["recommend", "--report", str(report), "--tau", "0.1", "--capacity", "3"]) == EXIT_RUNTIME_FAILURE


def test_failed_cell_gives_runtime_exit_code(config_file, tmp_path, monkeypatch):
    real = sweep_logic.run_experiment

    def flaky(config, progress=False):
        if config.policy == CachePolicy.FIFO:
            raise FloatingPointError("diverged")
        return real(config, progress)

    monkeypatch.setattr(sweep_logic, "run_experiment", flaky)
    report = tmp_path / "sweep.csv"
    code = main(["sweep", "--config", str(config_file), "--tau-grid", "0.1", "--capacity-grid", "3", "--out", str(report)])
    assert code == EXIT_RUNTIME_FAILURE
    assert len(pd.read_csv(report)) == 3
