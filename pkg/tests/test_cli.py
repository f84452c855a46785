from __future__ import annotations

import pandas as pd
import pytest

from src import cli
from src.config import DEFAULT_SEED, RESULTS_DIR, SEED_ENV_VAR
from src.distlib import TestReport
from src.errors import UsageError
from src.validation import RunResult


def _resolve(*argv):
    return cli.resolve_config(cli.parse_args(list(argv)))


@pytest.fixture(autouse=True)
def no_env_seed(monkeypatch):
    monkeypatch.delenv(SEED_ENV_VAR, raising=False)


# ═══════════════════════════════════════════════════════════════════════════════
# RESOLUTION
# ═══════════════════════════════════════════════════════════════════════════════

def test_run_prefix_is_optional():
    assert cli.parse_args(["run", "pitman"]).experiment == "pitman"
    assert cli.parse_args(["pitman"]).experiment == "pitman"


def test_builtin_defaults():
    cfg = _resolve("pitman")
    assert cfg.seed == DEFAULT_SEED
    assert cfg.out == RESULTS_DIR / "pitman"
    assert cfg.params == {}


def test_flags_beat_config_file_beats_experiment_defaults(tmp_path):
    path = tmp_path / "run.conf"
    path.write_text("# burke run\nlevels = 4\nseed=5\nlambda=2.0\n\nlag=0.5  # block length\n")
    cfg = _resolve("burke", "--config", str(path), "--seed", "9")
    assert cfg.levels == 4
    assert cfg.seed == 9
    assert cfg.lam == 2.0
    assert cfg.params == {"lag": "0.5"}


def test_params_are_collected(tmp_path):
    cfg = _resolve("sandwich", "--param", "n=10", "--param", "s=0.5")
    assert cfg.params == {"n": "10", "s": "0.5"}
    assert cfg.t_max == pytest.approx(22.0)


def test_seed_from_environment(monkeypatch):
    monkeypatch.setenv(SEED_ENV_VAR, "42")
    assert _resolve("pitman").seed == 42
    assert _resolve("pitman", "--seed", "3").seed == 3


def test_bad_environment_seed(monkeypatch):
    monkeypatch.setenv(SEED_ENV_VAR, "forty-two")
    with pytest.raises(UsageError):
        _resolve("pitman")


def test_unknown_experiment_suggests_a_name():
    with pytest.raises(UsageError, match="did you mean 'burke'"):
        _resolve("burk")


def test_malformed_config_file(tmp_path):
    path = tmp_path / "bad.conf"
    path.write_text("levels 4\n")
    with pytest.raises(UsageError):
        cli.read_config_file(path)
    with pytest.raises(UsageError):
        cli.read_config_file(tmp_path / "missing.conf")


def test_uncastable_config_value(tmp_path):
    path = tmp_path / "run.conf"
    path.write_text("replicas=many\n")
    with pytest.raises(UsageError):
        _resolve("pitman", "--config", str(path))


# ═══════════════════════════════════════════════════════════════════════════════
# EXIT CODES
# ═══════════════════════════════════════════════════════════════════════════════

def test_list(capsys):
    assert cli.main(["--list"]) == cli.EXIT_PASS
    out = capsys.readouterr().out
    assert "burke" in out
    assert "geodesic-crossing" in out


@pytest.mark.parametrize(
    "argv",
    [[], ["burk"], ["pitman", "--levels", "many"], ["pitman", "--replicas", "0"], ["pitman", "--t-min", "0.5"]],
)
def test_usage_errors_exit_two(argv, tmp_path):
    assert cli.main([*argv, "--out", str(tmp_path)]) == cli.EXIT_USAGE


def test_failed_check_exits_one(monkeypatch, tmp_path):
    def failing_run(cfg, progress=False):
        return RunResult(cfg, pd.DataFrame({"replica": [0]}), [TestReport("ks", 1.0, 0.5, 100)])

    monkeypatch.setattr(cli, "run_experiment", failing_run)
    assert cli.main(["pitman", "--out", str(tmp_path), "-q"]) == cli.EXIT_FAIL
    assert "FAIL" in (tmp_path / "report.txt").read_text()


def _pitman(out, parallel):
    return cli.main([
        "run", "pitman", "--t-min", "-1", "--t-max", "1", "--replicas", "4",
        "--seed", "17", "--parallel", str(parallel), "--out", str(out), "-q",
    ])


def test_end_to_end_run(tmp_path):
    assert _pitman(tmp_path, 1) == cli.EXIT_PASS
    for name in ("config.echo", "replicas.csv", "summary.csv", "report.txt"):
        assert (tmp_path / name).exists()
    echo = (tmp_path / "config.echo").read_text().splitlines()
    assert "experiment=pitman" in echo
    assert "seed=17" in echo


def test_summary_is_byte_identical_across_worker_counts(tmp_path):
    assert _pitman(tmp_path / "one", 1) == cli.EXIT_PASS
    assert _pitman(tmp_path / "two", 2) == cli.EXIT_PASS
    for name in ("summary.csv", "replicas.csv"):
        assert (tmp_path / "one" / name).read_bytes() == (tmp_path / "two" / name).read_bytes()
