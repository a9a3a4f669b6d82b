"""Command-line interface: subcommands, exit codes, file outputs."""

import json

import pytest

from herdcfx import cli


@pytest.fixture(scope="module")
def cli_dirs(tmp_path_factory):
    """One synth+train run shared by the read-only CLI tests."""
    root = tmp_path_factory.mktemp("cli")
    data = root / "data"
    model = root / "model.json"
    assert cli.main(["synth", "--out", str(data), "--seed", "3",
                     "--n-cows", "60", "--n-days", "300"]) == cli.EXIT_OK
    assert cli.main(["train", "--data-dir", str(data),
                     "--out-model", str(model),
                     "--split-date", "2022-08-01",
                     "--n-trees", "20"]) == cli.EXIT_OK
    return root


class TestSynth:
    def test_writes_all_csvs(self, cli_dirs):
        data = cli_dirs / "data"
        for name in ("milk.csv", "cows.csv", "events.csv", "body.csv"):
            assert (data / name).exists()

    def test_invalid_config_usage_error(self, tmp_path):
        rc = cli.main(["synth", "--out", str(tmp_path / "x"), "--n-cows", "0"])
        assert rc == cli.EXIT_USAGE

    def test_unknown_argument_usage_error(self):
        assert cli.main(["synth", "--bogus"]) == cli.EXIT_USAGE


class TestTrain:
    def test_model_file_written(self, cli_dirs):
        doc = json.loads((cli_dirs / "model.json").read_text())
        assert doc["format_version"] == 1
        assert len(doc["trees"]) == 20

    def test_single_class_split_rejected(self, cli_dirs, tmp_path):
        rc = cli.main(["train", "--data-dir", str(cli_dirs / "data"),
                       "--out-model", str(tmp_path / "m.json"),
                       "--split-date", "2025-01-01"])
        assert rc == cli.EXIT_USAGE

    def test_missing_data_dir_rejected(self, tmp_path):
        rc = cli.main(["train", "--data-dir", str(tmp_path / "nope"),
                       "--out-model", str(tmp_path / "m.json"),
                       "--split-date", "2022-08-01"])
        assert rc == cli.EXIT_USAGE


class TestEval:
    def test_writes_reports(self, cli_dirs, tmp_path):
        report = tmp_path / "report"
        rc = cli.main(["eval", "--model", str(cli_dirs / "model.json"),
                       "--data-dir", str(cli_dirs / "data"),
                       "--report-dir", str(report),
                       "--split-date", "2022-08-01",
                       "--sample-n", "5"])
        assert rc == cli.EXIT_OK
        assert (report / "horizon_curve.csv").exists()
        assert (report / "score_shift.csv").exists()
        summary = json.loads((report / "summary.json").read_text())
        assert 0.0 <= summary["flip_rate"] <= 1.0


class TestExplain:
    def test_unknown_cow_usage_error(self, cli_dirs):
        rc = cli.main(["explain", "--model", str(cli_dirs / "model.json"),
                       "--data-dir", str(cli_dirs / "data"),
                       "--cow", "nope", "--date", "2022-09-01"])
        assert rc == cli.EXIT_USAGE


class TestOracleCheck:
    def test_passes_with_exit_zero(self, capsys):
        assert cli.main(["oracle-check", "--n", "30", "--seed", "1"]) == 0
        out = capsys.readouterr().out
        assert "FAIL" not in out
        assert out.count("PASS") == 4


class TestPolicy:
    def test_writes_loadable_default_policy(self, tmp_path):
        from herdcfx.features import default_catalog, load_catalog
        path = tmp_path / "policy.txt"
        assert cli.main(["policy", "--out", str(path)]) == cli.EXIT_OK
        assert load_catalog(path) == default_catalog()
