import json
import logging

import numpy as np
import pytest

from conftest import linear_document
from src.cli import main
from src.config import ExperimentConfig
from src.core import Topology
from src.data_loader import BenchmarkLoader
from src.reporting import read_csv
from src.runner import run_single


@pytest.fixture
def config_file(tmp_path):
    def _write(doc=None, name="config.json"):
        path = tmp_path / name
        path.write_text(json.dumps(doc if doc is not None else linear_document(horizon=120)), encoding="utf-8")
        return path
    return _write


def _error_text(caplog):
    return "\n".join(r.getMessage() for r in caplog.records if r.levelno >= logging.ERROR)


class TestRun:

    def test_writes_artifacts(self, config_file, tmp_path):
        out = tmp_path / "out"
        assert main(["--quiet", "run", "--config", str(config_file()), "--out", str(out)]) == 0
        for name in ("trace.csv", "regret.csv", "report.json", "resolved-config.json"):
            assert (out / name).is_file()
        report = json.loads((out / "report.json").read_text(encoding="utf-8"))
        assert report["algorithm"] == "manas"
        assert report["regret"]["repeats"] == 1

    def test_regret_csv_round_trip(self, config_file, tmp_path):
        doc = linear_document(horizon=150, seed=3)
        out = tmp_path / "out"
        assert main(["--quiet", "run", "--config", str(config_file(doc)), "--out", str(out)]) == 0
        expected = run_single(ExperimentConfig.model_validate(doc)).report
        frame = read_csv(out / "regret.csv")
        np.testing.assert_array_equal(frame["loss"].to_numpy(), expected.losses)
        np.testing.assert_array_equal(frame["instantaneous_regret"].to_numpy(), expected.per_round)
        np.testing.assert_array_equal(frame["cumulative_regret"].to_numpy(), expected.cumulative_curve)
        np.testing.assert_array_equal(frame["bound"].to_numpy(), expected.theoretical_bound_curve)

    def test_seed_override(self, config_file, tmp_path):
        out = tmp_path / "out"
        assert main(["--quiet", "run", "--config", str(config_file()), "--seed", "7", "--out", str(out)]) == 0
        resolved = json.loads((out / "resolved-config.json").read_text(encoding="utf-8"))
        assert resolved["seed"] == 7
        assert resolved["manas"]["eta"] > 0

    def test_repeats_write_summary(self, config_file, tmp_path):
        out = tmp_path / "out"
        args = ["--quiet", "run", "--config", str(config_file()), "--repeats", "2", "--out", str(out), "--trace-json"]
        assert main(args) == 0
        summary = read_csv(out / "regret_summary.csv")
        assert len(summary) == 120
        assert json.loads((out / "trace.json").read_text(encoding="utf-8"))["seed"] == 0

    def test_missing_environment(self, config_file, tmp_path, caplog):
        doc = linear_document()
        del doc["environment"]
        code = main(["run", "--config", str(config_file(doc)), "--out", str(tmp_path / "out")])
        assert code == 2
        assert "environment" in _error_text(caplog)
        assert not (tmp_path / "out").exists()

    def test_runtime_failure(self, config_file, tmp_path, caplog):
        doc = {
            "topology": {"num_agents": 1, "num_actions": 2},
            "algorithm": "manas",
            "horizon": 5,
            "environment": {"kind": "tabular", "path": str(tmp_path / "absent.json")},
        }
        assert main(["run", "--config", str(config_file(doc)), "--out", str(tmp_path / "out")]) == 1

    def test_trace_is_reproducible(self, config_file, tmp_path):
        path = config_file(linear_document(horizon=200, repeats=2, seed=11))
        outputs = []
        for name, extra in (("a", []), ("b", []), ("c", ["--set", "parallel=true", "--set", "processes=2"])):
            out = tmp_path / name
            assert main(["--quiet", "run", "--config", str(path), "--out", str(out)] + extra) == 0
            outputs.append((out / "trace.csv").read_bytes())
        assert outputs[0] == outputs[1] == outputs[2]


class TestValidateConfig:

    def test_prints_resolved(self, config_file, capsys):
        assert main(["--quiet", "validate-config", "--config", str(config_file())]) == 0
        resolved = json.loads(capsys.readouterr().out)
        assert resolved["algorithm"] == "manas"
        assert resolved["manas_ls"]["window"] == 16

    def test_shipped_configs(self, configs_dir, capsys):
        for path in sorted(configs_dir.glob("*.json")):
            assert main(["--quiet", "validate-config", "--config", str(path)]) == 0

    def test_distinct_messages(self, config_file, tmp_path, caplog):
        broken = tmp_path / "broken.json"
        broken.write_text('{"horizon": 10,,}', encoding="utf-8")
        missing = linear_document()
        del missing["algorithm"]
        unknown = linear_document(verbose=True)
        out_of_range = linear_document(horizon=-3)
        mismatch = linear_document(beta=[0.1, 0.2])
        messages = []
        for path in (broken, config_file(missing, "m.json"), config_file(unknown, "u.json"),
                     config_file(out_of_range, "o.json"), config_file(mismatch, "b.json")):
            caplog.clear()
            assert main(["validate-config", "--config", str(path)]) == 2
            messages.append(_error_text(caplog))
        assert "line 1, column" in messages[0]
        assert "algorithm" in messages[1]
        assert "verbose" in messages[2]
        assert "horizon" in messages[3]
        assert "K·N" in messages[4]
        assert len(set(messages)) == 5

    def test_bad_override(self, config_file, caplog):
        assert main(["validate-config", "--config", str(config_file()), "--set", "seed"]) == 2


class TestGenTabular:

    def test_exhaustive(self, tmp_path):
        out = tmp_path / "bench.json"
        assert main(["--quiet", "gen-tabular", "--num-agents", "2", "--num-actions", "2", "--out", str(out)]) == 0
        bench = BenchmarkLoader().load_benchmark(out)
        assert len(bench) == 4

    def test_planted_is_deterministic(self, tmp_path):
        paths = [tmp_path / "a.json", tmp_path / "b.json"]
        for path in paths:
            args = ["--quiet", "gen-tabular", "--num-agents", "3", "--num-actions", "2",
                    "--generator", "planted-optimum", "--gap", "0.2", "--seed", "4", "--out", str(path)]
            assert main(args) == 0
        assert paths[0].read_bytes() == paths[1].read_bytes()
        bench = BenchmarkLoader().load_benchmark(paths[0])
        means = sorted(e.mean for e in bench.entries.values())
        assert means[0] == 0.0 and means[1] == pytest.approx(0.2)

    def test_size_guard(self, tmp_path):
        args = ["--quiet", "gen-tabular", "--num-agents", "30", "--num-actions", "2", "--out", str(tmp_path / "x.json")]
        assert main(args) == 1


class TestGsd:

    def test_small_figure_data(self, tmp_path):
        out = tmp_path / "gsd"
        args = ["--quiet", "gsd", "--num-agents", "5", "--num-actions", "3", "--horizon", "60",
                "--repeats", "2", "--out", str(out)]
        assert main(args) == 0
        for name in ("manas", "manas_ls", "random"):
            frame = read_csv(out / f"{name}.csv")
            assert list(frame.columns) == ["round", "mean_regret", "std_regret"]
            assert len(frame) == 60
        bound = read_csv(out / "bound.csv")
        assert bound["bound"].iloc[-1] == pytest.approx(2 * 5 * np.sqrt(60 * 3 * np.log(3)))

    def test_override_applies_to_every_algorithm(self, tmp_path):
        out = tmp_path / "gsd"
        args = ["--quiet", "gsd", "--num-agents", "4", "--num-actions", "2", "--horizon", "20",
                "--repeats", "1", "--algorithms", "manas", "random_search", "--integer-contributions",
                "--set", "seed=5", "--out", str(out)]
        assert main(args) == 0
        assert json.loads((out / "manas.json").read_text(encoding="utf-8"))["runs"][0]["seed"] == 5
        assert not (out / "manas_ls.csv").exists()

    def test_summary_records_temperature_and_table(self, tmp_path):
        out = tmp_path / "gsd"
        args = ["--quiet", "gsd", "--num-agents", "4", "--num-actions", "3", "--horizon", "10",
                "--repeats", "1", "--algorithms", "manas", "--start-sum", "6", "--out", str(out)]
        assert main(args) == 0
        summary = json.loads((out / "manas.json").read_text(encoding="utf-8"))
        assert summary["eta"] == 0.1
        assert summary["mu"] == 1.0 and summary["sigma"] == 10.0
        np.testing.assert_allclose(summary["contributions"], [0.0, 1.5, 3.0])

    def test_integer_table_is_recorded(self, tmp_path):
        out = tmp_path / "gsd"
        args = ["--quiet", "gsd", "--num-agents", "2", "--num-actions", "3", "--horizon", "10",
                "--repeats", "1", "--algorithms", "random_search", "--integer-contributions",
                "--eta", "0.25", "--out", str(out)]
        assert main(args) == 0
        summary = json.loads((out / "random.json").read_text(encoding="utf-8"))
        assert summary["contributions"] == [0.0, 1.0, 2.0]
        assert summary["eta"] == 0.25


class TestSweep:

    def test_grid(self, config_file, tmp_path):
        out = tmp_path / "sweep"
        args = ["--quiet", "sweep", "--config", str(config_file()), "--grid", "manas.eta=0.0,0.5",
                "--grid", "seed=1,2", "--out", str(out)]
        assert main(args) == 0
        summary = read_csv(out / "summary.csv")
        assert len(summary) == 4
        assert summary["point"].tolist() == ["point-000", "point-001", "point-002", "point-003"]
        assert summary["seed"].tolist() == [1, 2, 1, 2]
        assert (out / "point-003" / "trace.csv").is_file()
