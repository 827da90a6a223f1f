import json

import numpy as np
import pytest
from pydantic import ValidationError

from src.core import SearchSpaceTooLargeError, Topology, all_joint_actions
from src.data_loader import BenchmarkLoader, generate_benchmark
from src.environment import TabularBenchmark, TabularEntry, beta_at


def _write(path, payload):
    path.write_text(json.dumps(payload), encoding="utf-8")
    return path


class TestBenchmarkLoader:

    def test_save_and_load(self, tmp_path):
        topo = Topology(2, 2)
        bench = TabularBenchmark(topo, {
            (1, 1): TabularEntry(0.4, 0.01),
            (0, 0): TabularEntry(0.1),
        })
        loader = BenchmarkLoader(tmp_path)
        path = loader.save_benchmark(bench, "bench.json")
        payload = json.loads(path.read_text(encoding="utf-8"))
        assert [e["actions"] for e in payload["entries"]] == [[0, 0], [1, 1]]
        assert "loss_std" not in payload["entries"][0]
        loaded = loader.load_benchmark("bench.json")
        assert loaded.entries == bench.entries
        assert loaded.topology.num_agents == 2

    def test_duplicate_entries(self, tmp_path):
        _write(tmp_path / "dup.json", {
            "num_agents": 1,
            "num_actions": 2,
            "entries": [{"actions": [0], "loss_mean": 0.1}, {"actions": [0], "loss_mean": 0.2}],
        })
        with pytest.raises(ValueError, match="Duplicate"):
            BenchmarkLoader(tmp_path).load_benchmark("dup.json")

    def test_unknown_fields_rejected(self, tmp_path):
        _write(tmp_path / "extra.json", {"num_agents": 1, "num_actions": 2, "entries": [], "source": "x"})
        with pytest.raises(ValidationError):
            BenchmarkLoader(tmp_path).read_container("extra.json")

    def test_beta_schedule(self, tmp_path):
        _write(tmp_path / "beta.json", {
            "num_agents": 1,
            "num_actions": 2,
            "beta_schedule": {"kind": "piecewise", "segments": [
                {"start": 1, "beta": [0.0, 1.0]}, {"start": 4, "beta": [1.0, 0.0]},
            ]},
        })
        cfg = BenchmarkLoader(tmp_path).load_beta_schedule("beta.json", noise_std=0.1)
        assert cfg.noise_std == 0.1
        np.testing.assert_array_equal(beta_at(cfg, 4), [1.0, 0.0])

    def test_missing_beta_schedule(self, tmp_path):
        _write(tmp_path / "plain.json", {"num_agents": 1, "num_actions": 2})
        with pytest.raises(ValueError):
            BenchmarkLoader(tmp_path).load_beta_schedule("plain.json")

    @pytest.mark.parametrize("schedule", [
        {"kind": "piecewise", "beta": [0.0, 1.0]},
        {"kind": "stationary"},
        {"kind": "stationary", "beta": [0.0, 1.0], "segments": [{"start": 1, "beta": [0.0, 1.0]}]},
    ])
    def test_malformed_beta_schedule(self, tmp_path, schedule):
        _write(tmp_path / "bad.json", {"num_agents": 1, "num_actions": 2, "beta_schedule": schedule})
        with pytest.raises(ValidationError):
            BenchmarkLoader(tmp_path).read_container("bad.json")


class TestGenerateBenchmark:

    def test_exhaustive(self):
        bench = generate_benchmark(Topology(2, 2), seed=1)
        assert len(bench) == 4
        assert bench.complete
        assert all(0.0 <= e.mean < 1.0 for e in bench.entries.values())

    def test_planted_optimum(self):
        topo = Topology(3, 3)
        bench = generate_benchmark(topo, "planted-optimum", seed=5, gap=0.2)
        losses = sorted(e.mean for e in bench.entries.values())
        assert losses[0] == 0.0
        assert losses[1] == pytest.approx(0.2)
        best = [a for a, e in bench.entries.items() if e.mean == 0.0]
        assert len(best) == 1
        assert bench.best_entry()[0] == best[0]

    def test_planted_optimum_in_sampled_table(self):
        bench = generate_benchmark(Topology(12, 4), "planted-optimum", seed=2, gap=0.3, samples=50)
        assert len(bench) in (50, 51)
        assert sum(e.mean == 0.0 for e in bench.entries.values()) == 1

    def test_same_seed_same_bytes(self, tmp_path):
        loader = BenchmarkLoader(tmp_path)
        for name in ("a.json", "b.json"):
            loader.save_benchmark(generate_benchmark(Topology(2, 3), "planted-optimum", seed=9), name)
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()

    def test_size_guard(self):
        with pytest.raises(SearchSpaceTooLargeError):
            generate_benchmark(Topology(21, 2))
        assert len(generate_benchmark(Topology(21, 2), samples=100, seed=0)) == 100

    def test_samples_cover_small_space(self):
        bench = generate_benchmark(Topology(2, 2), samples=10)
        assert sorted(bench.entries) == [tuple(r) for r in all_joint_actions(Topology(2, 2))]

    @pytest.mark.parametrize("kwargs", [{"generator": "gaussian"}, {"generator": "planted-optimum", "gap": 1.5}])
    def test_invalid_arguments(self, kwargs):
        with pytest.raises(ValueError):
            generate_benchmark(Topology(2, 2), **kwargs)
