import csv
import hashlib
import json

import pytest

from ideotype.climate import default_generator_config
from ideotype.experiment import ExperimentConfig, cell_seed, run_experiment
from ideotype.moo import BUDGET_PRESETS


def tiny_config(**overrides):
    base = dict(
        generator=default_generator_config(years=2, length=60).to_dict(),
        climate_seed=4,
        budgets=["tiny"],
        presets={"tiny": {"random": 6, "naive": [2, 3], "two-step": [1, 3]}},
        replications=2,
        K=3,
        l=3,
        cluster_iters=50,
        cluster_restarts=2,
        reference_factor=2,
        reference_q=4,
    )
    base.update(overrides)
    return ExperimentConfig(**base)


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def report(tmp_path_factory):
    out = tmp_path_factory.mktemp("exp")
    result = run_experiment(tiny_config(), out)
    return out, result


class TestRunExperiment:
    def test_files(self, report):
        out, result = report
        assert result["errors"] == 0 and result["cells"] == 6
        archives = sorted(p.relative_to(out).as_posix() for p in (out / "archives").rglob("*.csv"))
        assert len(archives) == 6
        for name in ("indicators.csv", "summary.csv", "budget_audit.csv", "budget_audit.json",
                     "reference_front.csv", "config.json", "climate.csv", "batches.json"):
            assert (out / name).exists()

    def test_budget_audit(self, report):
        out, _ = report
        expected = {"random": 6 * 10, "naive": 3 * 3 * 10, "two-step": 2 * 3 * 10 + 2 * 2 * 3 * 3}
        for row in read_csv(out / "budget_audit.csv"):
            assert int(row["expected"]) == expected[row["strategy"]]
            assert row["simulations"] == row["counted"] == row["expected"]
            assert row["status"] == "ok"

    def test_indicator_rows_reference_archives_by_hash(self, report):
        out, _ = report
        rows = read_csv(out / "indicators.csv")
        assert len(rows) == 6
        for row in rows:
            digest = hashlib.sha256((out / row["archive"]).read_bytes()).hexdigest()
            assert row["archive_sha256"] == digest
            assert float(row["hypervolume"]) >= 0

    def test_summary(self, report):
        out, _ = report
        rows = read_csv(out / "summary.csv")
        assert len(rows) == 3 * 3
        for row in rows:
            assert float(row["q1"]) <= float(row["median"]) <= float(row["q3"])

    def test_deterministic(self, report, tmp_path):
        out, _ = report
        run_experiment(tiny_config(), tmp_path)
        for name in ("indicators.csv", "summary.csv", "budget_audit.csv", "reference_front.csv"):
            assert (tmp_path / name).read_bytes() == (out / name).read_bytes()

    def test_failing_cell_is_recorded(self, tmp_path):
        cfg = tiny_config(strategies=["random", "two-step"], K=50, replications=1)
        result = run_experiment(cfg, tmp_path)
        assert result["errors"] == 1
        rows = {r["strategy"]: r for r in read_csv(tmp_path / "indicators.csv")}
        assert rows["random"]["status"] == "ok"
        assert rows["two-step"]["status"] == "error" and "exceeds" in rows["two-step"]["error"]


class TestConfig:
    def test_defaults_hold_every_constant(self):
        cfg = ExperimentConfig()
        assert (cfg.K, cfg.l, cfg.cluster_iters, cfg.cluster_restarts) == (10, 10, 500, 10)
        assert cfg.dtw_windows == {"tmin": 7, "tmax": 7, "rad": 7, "etp": 7, "rain": 3}
        assert cfg.weights["model"] == 0.5 and cfg.weights["rain"] == 0.1
        assert cfg.preset_table == BUDGET_PRESETS

    def test_json_round_trip(self, tmp_path):
        cfg = tiny_config()
        cfg.to_json(tmp_path / "c.json")
        assert ExperimentConfig.from_json(tmp_path / "c.json") == cfg

    def test_shipped_example_parses(self):
        from pathlib import Path

        path = Path(__file__).resolve().parents[1] / "configs" / "experiment.json"
        cfg = ExperimentConfig.from_json(path)
        assert cfg.replications == 10 and cfg.preset_table == BUDGET_PRESETS
        assert json.loads(path.read_text())["generator"]["years"] == 38

    @pytest.mark.parametrize(
        "bad",
        [{"replications": 0}, {"budgets": ["huge"]}, {"strategies": ["grid"]}, {"alpha": 0.0},
         {"weights": {"model": 0.9}}],
    )
    def test_validation(self, bad):
        with pytest.raises(ValueError):
            tiny_config(**bad)

    def test_unknown_key(self):
        with pytest.raises(ValueError, match="unknown"):
            ExperimentConfig.from_dict({"budget": ["small"]})

    def test_cell_seeds_differ(self):
        seeds = {cell_seed(0, b, r, s) for b in range(2) for r in range(3) for s in range(3)}
        assert len(seeds) == 18
