import csv
import json

import numpy as np
import pytest

from ideotype.cli import main
from ideotype.climate import default_generator_config, load_climate
from ideotype.cropmodel import DEFAULT_BOUNDS, YieldMatrix, lhs_design, write_phenotypes
from ideotype.dissim import DissimilarityMatrix


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    (d / "gen.json").write_text(json.dumps(default_generator_config(years=3).to_dict()))
    assert main(["gen-climate", "--config", str(d / "gen.json"), "--seed", "2", "--out", str(d / "c.csv")]) == 0
    write_phenotypes(lhs_design(DEFAULT_BOUNDS, 4, np.random.default_rng(0)), d / "basis.csv")
    return d


def run(*args) -> int:
    return main([str(a) for a in args])


class TestPipeline:
    def test_gen_climate(self, workdir):
        assert len(load_climate(workdir / "c.csv")) == 15

    def test_simulate_dissim_cluster_residuals_reconstruct(self, workdir, capsys):
        d = workdir
        assert run("simulate", "--climate", d / "c.csv", "--phenotypes", d / "basis.csv",
                   "--out", d / "y.csv") == 0
        assert YieldMatrix.from_csv(d / "y.csv").shape == (4, 15)

        (d / "w.json").write_text(json.dumps({"model": 0.5, "tmin": 0.1, "tmax": 0.1, "rad": 0.1,
                                              "etp": 0.1, "rain": 0.1}))
        assert run("dissim", "--climate", d / "c.csv", "--basis-yields", d / "y.csv",
                   "--weights", d / "w.json", "--out", d / "delta.csv",
                   "--intermediates", d / "raw") == 0
        assert len(DissimilarityMatrix.from_csv(d / "delta.csv")) == 15
        assert len(list((d / "raw").glob("*.csv"))) == 6

        assert run("cluster", "--dissim", d / "delta.csv", "--k", 4, "--iters", 100,
                   "--restarts", 2, "--seed", 1, "--out", d / "cl.json") == 0
        cl = json.loads((d / "cl.json").read_text())
        assert sum(cl["class_sizes"]) == 15 and len(cl["representative_ids"]) == 4
        assert {"assignment", "energy"} <= set(cl)

        assert run("residuals", "--basis-yields", d / "y.csv", "--clusters", d / "cl.json",
                   "--method", "rescaled", "--out", d / "r.json") == 0

        Y = YieldMatrix.from_csv(d / "y.csv").values
        np.savetxt(d / "rep.csv", Y[:2][:, cl["representatives"]], delimiter=",")
        capsys.readouterr()
        assert run("reconstruct", "--rep-yields", d / "rep.csv", "--residuals", d / "r.json",
                   "--alpha", 0.2, "--method", "rescaled") == 0
        rows = list(csv.DictReader(capsys.readouterr().out.splitlines()))
        assert len(rows) == 2
        for row in rows:
            assert float(row["CVaR_0.2"]) <= float(row["Q_0.2"])
            assert float(row["CVaR_0.2"]) <= float(row["E"])

    def test_optimize_and_evaluate(self, workdir):
        d = workdir
        assert run("optimize", "--strategy", "random", "--budget-preset", "very-small",
                   "--climate", d / "c.csv", "--seed", 3, "--out", d / "rand") == 0
        budget = json.loads((d / "rand" / "budget.json").read_text())
        assert budget["simulations"] == budget["counted"] == 60 * 15
        assert run("optimize", "--strategy", "naive", "--budget-preset", "very-small",
                   "--climate", d / "c.csv", "--seed", 3, "--out", d / "naive") == 0
        assert run("evaluate", "--fronts", d / "rand" / "archive.csv", d / "naive" / "archive.csv",
                   "--reference", d / "naive" / "archive.csv", "--out", d / "ind.csv") == 0
        rows = list(csv.DictReader((d / "ind.csv").open()))
        assert len(rows) == 2 and float(rows[1]["epsilon"]) == 0.0

    def test_run(self, workdir):
        d = workdir
        cfg = {
            "generator": default_generator_config(years=1, length=60).to_dict(),
            "budgets": ["tiny"],
            "presets": {"tiny": {"random": 4, "naive": [1, 2], "two-step": [1, 2]}},
            "replications": 1, "K": 2, "l": 2, "cluster_iters": 20, "cluster_restarts": 1,
            "reference_factor": 1, "reference_q": 2,
        }
        (d / "exp.json").write_text(json.dumps(cfg))
        assert run("run", "--config", d / "exp.json", "--seed", 5, "--out", d / "res") == 0
        assert (d / "res" / "summary.csv").exists()
        assert json.loads((d / "res" / "config.json").read_text())["master_seed"] == 5

    def test_init_config(self, workdir):
        assert run("init-config", "--out", workdir / "default.json") == 0
        cfg = json.loads((workdir / "default.json").read_text())
        assert cfg["K"] == 10 and cfg["presets"]["large"]["two-step"] == [308, 61]


class TestErrors:
    def test_bad_climate_reports_and_exits_nonzero(self, tmp_path, capsys):
        (tmp_path / "bad.csv").write_text("nope\n")
        assert run("simulate", "--climate", tmp_path / "bad.csv", "--phenotypes", tmp_path / "p.csv",
                   "--out", tmp_path / "y.csv") == 2
        assert "error" in capsys.readouterr().err

    def test_unknown_subcommand(self):
        with pytest.raises(SystemExit):
            main(["frobnicate"])
