"""Replicated comparison of the optimization strategies on one climate set.

For every (strategy, budget, replication) cell the strategy runs with a seed
derived from the master seed, its final archive is re-scored on all N series,
and hypervolume, additive epsilon and R2 are computed against a reference
front from one long full-evaluation MOPSO-CD run. Hypervolume reference and
ideal points are shared by all fronts of the same budget.

Output directory layout::

    config.json             resolved configuration
    climate.csv             the climate set actually used
    reference_front.csv     reference archive
    archives/<budget>/<strategy>/rep<r>.csv
    budget_audit.csv / .json
    indicators.csv          one row per cell, archive referenced by sha256
    summary.csv             median and quartiles per (budget, strategy, indicator)
    batches.json            reference and ideal points per budget
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .climate import ClimateSet, GeneratorConfig, default_generator_config, generate_climate, load_climate, write_climate
from .cluster import ClusteringConfig
from .cropmodel import Simulator
from .dissim import DissimWeights, DtwConfig
from .indicators import epsilon_indicator, hypervolume, ideal_point, r2_indicator, reference_point
from .moo import (
    BUDGET_PRESETS,
    STRATEGIES,
    FullEvaluator,
    OptimizerConfig,
    expected_budget,
    mopso_cd,
    naive_mopso,
    random_search,
    rescore,
    two_step,
    write_archive,
)

logger = logging.getLogger(__name__)

INDICATORS = ("hypervolume", "epsilon", "r2")


@dataclass
class ExperimentConfig:
    """Experimental grid and every constant of the pipeline.

    ``climate_file`` takes precedence over ``generator``; with neither, the
    default five-site generator is used. ``presets`` entries override or
    extend :data:`~ideotype.moo.BUDGET_PRESETS` (random: sample size; naive and
    two-step: ``[T, q]``).
    """

    climate_file: str | None = None
    generator: dict | None = None
    climate_seed: int = 0
    budgets: list = field(default_factory=lambda: ["very-small"])
    presets: dict = field(default_factory=lambda: _preset_defaults())
    strategies: list = field(default_factory=lambda: list(STRATEGIES))
    replications: int = 10
    alpha: float = 0.2
    K: int = 10
    l: int = 10
    cluster_iters: int = 500
    cluster_restarts: int = 10
    method: str = "rescaled"
    dtw_windows: dict = field(default_factory=lambda: dict(DtwConfig().windows))
    weights: dict = field(default_factory=lambda: asdict(DissimWeights()))
    reference_factor: int = 20
    reference_q: int = 20
    out_dir: str = "results"
    master_seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if not self.budgets:
            raise ValueError("at least one budget preset is required")
        presets = self.preset_table
        unknown = [b for b in self.budgets if b not in presets]
        if unknown:
            raise ValueError(f"unknown budget presets {unknown}; known: {sorted(presets)}")
        bad = [s for s in self.strategies if s not in STRATEGIES]
        if bad or not self.strategies:
            raise ValueError(f"strategies must be a non-empty subset of {STRATEGIES}, got {bad}")
        for name in self.budgets:
            missing = set(self.strategies) - set(presets[name])
            if missing:
                raise ValueError(f"budget preset {name!r} lacks {sorted(missing)}")
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        if self.reference_factor < 1 or self.reference_q < 1 or self.workers < 1:
            raise ValueError("reference_factor, reference_q and workers must be >= 1")
        # constructing these validates them
        self.weights_obj
        self.dtw_obj

    @property
    def preset_table(self) -> dict:
        merged = {k: dict(v) for k, v in BUDGET_PRESETS.items()}
        for name, preset in self.presets.items():
            merged[name] = {
                s: (int(v) if s == "random" else tuple(int(x) for x in v)) for s, v in preset.items()
            }
        return merged

    @property
    def weights_obj(self) -> DissimWeights:
        return DissimWeights(**self.weights)

    @property
    def dtw_obj(self) -> DtwConfig:
        return DtwConfig(dict(self.dtw_windows))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown experiment config keys {sorted(extra)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    def load_climate(self) -> ClimateSet:
        if self.climate_file:
            return load_climate(self.climate_file)
        gen = GeneratorConfig.from_dict(self.generator) if self.generator else default_generator_config()
        return generate_climate(gen, self.climate_seed)


def _preset_defaults() -> dict:
    return {
        name: {s: (v if s == "random" else list(v)) for s, v in preset.items()}
        for name, preset in BUDGET_PRESETS.items()
    }


def cell_seed(master_seed: int, budget_idx: int, replication: int, strategy_idx: int) -> int:
    seq = np.random.SeedSequence([int(master_seed), budget_idx, replication, strategy_idx])
    return int(seq.generate_state(1)[0])


def _budget_of(cfg: ExperimentConfig, strategy: str, budget: str, N: int) -> int:
    p = cfg.preset_table[budget][strategy]
    if strategy == "random":
        return expected_budget("random", N, n=p)
    T, q = p
    return expected_budget(strategy, N, T=T, q=q, K=cfg.K, l=cfg.l)


def run_strategy(cfg: ExperimentConfig, C: ClimateSet, strategy: str, budget: str, seed: int,
                 simulator: Simulator | None = None):
    """One cell: returns the strategy's archive and budget report."""
    simulator = simulator or Simulator()
    preset = cfg.preset_table[budget][strategy]
    if strategy == "random":
        return random_search(C, preset, cfg.alpha, seed, simulator)
    T, q = preset
    if strategy == "naive":
        return naive_mopso(C, OptimizerConfig(q=q, T=T, seed=seed, alpha=cfg.alpha), simulator)
    opt = OptimizerConfig(q=q, T=T, seed=seed, alpha=cfg.alpha, evaluator="subset-reconstructed")
    cluster_cfg = ClusteringConfig(K=cfg.K, T=cfg.cluster_iters, restarts=cfg.cluster_restarts, seed=seed)
    return two_step(C, cfg.l, cluster_cfg, cfg.weights_obj, opt, cfg.dtw_obj, cfg.method, simulator)


def reference_front(cfg: ExperimentConfig, C: ClimateSet):
    """Long full-evaluation MOPSO-CD at ``reference_factor`` times the largest budget."""
    N = len(C)
    largest = max(_budget_of(cfg, s, b, N) for s in cfg.strategies for b in cfg.budgets)
    q = cfg.reference_q
    T = max(1, math.ceil(cfg.reference_factor * largest / (q * N)) - 1)
    seed = int(np.random.SeedSequence([int(cfg.master_seed), 2**31]).generate_state(1)[0])
    ev = FullEvaluator(C, cfg.alpha, Simulator())
    archive, report = mopso_cd(ev, cfg=OptimizerConfig(q=q, T=T, seed=seed, alpha=cfg.alpha))
    logger.info("reference front: q=%d T=%d, %d simulations, %d points (approximate)",
                q, T, report.simulations, len(archive))
    return archive, report


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _quartiles(values: list[float]) -> tuple[float, float, float]:
    q1, med, q3 = np.percentile(np.asarray(values, dtype=float), [25, 50, 75])
    return float(q1), float(med), float(q3)


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else ""
    return str(v)


def run_experiment(cfg: ExperimentConfig, out_dir=None) -> dict:
    """Run the full grid and write the report files; returns a summary dict.

    A failing cell is recorded with ``status=error`` and its message; the
    remaining cells are unaffected.
    """
    out = Path(out_dir or cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    C = cfg.load_climate()
    N = len(C)
    cfg.to_json(out / "config.json")
    write_climate(C, out / "climate.csv")

    ref_archive, ref_report = reference_front(cfg, C)
    write_archive(ref_archive, out / "reference_front.csv")
    ref_F = ref_archive.objectives

    cells = [
        (b_idx, budget, rep, s_idx, strategy)
        for b_idx, budget in enumerate(cfg.budgets)
        for rep in range(cfg.replications)
        for s_idx, strategy in enumerate(cfg.strategies)
    ]

    def run_cell(cell):
        b_idx, budget, rep, s_idx, strategy = cell
        seed = cell_seed(cfg.master_seed, b_idx, rep, s_idx)
        try:
            archive, report = run_strategy(cfg, C, strategy, budget, seed)
            scored = rescore(archive, C, cfg.alpha, Simulator())
            return {"seed": seed, "archive": scored, "report": report, "error": None}
        except Exception as exc:  # recorded per cell, never fatal to the grid
            logger.exception("cell %s/%s/rep%d failed", budget, strategy, rep)
            return {"seed": seed, "archive": None, "report": None, "error": f"{type(exc).__name__}: {exc}"}

    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        results = list(pool.map(run_cell, cells))

    audit_rows, audit_json, indicator_rows = [], [], []
    batches = {}
    for b_idx, budget in enumerate(cfg.budgets):
        fronts = [
            r["archive"].objectives
            for c, r in zip(cells, results)
            if c[1] == budget and r["archive"] is not None and len(r["archive"])
        ]
        ref = reference_point(fronts + [ref_F])
        ideal = ideal_point(fronts + [ref_F])
        batches[budget] = {"reference_point": ref.tolist(), "ideal_point": ideal.tolist()}

    for (b_idx, budget, rep, s_idx, strategy), res in zip(cells, results):
        expected = _budget_of(cfg, strategy, budget, N)
        rel = Path("archives") / budget / strategy / f"rep{rep:02d}.csv"
        row = {
            "budget": budget, "strategy": strategy, "replication": rep, "seed": res["seed"],
        }
        if res["error"] is not None:
            audit_rows.append([budget, strategy, rep, res["seed"], expected, "", "", "error", res["error"]])
            audit_json.append({**row, "expected": expected, "status": "error", "error": res["error"]})
            indicator_rows.append([budget, strategy, rep, "", "", 0, "", "", "", "error", res["error"]])
            continue
        path = out / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        write_archive(res["archive"], path)
        report = res["report"]
        audit_rows.append([budget, strategy, rep, res["seed"], expected, report.simulations,
                           report.counted, "ok" if report.reconciled and report.simulations == expected
                           else "mismatch", ""])
        audit_json.append({**row, "expected": expected, "status": "ok", **report.to_dict()})
        F = res["archive"].objectives
        batch = batches[budget]
        hv = hypervolume(F, batch["reference_point"]) if len(F) else 0.0
        eps = epsilon_indicator(F, ref_F) if len(F) else math.inf
        r2 = r2_indicator(F, ideal=batch["ideal_point"]) if len(F) else math.inf
        indicator_rows.append([budget, strategy, rep, rel.as_posix(), _sha256(path), len(F),
                               hv, eps, r2, "ok", ""])

    _write_csv(out / "budget_audit.csv",
               ["budget", "strategy", "replication", "seed", "expected", "simulations",
                "counted", "status", "error"],
               [[_fmt(v) for v in r] for r in audit_rows])
    with open(out / "budget_audit.json", "w", encoding="utf-8") as fh:
        json.dump({"runs": audit_json, "reference": ref_report.to_dict()}, fh, indent=2)
        fh.write("\n")
    _write_csv(out / "indicators.csv",
               ["budget", "strategy", "replication", "archive", "archive_sha256", "n_points",
                *INDICATORS, "status", "error"],
               [[_fmt(v) for v in r] for r in indicator_rows])

    summary_rows = []
    for budget in cfg.budgets:
        for strategy in cfg.strategies:
            ok = [r for r in indicator_rows if r[0] == budget and r[1] == strategy and r[9] == "ok"]
            for j, name in enumerate(INDICATORS):
                vals = [r[6 + j] for r in ok]
                q1, med, q3 = _quartiles(vals) if vals else (math.nan,) * 3
                summary_rows.append([budget, strategy, name, len(vals), med, q1, q3])
    _write_csv(out / "summary.csv", ["budget", "strategy", "indicator", "n", "median", "q1", "q3"],
               [[_fmt(v) for v in r] for r in summary_rows])
    batches["reference_front"] = {"points": len(ref_archive), "simulations": ref_report.simulations,
                                  "approximate": True}
    with open(out / "batches.json", "w", encoding="utf-8") as fh:
        json.dump(batches, fh, indent=2)
        fh.write("\n")

    n_err = sum(r["error"] is not None for r in results)
    return {"out_dir": str(out), "cells": len(cells), "errors": n_err, "N": N}
