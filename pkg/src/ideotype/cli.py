"""Command-line entry point: ``ideotype <subcommand> ...``.

Each subcommand reads and writes the CSV/JSON formats of the library, so the
pipeline can be run step by step::

    ideotype gen-climate --config gen.json --seed 1 --out climate.csv
    ideotype simulate --climate climate.csv --phenotypes basis.csv --out basis_yields.csv
    ideotype dissim --climate climate.csv --basis-yields basis_yields.csv --out delta.csv
    ideotype cluster --dissim delta.csv --k 10 --seed 1 --out clusters.json
    ideotype residuals --basis-yields basis_yields.csv --clusters clusters.json --out residuals.json
    ideotype reconstruct --rep-yields rep.csv --residuals residuals.json --alpha 0.2
    ideotype optimize --strategy two-step --budget-preset very-small --climate climate.csv --out run/
    ideotype evaluate --fronts run/archive.csv --reference ref.csv --out indicators.csv
    ideotype run --config experiment.json --seed 0 --out results/
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .climate import GeneratorConfig, default_generator_config, generate_climate, load_climate, write_climate
from .cluster import ClusterModel, ClusteringConfig, relational_kmeans
from .cropmodel import YieldMatrix, read_phenotypes, yield_matrix
from .dissim import DissimWeights, DissimilarityMatrix, DtwConfig, climate_dissimilarity
from .experiment import ExperimentConfig, run_experiment
from .indicators import epsilon_indicator, hypervolume, ideal_point, r2_indicator, reference_point
from .moo import (
    BUDGET_PRESETS,
    STRATEGIES,
    OptimizerConfig,
    naive_mopso,
    random_search,
    two_step,
    write_archive,
)
from .reconstruct import METHODS, ResidualTable, compute_residuals, cvar, expectation, quantile, reconstruct_sample

logger = logging.getLogger("ideotype")


def _load_json(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def cmd_gen_climate(args) -> int:
    gen = GeneratorConfig.from_dict(_load_json(args.config)) if args.config else default_generator_config()
    C = generate_climate(gen, args.seed)
    write_climate(C, args.out)
    print(f"wrote {len(C)} series of {C.length} days to {args.out}")
    return 0


def cmd_simulate(args) -> int:
    C = load_climate(args.climate, args.length)
    X = read_phenotypes(args.phenotypes)
    Y = yield_matrix(X, C)
    Y.to_csv(args.out)
    print(f"wrote {Y.shape[0]}x{Y.shape[1]} yield matrix to {args.out}")
    return 0


def cmd_dissim(args) -> int:
    C = load_climate(args.climate, args.length)
    Y = YieldMatrix.from_csv(args.basis_yields)
    if list(Y.series_ids) != list(C.ids):
        raise ValueError("basis yield columns do not match the climate series ids")
    weights = DissimWeights(**_load_json(args.weights)) if args.weights else DissimWeights()
    dtw = DtwConfig(_load_json(args.windows)) if args.windows else DtwConfig()
    combined, raw = climate_dissimilarity(C, Y, weights, dtw)
    combined.to_csv(args.out)
    if args.intermediates:
        folder = Path(args.intermediates)
        folder.mkdir(parents=True, exist_ok=True)
        for name, D in raw.items():
            D.to_csv(folder / f"{name}.csv")
    print(f"wrote {len(combined)}x{len(combined)} dissimilarity to {args.out}")
    return 0


def cmd_cluster(args) -> int:
    D = DissimilarityMatrix.from_csv(args.dissim)
    cfg = ClusteringConfig(K=args.k, T=args.iters, restarts=args.restarts, seed=args.seed)
    model = relational_kmeans(D, cfg)
    model.to_json(args.out)
    print(f"K={model.K} energy={model.energy:.6g} sizes={model.class_sizes.tolist()}")
    return 0


def cmd_residuals(args) -> int:
    Y = YieldMatrix.from_csv(args.basis_yields)
    model = ClusterModel.from_json(args.clusters)
    if model.ids is not None and list(model.ids) != list(Y.series_ids):
        raise ValueError("cluster series ids do not match the basis yield columns")
    table = compute_residuals(Y, model, args.method)
    table.to_json(args.out)
    print(f"wrote {args.method} residual table (K={table.K}, N={table.N}) to {args.out}")
    return 0


def _read_rep_yields(path) -> np.ndarray:
    """Rows of K representative yields; an optional header row is skipped."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r]
    try:
        float(rows[0][0])
    except ValueError:
        rows = rows[1:]
    return np.array([[float(v) for v in r] for r in rows], dtype=float)


def cmd_reconstruct(args) -> int:
    table = ResidualTable.from_json(args.residuals)
    if args.method:
        table = table.with_method(args.method)
    y_rep = _read_rep_yields(args.rep_yields)
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(["row", "E", f"Q_{args.alpha:g}", f"CVaR_{args.alpha:g}"])
    for i, row in enumerate(y_rep):
        sample = reconstruct_sample(row, table)
        writer.writerow([
            i,
            f"{expectation(sample):.6f}",
            f"{quantile(sample, args.alpha):.6f}",
            f"{cvar(sample, args.alpha):.6f}",
        ])
    return 0


def cmd_optimize(args) -> int:
    C = load_climate(args.climate, args.length)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    preset = BUDGET_PRESETS[args.budget_preset][args.strategy]
    if args.strategy == "random":
        archive, report = random_search(C, preset, args.alpha, args.seed)
    else:
        T, q = preset
        if args.strategy == "naive":
            archive, report = naive_mopso(C, OptimizerConfig(q=q, T=T, seed=args.seed, alpha=args.alpha))
        else:
            cfg = OptimizerConfig(q=q, T=T, seed=args.seed, alpha=args.alpha, evaluator="subset-reconstructed")
            archive, report = two_step(C, args.basis_size, ClusteringConfig(K=args.k, seed=args.seed), cfg=cfg)
    write_archive(archive, out / "archive.csv")
    with open(out / "budget.json", "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2)
        fh.write("\n")
    print(f"{args.strategy}: {len(archive)} archive points, {report.simulations} simulations")
    return 0


def _read_front(path) -> np.ndarray:
    """Objectives from an archive CSV, or any CSV with ``e`` and ``cvar`` columns."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if not {"e", "cvar"} <= set(reader.fieldnames or ()):
            raise ValueError(f"{path}: front CSV needs 'e' and 'cvar' columns")
        return np.array([[float(r["e"]), float(r["cvar"])] for r in reader], dtype=float).reshape(-1, 2)


def cmd_evaluate(args) -> int:
    fronts = [_read_front(p) for p in args.fronts]
    reference = _read_front(args.reference)
    batch = fronts + [reference]
    ref_point = reference_point(batch)
    ideal = ideal_point(batch)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["front", "n_points", "hypervolume", "epsilon", "r2"])
        for path, F in zip(args.fronts, fronts):
            writer.writerow([
                path,
                len(F),
                repr(hypervolume(F, ref_point)),
                repr(epsilon_indicator(F, reference)),
                repr(r2_indicator(F, ideal=ideal)),
            ])
    print(f"reference point {ref_point.tolist()}, ideal {ideal.tolist()}")
    return 0


def cmd_run(args) -> int:
    cfg = ExperimentConfig.from_json(args.config)
    if args.seed is not None:
        cfg.master_seed = args.seed
    if args.workers is not None:
        cfg.workers = args.workers
    out = args.out or cfg.out_dir
    cfg.out_dir = str(out)
    result = run_experiment(cfg, out)
    print(json.dumps(result))
    return 1 if result["errors"] else 0


def cmd_init_config(args) -> int:
    """Write an experiment config with every default spelled out."""
    cfg = ExperimentConfig(generator=default_generator_config().to_dict())
    cfg.to_json(args.out)
    print(f"wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ideotype", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("gen-climate", help="generate a synthetic climate set")
    s.add_argument("--config", help="generator JSON (default: five built-in sites, 38 years)")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_gen_climate)

    s = sub.add_parser("simulate", help="yield matrix of phenotypes x climate series")
    s.add_argument("--climate", required=True)
    s.add_argument("--phenotypes", required=True)
    s.add_argument("--length", type=int, default=180, help="expected series length (days)")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("dissim", help="combined climate dissimilarity matrix")
    s.add_argument("--climate", required=True)
    s.add_argument("--basis-yields", required=True)
    s.add_argument("--weights", help="JSON with tmin,tmax,rad,etp,rain,model weights")
    s.add_argument("--windows", help="JSON with DTW half-widths per variable")
    s.add_argument("--length", type=int, default=180)
    s.add_argument("--intermediates", help="directory for the six raw matrices")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_dissim)

    s = sub.add_parser("cluster", help="relational k-means with medoid representatives")
    s.add_argument("--dissim", required=True)
    s.add_argument("--k", type=int, default=10)
    s.add_argument("--iters", type=int, default=500)
    s.add_argument("--restarts", type=int, default=10)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_cluster)

    s = sub.add_parser("residuals", help="residual table from basis yields and clusters")
    s.add_argument("--basis-yields", required=True)
    s.add_argument("--clusters", required=True)
    s.add_argument("--method", choices=METHODS, default="rescaled")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_residuals)

    s = sub.add_parser("reconstruct", help="E, quantile and CVaR from representative yields")
    s.add_argument("--rep-yields", required=True, help="CSV, one row of K yields per phenotype")
    s.add_argument("--residuals", required=True)
    s.add_argument("--alpha", type=float, default=0.2)
    s.add_argument("--method", choices=METHODS, default=None,
                   help="override the method stored in the residual table")
    s.set_defaults(func=cmd_reconstruct)

    s = sub.add_parser("optimize", help="run one strategy at a budget preset")
    s.add_argument("--strategy", choices=STRATEGIES, required=True)
    s.add_argument("--budget-preset", choices=tuple(BUDGET_PRESETS), default="very-small")
    s.add_argument("--climate", required=True)
    s.add_argument("--length", type=int, default=180)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--alpha", type=float, default=0.2)
    s.add_argument("--k", type=int, default=10, help="representative count (two-step)")
    s.add_argument("--basis-size", type=int, default=10, help="basis size l (two-step)")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_optimize)

    s = sub.add_parser("evaluate", help="hypervolume, epsilon and R2 per front")
    s.add_argument("--fronts", nargs="+", required=True)
    s.add_argument("--reference", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("run", help="replicated strategy comparison from a JSON config")
    s.add_argument("--config", required=True)
    s.add_argument("--seed", type=int, default=None, help="master seed (overrides the config)")
    s.add_argument("--workers", type=int, default=None)
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("init-config", help="write an experiment config with all defaults")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_init_config)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
