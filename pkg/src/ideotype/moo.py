"""Bi-objective phenotype optimization: maximize expected yield and CVaR.

Strategies:

* ``random``: Latin hypercube search, every point scored on all N series;
* ``naive``: MOPSO-CD scored on all N series;
* ``two-step``: MOPSO-CD scored on K representative series with
  reconstructed distributions, run twice, the second time with a residual
  basis rebuilt from the first run's Pareto set.

Every simulation goes through a :class:`~ideotype.cropmodel.Simulator`, whose
counter is reconciled against the closed-form budget in each report.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from sklearn.base import BaseEstimator

from .climate import ClimateSet
from .cluster import ClusterModel, ClusteringConfig, relational_kmeans
from .cropmodel import (
    DEFAULT_BOUNDS,
    PhenotypeBounds,
    PhenotypeError,
    Simulator,
    TRAITS,
    lhs_design,
    write_phenotypes,
    yield_matrix,
)
from .dissim import DissimWeights, DtwConfig, climate_dissimilarity
from .reconstruct import ResidualTable, compute_residuals, cvar_rows, reconstruct_atoms

logger = logging.getLogger(__name__)

STRATEGIES = ("random", "naive", "two-step")

# Table of (T, q) pairs per budget; random search lists its sample size.
BUDGET_PRESETS = {
    "very-small": {"random": 60, "naive": (12, 5), "two-step": (42, 9)},
    "small": {"random": 125, "naive": (25, 5), "two-step": (71, 14)},
    "medium": {"random": 500, "naive": (50, 10), "two-step": (152, 30)},
    "large": {"random": 2000, "naive": (100, 20), "two-step": (308, 61)},
}


@dataclass(frozen=True)
class ObjectivePoint:
    phenotype: np.ndarray
    e: float
    cvar: float
    sims_used: int = 0

    def __post_init__(self):
        if not (np.isfinite(self.e) and np.isfinite(self.cvar)):
            raise ValueError("objectives must be finite")
        if self.cvar > self.e + 1e-9 * max(1.0, abs(self.e)):
            raise ValueError(f"cvar {self.cvar!r} exceeds expectation {self.e!r}")

    @property
    def objectives(self) -> tuple[float, float]:
        return (self.e, self.cvar)


@dataclass
class ParetoArchive:
    members: list[ObjectivePoint]
    capacity: int | None = None

    def __len__(self) -> int:
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    @property
    def objectives(self) -> np.ndarray:
        return np.array([p.objectives for p in self.members], dtype=float).reshape(-1, 2)

    @property
    def phenotypes(self) -> np.ndarray:
        return np.array([p.phenotype for p in self.members], dtype=float).reshape(-1, len(TRAITS))


@dataclass(frozen=True)
class OptimizerConfig:
    q: int = 10
    T: int = 50
    seed: int = 0
    w: float = 0.4
    c1: float = 1.0
    c2: float = 1.0
    mutation_rate: float = 0.5
    mutation_decay: float = 1.5
    capacity: int | None = None
    alpha: float = 0.2
    evaluator: str = "full"
    debug: bool = False

    def __post_init__(self):
        if self.q < 2:
            raise ValueError("population size q must be >= 2")
        if self.T < 1:
            raise ValueError("iterations T must be >= 1")
        if not 0 <= self.w < 1:
            raise ValueError("inertia w must lie in [0, 1)")
        if self.c1 < 0 or self.c2 < 0:
            raise ValueError("c1 and c2 must be >= 0")
        if not 0 <= self.mutation_rate <= 1:
            raise ValueError("mutation_rate must lie in [0, 1]")
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        if self.evaluator not in ("full", "subset-reconstructed"):
            raise ValueError("evaluator must be 'full' or 'subset-reconstructed'")
        if self.capacity is not None and self.capacity < 1:
            raise ValueError("capacity must be >= 1")

    @property
    def archive_capacity(self) -> int:
        return self.capacity if self.capacity is not None else 2 * self.q


@dataclass
class BudgetReport:
    strategy: str
    simulations: int
    breakdown: dict = field(default_factory=dict)
    counted: int | None = None

    @property
    def reconciled(self) -> bool:
        return self.counted is None or self.counted == self.simulations

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "simulations": self.simulations,
            "counted": self.counted,
            "reconciled": self.reconciled,
            "breakdown": self.breakdown,
        }


def expected_budget(strategy: str, N: int, *, n: int = 0, T: int = 0, q: int = 0,
                    K: int = 10, l: int = 10) -> int:
    """Closed-form simulator call count of a strategy."""
    if strategy == "random":
        return n * N
    if strategy == "naive":
        return (T + 1) * q * N
    if strategy == "two-step":
        return 2 * l * N + 2 * (T + 1) * q * K
    raise ValueError(f"unknown strategy {strategy!r}")


def preset_budget(strategy: str, preset: str, N: int = 190, K: int = 10, l: int = 10) -> int:
    p = BUDGET_PRESETS[preset][strategy]
    if strategy == "random":
        return expected_budget(strategy, N, n=p)
    T, q = p
    return expected_budget(strategy, N, T=T, q=q, K=K, l=l)


class FullEvaluator:
    """Scores phenotypes on every climate series."""

    label = "full"

    def __init__(self, climate: ClimateSet, alpha: float = 0.2, simulator: Simulator | None = None):
        self.climate = climate
        self.alpha = alpha
        self.simulator = simulator or Simulator()

    @property
    def sims_per_point(self) -> int:
        return len(self.climate)

    def __call__(self, X: np.ndarray) -> np.ndarray:
        Y = self.simulator.grid(X, self.climate)
        return np.column_stack([Y.mean(axis=1), cvar_rows(Y, self.alpha)])


class ReconstructedEvaluator:
    """Scores phenotypes on the K representatives plus reconstructed residuals."""

    label = "subset-reconstructed"

    def __init__(self, representatives: ClimateSet, table: ResidualTable, alpha: float = 0.2,
                 simulator: Simulator | None = None):
        if len(representatives) != table.K:
            raise ValueError("representative set and residual table disagree on K")
        self.representatives = representatives
        self.table = table
        self.alpha = alpha
        self.simulator = simulator or Simulator()

    @property
    def sims_per_point(self) -> int:
        return self.table.K

    def __call__(self, X: np.ndarray) -> np.ndarray:
        y_rep = self.simulator.grid(X, self.representatives)
        atoms = reconstruct_atoms(y_rep, self.table)[0]
        return np.column_stack([atoms.mean(axis=1), cvar_rows(atoms, self.alpha)])


def _point(x, obj, sims) -> ObjectivePoint:
    return ObjectivePoint(np.asarray(x, dtype=float).copy(), float(obj[0]), float(obj[1]), sims)


def evaluate_full(x, C: ClimateSet, alpha: float = 0.2, simulator: Simulator | None = None) -> ObjectivePoint:
    ev = FullEvaluator(C, alpha, simulator)
    X = np.atleast_2d(_as_array(x))
    return _point(X[0], ev(X)[0], ev.sims_per_point)


def evaluate_reconstructed(x, omega_k: ClimateSet, table: ResidualTable, alpha: float = 0.2,
                           simulator: Simulator | None = None) -> ObjectivePoint:
    ev = ReconstructedEvaluator(omega_k, table, alpha, simulator)
    X = np.atleast_2d(_as_array(x))
    return _point(X[0], ev(X)[0], ev.sims_per_point)


def _as_array(x) -> np.ndarray:
    return x.to_array() if hasattr(x, "to_array") else np.asarray(x, dtype=float)


def dominates(a, b) -> bool:
    """Maximization dominance of objective vector ``a`` over ``b``."""
    return a[0] >= b[0] and a[1] >= b[1] and (a[0] > b[0] or a[1] > b[1])


def nondominated_mask(F: np.ndarray) -> np.ndarray:
    F = np.asarray(F, dtype=float).reshape(-1, 2)
    ge = (F[:, None, :] >= F[None, :, :]).all(axis=2)
    gt = (F[:, None, :] > F[None, :, :]).any(axis=2)
    dominated_by = ge & gt  # [i, j]: i dominates j
    return ~dominated_by.any(axis=0)


def pareto_filter(points, capacity: int | None = None) -> ParetoArchive:
    """Non-dominated subset, duplicate phenotypes dropped, sorted by e descending."""
    unique, seen = [], set()
    for p in points:
        key = np.asarray(p.phenotype, dtype=float).tobytes()
        if key not in seen:
            seen.add(key)
            unique.append(p)
    if not unique:
        return ParetoArchive([], capacity)
    F = np.array([p.objectives for p in unique])
    keep = [p for p, ok in zip(unique, nondominated_mask(F)) if ok]
    keep.sort(key=lambda p: (-p.e, -p.cvar))
    return ParetoArchive(keep, capacity)


def crowding_distance(front) -> np.ndarray:
    """Bi-objective crowding distance; boundary members get ``inf``."""
    F = front.objectives if isinstance(front, ParetoArchive) else np.asarray(
        [p.objectives if isinstance(p, ObjectivePoint) else p for p in front], dtype=float
    )
    F = F.reshape(-1, 2)
    n = F.shape[0]
    dist = np.zeros(n)
    if n <= 2:
        return np.full(n, np.inf)
    for m in range(F.shape[1]):
        order = np.argsort(F[:, m], kind="stable")
        f = F[order, m]
        dist[order[0]] = dist[order[-1]] = np.inf
        span = f[-1] - f[0]
        if span > 0:
            dist[order[1:-1]] += (f[2:] - f[:-2]) / span
    return dist


def _prune(archive: ParetoArchive, capacity: int) -> ParetoArchive:
    members = list(archive.members)
    while len(members) > capacity:
        cd = crowding_distance(members)
        del members[int(np.argmin(cd))]
    return ParetoArchive(members, capacity)


def _check_archive(archive: ParetoArchive) -> None:
    F = archive.objectives
    assert nondominated_mask(F).all(), "archive holds dominated members"
    assert archive.capacity is None or len(archive) <= archive.capacity


def mopso_cd(evaluator, bounds: PhenotypeBounds = DEFAULT_BOUNDS,
             cfg: OptimizerConfig | None = None,
             init: np.ndarray | None = None) -> tuple[ParetoArchive, BudgetReport]:
    """Multi-objective particle swarm with a crowding-distance archive.

    Particles start on a Latin hypercube with zero velocity. Each generation a
    particle follows its personal best and a leader drawn uniformly from the
    less crowded half of the archive; coordinates leaving the box are clipped
    and their velocity reversed. A decaying mutation perturbs one coordinate.
    Random draws come from a stream keyed by ``(seed, particle, generation)``.

    ``init`` replaces the Latin hypercube start with given ``(q, d)``
    positions, used to continue a swarm under new objective estimates.
    """
    archive, report, _ = _mopso_run(evaluator, bounds, cfg, init)
    return archive, report


def _mopso_run(evaluator, bounds, cfg, init):
    cfg = cfg or OptimizerConfig()
    lo, hi = bounds.lower, bounds.upper
    q, d = cfg.q, lo.size
    capacity = cfg.archive_capacity
    calls_before = evaluator.simulator.calls

    if init is None:
        X = lhs_design(bounds, q, np.random.default_rng(np.random.SeedSequence([int(cfg.seed), 2**32])))
    else:
        X = bounds.clip(np.array(init, dtype=float).reshape(q, d))
    V = np.zeros_like(X)
    F = evaluator(X)
    sims = evaluator.sims_per_point
    pbest, pbest_f = X.copy(), F.copy()
    archive = _prune(pareto_filter([_point(x, f, sims) for x, f in zip(X, F)]), capacity)
    n_evals = q

    for t in range(1, cfg.T + 1):
        cd = crowding_distance(archive)
        ranked = np.argsort(-cd, kind="stable")
        top = ranked[: max(1, math.ceil(len(ranked) / 2))]
        leaders = archive.phenotypes
        decay = (1.0 - t / cfg.T) ** cfg.mutation_decay
        rngs = [np.random.default_rng(np.random.SeedSequence([int(cfg.seed), p, t])) for p in range(q)]
        for p, rng in enumerate(rngs):
            leader = leaders[top[rng.integers(top.size)]]
            r1, r2 = rng.random(d), rng.random(d)
            V[p] = cfg.w * V[p] + cfg.c1 * r1 * (pbest[p] - X[p]) + cfg.c2 * r2 * (leader - X[p])
            x = X[p] + V[p]
            out = (x < lo) | (x > hi)
            V[p, out] *= -1.0
            X[p] = np.clip(x, lo, hi)
            if rng.random() < cfg.mutation_rate * decay:
                k = rng.integers(d)
                half = 0.5 * (hi[k] - lo[k]) * decay
                X[p, k] = rng.uniform(max(lo[k], X[p, k] - half), min(hi[k], X[p, k] + half))
        F = evaluator(X)
        n_evals += q
        for p, rng in enumerate(rngs):
            if dominates(F[p], pbest_f[p]) or (
                not dominates(pbest_f[p], F[p]) and rng.random() < 0.5
            ):
                pbest[p], pbest_f[p] = X[p], F[p]
        new = [_point(x, f, sims) for x, f in zip(X, F)]
        archive = _prune(pareto_filter(list(archive) + new), capacity)
        if cfg.debug:
            _check_archive(archive)

    total = n_evals * sims
    report = BudgetReport(
        strategy="mopso-cd",
        simulations=total,
        breakdown={"evaluations": n_evals, "sims_per_evaluation": sims},
        counted=evaluator.simulator.calls - calls_before,
    )
    return archive, report, pbest


def random_search(C: ClimateSet, n: int, alpha: float = 0.2, seed: int = 0,
                  simulator: Simulator | None = None,
                  bounds: PhenotypeBounds = DEFAULT_BOUNDS) -> tuple[ParetoArchive, BudgetReport]:
    if n < 1:
        raise ValueError("random search needs n >= 1")
    ev = FullEvaluator(C, alpha, simulator)
    calls_before = ev.simulator.calls
    X = lhs_design(bounds, n, np.random.default_rng(seed))
    F = ev(X)
    archive = pareto_filter([_point(x, f, ev.sims_per_point) for x, f in zip(X, F)])
    report = BudgetReport(
        strategy="random",
        simulations=expected_budget("random", len(C), n=n),
        breakdown={"evaluations": n, "sims_per_evaluation": len(C)},
        counted=ev.simulator.calls - calls_before,
    )
    return archive, report


def naive_mopso(C: ClimateSet, cfg: OptimizerConfig, simulator: Simulator | None = None,
                bounds: PhenotypeBounds = DEFAULT_BOUNDS) -> tuple[ParetoArchive, BudgetReport]:
    ev = FullEvaluator(C, cfg.alpha, simulator)
    archive, report = mopso_cd(ev, bounds, cfg)
    report.strategy = "naive"
    return archive, report


def select_basis_from_front(archive: ParetoArchive, l: int) -> np.ndarray:
    """``l`` phenotypes equally spaced along the front by expectation.

    Short fronts are padded by alternately repeating the highest-e and
    lowest-e members.
    """
    members = sorted(archive.members, key=lambda p: p.e)
    n = len(members)
    if n == 0:
        raise ValueError("empty Pareto archive")
    if n >= l:
        idx = np.round(np.linspace(0, n - 1, l)).astype(int)
        chosen = [members[i] for i in idx]
    else:
        chosen = list(members)
        extremes = [members[-1], members[0]]
        while len(chosen) < l:
            chosen.append(extremes[(len(chosen) - n) % 2])
    return np.array([p.phenotype for p in chosen])


@dataclass
class TwoStepState:
    """Intermediate products of a two-step run, kept for inspection."""

    clusters: ClusterModel
    first_table: ResidualTable
    second_table: ResidualTable
    first_archive: ParetoArchive
    second_basis: np.ndarray


def two_step(C: ClimateSet, basis_size: int = 10, cluster_cfg: ClusteringConfig | None = None,
             weights: DissimWeights | None = None, cfg: OptimizerConfig | None = None,
             dtw: DtwConfig | None = None, method: str = "rescaled",
             simulator: Simulator | None = None, bounds: PhenotypeBounds = DEFAULT_BOUNDS,
             return_state: bool = False):
    """Two-step MOPSO-CD on a representative climate subset.

    1. LHS basis of ``basis_size`` phenotypes, yields on all N series.
    2. Combined DTW/model dissimilarity, relational k-means, medoids.
    3. Residual table from the basis yields.
    4. MOPSO-CD on reconstructed objectives.
    5. New basis from the run-1 front, yields on all N series.
    6. Residual table rebuilt, MOPSO-CD again; its archive is returned.

    The second run continues from the first run's personal bests rather than
    a fresh Latin hypercube, so the swarm stays in the region the new basis
    was drawn from. Old objective values are discarded and re-evaluated.
    """
    cfg = cfg or OptimizerConfig(evaluator="subset-reconstructed")
    cluster_cfg = cluster_cfg or ClusteringConfig()
    simulator = simulator or Simulator()
    calls_before = simulator.calls
    N, l = len(C), basis_size
    seq = np.random.SeedSequence([int(cfg.seed), 7])
    basis_seed, run1_seed, run2_seed = (int(s.generate_state(1)[0]) for s in seq.spawn(3))

    B = lhs_design(bounds, l, np.random.default_rng(basis_seed))
    Y1 = yield_matrix(B, C, simulator)
    delta, _ = climate_dissimilarity(C, Y1, weights, dtw)
    clusters = relational_kmeans(delta, cluster_cfg)
    omega = C.subset(clusters.representatives)
    table1 = compute_residuals(Y1, clusters, method)

    ev1 = ReconstructedEvaluator(omega, table1, cfg.alpha, simulator)
    archive1, rep1, pbest1 = _mopso_run(ev1, bounds, _with_seed(cfg, run1_seed), None)

    B2 = select_basis_from_front(archive1, l)
    Y2 = yield_matrix(B2, C, simulator)
    table2 = compute_residuals(Y2, clusters, method)
    ev2 = ReconstructedEvaluator(omega, table2, cfg.alpha, simulator)
    archive2, rep2 = mopso_cd(ev2, bounds, _with_seed(cfg, run2_seed), init=pbest1)

    K = clusters.K
    report = BudgetReport(
        strategy="two-step",
        simulations=expected_budget("two-step", N, T=cfg.T, q=cfg.q, K=K, l=l),
        breakdown={
            "basis_1": l * N,
            "run_1": rep1.simulations,
            "basis_2": l * N,
            "run_2": rep2.simulations,
            "K": K,
            "l": l,
        },
        counted=simulator.calls - calls_before,
    )
    if return_state:
        return archive2, report, TwoStepState(clusters, table1, table2, archive1, B2)
    return archive2, report


def _with_seed(cfg: OptimizerConfig, seed: int) -> OptimizerConfig:
    return replace(cfg, seed=seed)


def write_archive(archive: ParetoArchive, path) -> None:
    """Archive CSV: the eight trait columns followed by ``e`` and ``cvar``."""
    F = archive.objectives
    write_phenotypes(archive.phenotypes, path, {"e": F[:, 0], "cvar": F[:, 1]})


def read_archive(path, capacity: int | None = None) -> ParetoArchive:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = (set(TRAITS) | {"e", "cvar"}) - set(reader.fieldnames or ())
        if missing:
            raise PhenotypeError(f"{path}: missing columns {sorted(missing)}")
        members = [
            ObjectivePoint(
                np.array([float(row[t]) for t in TRAITS]), float(row["e"]), float(row["cvar"])
            )
            for row in reader
        ]
    return ParetoArchive(members, capacity)


def rescore(archive: ParetoArchive, C: ClimateSet, alpha: float = 0.2,
            simulator: Simulator | None = None) -> ParetoArchive:
    """Re-evaluate archive members on all series (``pareto_filter`` applied)."""
    if len(archive) == 0:
        return ParetoArchive([], archive.capacity)
    ev = FullEvaluator(C, alpha, simulator)
    X = archive.phenotypes
    F = ev(X)
    return pareto_filter([_point(x, f, ev.sims_per_point) for x, f in zip(X, F)])


class PhenotypeOptimizer(BaseEstimator):
    """Scikit-learn style entry point for the three strategies.

    ``fit(climate)`` runs the strategy and exposes ``archive_``, ``budget_``,
    ``pareto_set_`` (phenotypes) and ``pareto_front_`` (objectives).
    """

    def __init__(self, strategy="two-step", n_iter=42, pop_size=9, n_samples=60, alpha=0.2,
                 basis_size=10, n_clusters=10, method="rescaled", random_state=0):
        self.strategy = strategy
        self.n_iter = n_iter
        self.pop_size = pop_size
        self.n_samples = n_samples
        self.alpha = alpha
        self.basis_size = basis_size
        self.n_clusters = n_clusters
        self.method = method
        self.random_state = random_state

    def fit(self, X, y=None):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}")
        if not isinstance(X, ClimateSet):
            X = ClimateSet.from_array(X)
        seed = 0 if self.random_state is None else int(self.random_state)
        self.simulator_ = Simulator()
        if self.strategy == "random":
            archive, report = random_search(X, self.n_samples, self.alpha, seed, self.simulator_)
        else:
            cfg = OptimizerConfig(q=self.pop_size, T=self.n_iter, seed=seed, alpha=self.alpha,
                                  evaluator="full" if self.strategy == "naive" else "subset-reconstructed")
            if self.strategy == "naive":
                archive, report = naive_mopso(X, cfg, self.simulator_)
            else:
                archive, report = two_step(
                    X, self.basis_size, ClusteringConfig(K=self.n_clusters, seed=seed), cfg=cfg,
                    method=self.method, simulator=self.simulator_,
                )
        self.archive_ = archive
        self.budget_ = report
        self.pareto_set_ = archive.phenotypes
        self.pareto_front_ = archive.objectives
        return self
