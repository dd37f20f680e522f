"""Relational k-means on a dissimilarity matrix and medoid selection.

Prototypes are never formed in data space: each prototype ``k`` is a weight
vector ``beta[k]`` on the probability simplex over the N elements, and the
dissimilarity of element ``i`` to it is::

    beta[k] @ D[:, i] - 0.5 * beta[k] @ D @ beta[k]

Training is the online scheme (random element, move its closest prototype
toward it with a decaying step), followed by a synchronous batch refinement
that alternates assignment and uniform-weight prototypes until the partition
is stable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.utils.validation import check_is_fitted

from .dissim import DissimilarityMatrix, check_dissimilarity

_MAX_REFINE = 100


@dataclass(frozen=True)
class ClusteringConfig:
    K: int = 10
    T: int = 500
    restarts: int = 10
    eps0: float = 0.5
    c0: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if self.T < 1:
            raise ValueError("T must be >= 1")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if not 0 < self.eps0 <= 1:
            raise ValueError("eps0 must lie in (0, 1]")
        if not self.c0 > 0:
            raise ValueError("c0 must be > 0")


@dataclass(frozen=True)
class ClusterModel:
    beta: np.ndarray
    assignment: np.ndarray
    class_sizes: np.ndarray
    representatives: np.ndarray
    energy: float
    ids: tuple[str, ...] | None = None
    restart_energies: np.ndarray | None = None

    @property
    def K(self) -> int:
        return self.beta.shape[0]

    @property
    def N(self) -> int:
        return self.assignment.shape[0]

    def members(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == k)

    def to_dict(self) -> dict:
        ids = self.ids or tuple(str(i) for i in range(self.N))
        return {
            "assignment": [int(a) for a in self.assignment],
            "class_sizes": [int(n) for n in self.class_sizes],
            "representatives": [int(r) for r in self.representatives],
            "representative_ids": [ids[r] for r in self.representatives],
            "series_ids": list(ids),
            "energy": float(self.energy),
        }

    def to_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    @classmethod
    def from_json(cls, path) -> "ClusterModel":
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
        assignment = np.array(d["assignment"], dtype=int)
        K = len(d["class_sizes"])
        beta = np.zeros((K, assignment.size))
        for k in range(K):
            members = assignment == k
            beta[k, members] = 1.0 / members.sum()
        return cls(
            beta=beta,
            assignment=assignment,
            class_sizes=np.array(d["class_sizes"], dtype=int),
            representatives=np.array(d["representatives"], dtype=int),
            energy=float(d["energy"]),
            ids=tuple(d.get("series_ids") or ()) or None,
        )


def prototype_distances(D: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """``(N, K)`` dissimilarities of every element to every prototype."""
    half_self = 0.5 * np.einsum("kn,nm,km->k", beta, D, beta)
    return (beta @ D).T - half_self


def energy(D: np.ndarray, beta: np.ndarray, assignment: np.ndarray) -> float:
    dist = prototype_distances(D, beta)
    return float(dist[np.arange(dist.shape[0]), assignment].sum())


def _uniform_prototypes(assignment: np.ndarray, K: int) -> np.ndarray:
    beta = np.zeros((K, assignment.size))
    for k in range(K):
        members = assignment == k
        if members.any():
            beta[k, members] = 1.0 / members.sum()
    return beta


def _repair_empty(D, beta, assignment) -> np.ndarray:
    """Reseed empty classes on the element worst served by its prototype."""
    K = beta.shape[0]
    for _ in range(K):
        sizes = np.bincount(assignment, minlength=K)
        empty = np.flatnonzero(sizes == 0)
        if empty.size == 0:
            break
        k = empty[0]
        dist = prototype_distances(D, beta)
        own = dist[np.arange(assignment.size), assignment]
        # only take from classes that keep at least one member
        own = np.where(sizes[assignment] > 1, own, -np.inf)
        i = int(np.argmax(own))
        beta[k] = 0.0
        beta[k, i] = 1.0
        assignment = assignment.copy()
        assignment[i] = k
    return assignment


def _single_run(D: np.ndarray, cfg: ClusteringConfig, rng: np.random.Generator, debug: bool):
    N, K = D.shape[0], cfg.K
    beta = rng.exponential(size=(K, N))
    beta /= beta.sum(axis=1, keepdims=True)
    half_self = 0.5 * np.einsum("kn,nm,km->k", beta, D, beta)
    for t in range(1, cfg.T + 1):
        i = int(rng.integers(N))
        j = int(np.argmin(beta @ D[:, i] - half_self))
        r = cfg.eps0 / (1.0 + cfg.c0 * t / K)
        beta[j] *= 1.0 - r
        beta[j, i] += r
        half_self[j] = 0.5 * beta[j] @ D @ beta[j]
        if debug:
            assert (beta[j] >= 0).all() and abs(beta[j].sum() - 1.0) < 1e-9

    assignment = np.argmin(prototype_distances(D, beta), axis=1)
    assignment = _repair_empty(D, beta, assignment)
    for _ in range(_MAX_REFINE):
        beta = _uniform_prototypes(assignment, K)
        new = np.argmin(prototype_distances(D, beta), axis=1)
        new = _repair_empty(D, beta, new)
        if np.array_equal(new, assignment):
            break
        assignment = new
    return beta, assignment, energy(D, beta, assignment)


def canonical_order(D: np.ndarray) -> np.ndarray:
    """Permutation-invariant element order: lexicographic on sorted rows."""
    keys = np.sort(D, axis=1)
    return np.lexsort(keys.T[::-1])


def select_representatives(D, assignment, n_classes: int | None = None) -> np.ndarray:
    """Medoid of each class: the member with the smallest within-class row sum."""
    D = D.values if isinstance(D, DissimilarityMatrix) else np.asarray(D, dtype=float)
    assignment = np.asarray(assignment, dtype=int)
    if assignment.shape != (D.shape[0],):
        raise ValueError("assignment length does not match the matrix")
    K = int(assignment.max()) + 1 if n_classes is None else n_classes
    reps = np.empty(K, dtype=int)
    for k in range(K):
        members = np.flatnonzero(assignment == k)
        if members.size == 0:
            raise ValueError(f"class {k} is empty")
        sums = D[np.ix_(members, members)].sum(axis=1)
        reps[k] = members[int(np.argmin(sums))]
    return reps


def relational_kmeans(D, cfg: ClusteringConfig | None = None, debug: bool = False) -> ClusterModel:
    """Best-energy relational k-means over ``cfg.restarts`` seeded runs.

    Runs operate on a canonically reordered matrix, so relabeling the input
    permutes the result consistently (up to exact ties between rows).
    """
    cfg = cfg or ClusteringConfig()
    ids = D.ids if isinstance(D, DissimilarityMatrix) else None
    D = D.values if isinstance(D, DissimilarityMatrix) else check_dissimilarity(D)
    N = D.shape[0]
    if cfg.K > N:
        raise ValueError(f"K={cfg.K} exceeds the number of elements N={N}")
    order = canonical_order(D)
    Dc = D[np.ix_(order, order)]

    best = None
    restart_energies = []
    for r in range(cfg.restarts):
        rng = np.random.default_rng(np.random.SeedSequence([int(cfg.seed), r]))
        beta_c, assign_c, e = _single_run(Dc, cfg, rng, debug)
        restart_energies.append(e)
        if best is None or e < best[2]:
            best = (beta_c, assign_c, e)

    beta_c, assign_c, e = best
    beta = np.empty_like(beta_c)
    beta[:, order] = beta_c
    assignment = np.empty(N, dtype=int)
    assignment[order] = assign_c
    sizes = np.bincount(assignment, minlength=cfg.K)
    reps = select_representatives(D, assignment, cfg.K)
    return ClusterModel(beta, assignment, sizes, reps, e, ids, np.array(restart_energies))


class RelationalKMeans(ClusterMixin, BaseEstimator):
    """Scikit-learn style wrapper around :func:`relational_kmeans`.

    ``fit`` takes a precomputed ``(N, N)`` dissimilarity matrix. ``predict``
    takes rows of dissimilarities from new elements to the N training
    elements and returns the closest prototype.
    """

    def __init__(self, n_clusters=10, n_iter=500, n_restarts=10, eps0=0.5, c0=1.0, random_state=0):
        self.n_clusters = n_clusters
        self.n_iter = n_iter
        self.n_restarts = n_restarts
        self.eps0 = eps0
        self.c0 = c0
        self.random_state = random_state

    def fit(self, X, y=None):
        cfg = ClusteringConfig(
            K=self.n_clusters,
            T=self.n_iter,
            restarts=self.n_restarts,
            eps0=self.eps0,
            c0=self.c0,
            seed=0 if self.random_state is None else int(self.random_state),
        )
        D = check_dissimilarity(X)
        model = relational_kmeans(D, cfg)
        self.model_ = model
        self.beta_ = model.beta
        self.labels_ = model.assignment
        self.class_sizes_ = model.class_sizes
        self.representatives_ = model.representatives
        self.energy_ = model.energy
        self.dissimilarity_ = D
        return self

    def predict(self, X):
        check_is_fitted(self, "beta_")
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.beta_.shape[1]:
            raise ValueError(f"expected {self.beta_.shape[1]} dissimilarities per row")
        half_self = 0.5 * np.einsum("kn,nm,km->k", self.beta_, self.dissimilarity_, self.beta_)
        return np.argmin(X @ self.beta_.T - half_self, axis=1)
