"""Non-parametric reconstruction of a yield distribution from K evaluations.

The yield distribution over all N climate series is modelled as a mixture of
the K classes. Within class ``k`` a yield is the value at the representative
series plus a residual learned once on a phenotype basis:

* ``naive``: residuals averaged over the basis, added as-is;
* ``rescaled``: residuals divided by each basis phenotype's spread of
  representative yields before averaging, and multiplied back by the query's
  own spread.

Atoms are enumerated rather than sampled, so the estimators see the exact
mixture.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .cluster import ClusterModel
from .cropmodel import YieldMatrix

logger = logging.getLogger(__name__)

EPS_NUM = 1e-12
METHODS = ("naive", "rescaled")


def weighted_spread(y_rep, class_sizes) -> np.ndarray:
    """Class-size weighted standard deviation of representative yields.

    Works row-wise on a ``(m, K)`` array; returns shape ``(m,)`` (or a scalar
    array for a 1-D input).
    """
    y_rep = np.asarray(y_rep, dtype=float)
    w = np.asarray(class_sizes, dtype=float)
    w = w / w.sum()
    mean = (y_rep * w).sum(axis=-1, keepdims=True)
    return np.sqrt(((y_rep - mean) ** 2 * w).sum(axis=-1))


@dataclass(frozen=True)
class ResidualTable:
    """Per-class residual profiles learned on a phenotype basis.

    ``naive[k]`` and ``rescaled[k]`` are aligned with ``members[k]`` (series
    indices of class ``k``); ``rescaled`` is ``None`` when every basis
    phenotype had a degenerate spread.
    """

    method: str
    members: tuple[np.ndarray, ...]
    representatives: np.ndarray
    naive: tuple[np.ndarray, ...]
    rescaled: tuple[np.ndarray, ...] | None
    basis_scales: np.ndarray
    skipped: tuple[int, ...] = ()
    series_ids: tuple[str, ...] | None = None
    _flat: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        if self.method == "rescaled" and self.rescaled is None:
            raise ValueError("rescaled table without rescaled residuals")
        order = np.concatenate(self.members)
        labels = np.concatenate([np.full(m.size, k) for k, m in enumerate(self.members)])
        flat = {
            "order": order,
            "labels": labels,
            "naive": np.concatenate(self.naive),
            "rescaled": None if self.rescaled is None else np.concatenate(self.rescaled),
        }
        object.__setattr__(self, "_flat", flat)

    @property
    def K(self) -> int:
        return len(self.members)

    @property
    def N(self) -> int:
        return int(sum(m.size for m in self.members))

    @property
    def class_sizes(self) -> np.ndarray:
        return np.array([m.size for m in self.members])

    def with_method(self, method: str) -> "ResidualTable":
        return ResidualTable(
            method, self.members, self.representatives, self.naive, self.rescaled,
            self.basis_scales, self.skipped, self.series_ids,
        )

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "class_sizes": [int(s) for s in self.class_sizes],
            "members": [[int(i) for i in m] for m in self.members],
            "representatives": [int(r) for r in self.representatives],
            "naive": [[float(v) for v in r] for r in self.naive],
            "rescaled": None if self.rescaled is None else [[float(v) for v in r] for r in self.rescaled],
            "basis_scales": [float(s) for s in self.basis_scales],
            "skipped": list(self.skipped),
            "series_ids": None if self.series_ids is None else list(self.series_ids),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ResidualTable":
        return cls(
            method=d["method"],
            members=tuple(np.array(m, dtype=int) for m in d["members"]),
            representatives=np.array(d["representatives"], dtype=int),
            naive=tuple(np.array(r, dtype=float) for r in d["naive"]),
            rescaled=None if d["rescaled"] is None else tuple(np.array(r, dtype=float) for r in d["rescaled"]),
            basis_scales=np.array(d["basis_scales"], dtype=float),
            skipped=tuple(d.get("skipped", ())),
            series_ids=None if d.get("series_ids") is None else tuple(d["series_ids"]),
        )

    def to_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    @classmethod
    def from_json(cls, path) -> "ResidualTable":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class ReconstructedYield:
    values: np.ndarray
    weights: np.ndarray
    labels: np.ndarray
    n_clamped: int = 0
    fell_back: bool = False

    def __len__(self) -> int:
        return self.values.size


def compute_residuals(Y, model: ClusterModel, method: str = "rescaled") -> ResidualTable:
    """Residual profiles of every class from basis yields ``Y`` (l x N)."""
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}")
    ids = None
    if isinstance(Y, YieldMatrix):
        ids = Y.series_ids
        Y = Y.values
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    l, N = Y.shape
    if l < 1:
        raise ValueError("basis must hold at least one phenotype")
    if N != model.N:
        raise ValueError(f"yield matrix has {N} series, clustering has {model.N}")
    members = tuple(model.members(k) for k in range(model.K))
    if any(m.size == 0 for m in members):
        raise ValueError("every class must be non-empty")
    reps = np.asarray(model.representatives, dtype=int)
    sizes = np.array([m.size for m in members])

    y_rep = Y[:, reps]  # (l, K)
    scales = weighted_spread(y_rep, sizes)  # (l,)
    keep = scales > EPS_NUM
    skipped = tuple(int(i) for i in np.flatnonzero(~keep))
    if skipped:
        logger.info("basis phenotypes %s have degenerate spread and are skipped", skipped)

    naive, rescaled = [], []
    for k, m in enumerate(members):
        eps = Y[:, m] - y_rep[:, k : k + 1]  # (l, N_k)
        naive.append(eps.mean(axis=0))
        if keep.any():
            rescaled.append((eps[keep] / scales[keep, None]).mean(axis=0))
    if method == "rescaled" and not keep.any():
        raise ValueError("all basis phenotypes have a degenerate spread; rescaled method unavailable")
    return ResidualTable(
        method=method,
        members=members,
        representatives=reps,
        naive=tuple(naive),
        rescaled=tuple(rescaled) if keep.any() else None,
        basis_scales=scales,
        skipped=skipped,
        series_ids=ids,
    )


def reconstruct_atoms(y_rep, table: ResidualTable) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized reconstruction for many queries.

    Args:
        y_rep: ``(m, K)`` yields at the representatives.

    Returns:
        ``(atoms, n_clamped, fell_back)`` with ``atoms`` of shape ``(m, N)``
        ordered class by class as in ``table.members``.
    """
    y_rep = np.atleast_2d(np.asarray(y_rep, dtype=float))
    if y_rep.shape[1] != table.K:
        raise ValueError(f"expected {table.K} representative yields, got {y_rep.shape[1]}")
    flat = table._flat
    base = y_rep[:, flat["labels"]]
    fell_back = np.zeros(y_rep.shape[0], dtype=bool)
    if table.method == "naive":
        atoms = base + flat["naive"]
    else:
        scale = weighted_spread(y_rep, table.class_sizes)
        fell_back = scale <= EPS_NUM
        atoms = np.where(
            fell_back[:, None],
            base + flat["naive"],
            base + scale[:, None] * flat["rescaled"],
        )
    negative = atoms < 0
    return np.where(negative, 0.0, atoms), negative.sum(axis=1), fell_back


def reconstruct_sample(y_rep, table: ResidualTable) -> ReconstructedYield:
    """Reconstructed N-atom yield distribution of one phenotype."""
    y_rep = np.asarray(y_rep, dtype=float).ravel()
    if y_rep.size != table.K:
        raise ValueError(f"expected {table.K} representative yields, got {y_rep.size}")
    atoms, clamped, fell_back = reconstruct_atoms(y_rep[None], table)
    if fell_back[0]:
        logger.info("degenerate representative spread, naive reconstruction used")
    N = table.N
    return ReconstructedYield(
        values=atoms[0],
        weights=np.full(N, 1.0 / N),
        labels=table._flat["labels"].copy(),
        n_clamped=int(clamped[0]),
        fell_back=bool(fell_back[0]),
    )


def _unpack(sample, weights):
    if isinstance(sample, ReconstructedYield):
        return sample.values, sample.weights
    values = np.asarray(sample, dtype=float).ravel()
    if values.size == 0:
        raise ValueError("empty sample")
    if weights is None:
        return values, None
    weights = np.asarray(weights, dtype=float).ravel()
    if weights.shape != values.shape or (weights < 0).any() or weights.sum() <= 0:
        raise ValueError("weights must be nonnegative, positive in total and match the values")
    return values, weights / weights.sum()


def _equal(weights) -> bool:
    return weights is None or np.allclose(weights, weights[0], rtol=1e-12, atol=0.0)


def _check_alpha(alpha: float) -> None:
    if not 0 < alpha <= 1:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha!r}")


def tail_count(alpha: float, n: int) -> int:
    """``ceil(alpha * n)``, robust to floating error in the product."""
    return max(1, min(n, math.ceil(alpha * n - 1e-9)))


def expectation(sample, weights=None) -> float:
    values, weights = _unpack(sample, weights)
    if weights is None:
        return float(values.mean())
    return float(values @ weights)


def quantile(sample, alpha: float, weights=None) -> float:
    """Lower empirical quantile: smallest v with cumulative weight >= alpha."""
    _check_alpha(alpha)
    values, weights = _unpack(sample, weights)
    order = np.argsort(values, kind="stable")
    if _equal(weights):
        return float(values[order][tail_count(alpha, values.size) - 1])
    cum = np.cumsum(weights[order])
    idx = int(np.searchsorted(cum, alpha - 1e-12, side="left"))
    return float(values[order][min(idx, values.size - 1)])


def cvar(sample, alpha: float, weights=None) -> float:
    """Mean of the lower alpha-tail.

    Equal weights: mean of the ``ceil(alpha N)`` smallest values. General
    weights: tail mass ``alpha`` with the boundary atom partially included.
    """
    _check_alpha(alpha)
    values, weights = _unpack(sample, weights)
    v = np.sort(values, kind="stable")
    if _equal(weights):
        return float(v[: tail_count(alpha, v.size)].mean())
    w = weights[np.argsort(values, kind="stable")]
    before = np.concatenate([[0.0], np.cumsum(w)[:-1]])
    take = np.clip(alpha - before, 0.0, w)
    return float(take @ v / take.sum())


def cvar_rows(values: np.ndarray, alpha: float) -> np.ndarray:
    """Equal-weight CVaR of every row of ``values``."""
    _check_alpha(alpha)
    values = np.atleast_2d(values)
    m = tail_count(alpha, values.shape[1])
    return np.sort(values, axis=1)[:, :m].mean(axis=1)


def subset_objectives(y_rep, class_sizes, alpha: float) -> tuple[float, float]:
    """(E, CVaR) of the K representative yields alone, weighted by class size."""
    w = np.asarray(class_sizes, dtype=float)
    return expectation(y_rep, w), cvar(y_rep, alpha, w)


def gaussian_objectives(y_rep, class_sizes, alpha: float) -> tuple[float, float]:
    """(E, CVaR) of a normal fit to the class-size weighted representatives."""
    _check_alpha(alpha)
    y_rep = np.asarray(y_rep, dtype=float)
    w = np.asarray(class_sizes, dtype=float)
    mu = float(y_rep @ w / w.sum())
    sigma = float(weighted_spread(y_rep, w))
    if alpha >= 1:
        return mu, mu
    return mu, mu - sigma * norm.pdf(norm.ppf(alpha)) / alpha


class MixtureReconstructor(BaseEstimator):
    """Scikit-learn style front end to residual learning and reconstruction.

    ``fit(Y, clusters)`` learns residuals from basis yields ``Y`` (l x N);
    ``transform`` maps ``(m, K)`` representative yields to ``(m, N)`` atoms and
    ``predict`` returns the ``(m, 2)`` estimated (expectation, CVaR).
    """

    def __init__(self, method="rescaled", alpha=0.2):
        self.method = method
        self.alpha = alpha

    def fit(self, X, clusters: ClusterModel):
        self.table_ = compute_residuals(X, clusters, self.method)
        return self

    def transform(self, X):
        check_is_fitted(self, "table_")
        return reconstruct_atoms(X, self.table_)[0]

    def predict(self, X):
        atoms = self.transform(X)
        return np.column_stack([atoms.mean(axis=1), cvar_rows(atoms, self.alpha)])
