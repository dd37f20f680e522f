"""Dissimilarities between climate series.

Five DTW distances (one per weather variable), one model-based distance
computed from yields on a phenotype basis, cosine normalization and their
convex combination.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .climate import VARIABLES, ClimateSet
from .cropmodel import YieldMatrix

KINDS = VARIABLES + ("model", "normalized", "combined")
EPS_NUM = 1e-12


@dataclass(frozen=True)
class DissimilarityMatrix:
    values: np.ndarray
    kind: str
    ids: tuple[str, ...] | None = None

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if self.kind not in KINDS:
            raise ValueError(f"unknown dissimilarity kind {self.kind!r}")
        check_dissimilarity(values)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if self.ids is not None:
            if len(self.ids) != values.shape[0]:
                raise ValueError("ids length does not match matrix size")
            object.__setattr__(self, "ids", tuple(self.ids))

    def __len__(self) -> int:
        return self.values.shape[0]

    def to_csv(self, path) -> None:
        ids = self.ids or tuple(str(i) for i in range(len(self)))
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["", *ids])
            for sid, row in zip(ids, self.values):
                writer.writerow([sid, *(repr(float(v)) for v in row)])

    @classmethod
    def from_csv(cls, path, kind: str = "combined") -> "DissimilarityMatrix":
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            ids = next(reader)[1:]
            rows = [r for r in reader if r]
        values = np.array([[float(v) for v in r[1:]] for r in rows], dtype=float)
        return cls(values, kind, tuple(ids))


def check_dissimilarity(D, tol: float = 1e-9) -> np.ndarray:
    """Validate a square, symmetric, zero-diagonal, nonnegative finite matrix."""
    D = np.asarray(D, dtype=float)
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise ValueError(f"dissimilarity matrix must be square, got shape {D.shape}")
    if not np.isfinite(D).all():
        raise ValueError("dissimilarity matrix has non-finite entries")
    scale = max(1.0, float(np.abs(D).max(initial=0.0)))
    if np.abs(D - D.T).max(initial=0.0) > tol * scale:
        raise ValueError("dissimilarity matrix is not symmetric")
    if np.abs(np.diag(D)).max(initial=0.0) > tol * scale:
        raise ValueError("dissimilarity matrix has a nonzero diagonal")
    if (D < -tol * scale).any():
        raise ValueError("dissimilarity matrix has negative entries")
    return D


@dataclass(frozen=True)
class DissimWeights:
    tmin: float = 0.1
    tmax: float = 0.1
    rad: float = 0.1
    etp: float = 0.1
    rain: float = 0.1
    model: float = 0.5

    def __post_init__(self):
        w = self.as_array()
        if (w < 0).any() or not np.isfinite(w).all():
            raise ValueError("weights must be finite and nonnegative")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights must sum to 1, got {w.sum()!r}")

    def as_array(self) -> np.ndarray:
        return np.array([self.tmin, self.tmax, self.rad, self.etp, self.rain, self.model])


@dataclass(frozen=True)
class DtwConfig:
    """Sakoe-Chiba half-widths (days) per weather variable."""

    windows: dict = field(
        default_factory=lambda: {"tmin": 7, "tmax": 7, "rad": 7, "etp": 7, "rain": 3}
    )

    def __post_init__(self):
        merged = {"tmin": 7, "tmax": 7, "rad": 7, "etp": 7, "rain": 3}
        merged.update(self.windows)
        for name, w in merged.items():
            if name not in VARIABLES:
                raise ValueError(f"unknown weather variable {name!r}")
            if int(w) != w or w < 0:
                raise ValueError(f"window for {name} must be a nonnegative integer")
        object.__setattr__(self, "windows", {k: int(merged[k]) for k in VARIABLES})


def dtw_distance(a, b, window: int) -> float:
    """Banded DTW with absolute-difference cost and unit-weight symmetric steps."""
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.size == 0 or b.size == 0:
        raise ValueError("DTW needs non-empty sequences")
    if a.size != b.size:
        raise ValueError(f"DTW needs equal lengths, got {a.size} and {b.size}")
    if window < 0:
        raise ValueError("window must be >= 0")
    n = a.size
    acc = np.full((n + 1, n + 1), np.inf)
    acc[0, 0] = 0.0
    for i in range(1, n + 1):
        for j in range(max(1, i - window), min(n, i + window) + 1):
            acc[i, j] = abs(a[i - 1] - b[j - 1]) + min(
                acc[i - 1, j], acc[i, j - 1], acc[i - 1, j - 1]
            )
    return float(acc[n, n])


def dtw_batch(A: np.ndarray, B: np.ndarray, window: int) -> np.ndarray:
    """DTW distances between rows ``A[p]`` and ``B[p]``, vectorized over pairs.

    Only the ``2 * window + 1`` band cells of the current and previous rows
    are kept, so memory is ``O(P * window)``.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.shape != B.shape or A.ndim != 2 or A.shape[1] == 0:
        raise ValueError("dtw_batch needs two (P, n) arrays with n >= 1")
    if window < 0:
        raise ValueError("window must be >= 0")
    n_pairs, n = A.shape
    w = min(window, n - 1)
    width = 2 * w + 1
    offsets = np.arange(width) - w
    At = np.ascontiguousarray(A.T)
    Bt = np.ascontiguousarray(B.T)
    # row s holds column j = i + s - w; row ``width`` is an inf pad
    prev = np.full((width + 1, n_pairs), np.inf)
    for i in range(n):
        cols = i + offsets
        valid = (cols >= 0) & (cols < n)
        cost = np.full((width, n_pairs), np.inf)
        cost[valid] = np.abs(At[i] - Bt[cols[valid]])
        if i == 0:
            vertical = np.full((width, n_pairs), np.inf)
            vertical[w] = 0.0
        else:
            # min over (i-1, j) and (i-1, j-1)
            vertical = np.minimum(prev[1:], prev[:-1])
        cur = np.full((width + 1, n_pairs), np.inf)
        cur[:width] = cost + vertical
        for s in range(1, width):
            if valid[s]:
                np.minimum(cur[s], cost[s] + cur[s - 1], out=cur[s])
        prev = cur
    return prev[w].copy()


def _pairs(n: int) -> tuple[np.ndarray, np.ndarray]:
    return np.triu_indices(n, k=1)


def _pairwise(series: np.ndarray, window: int) -> np.ndarray:
    n = series.shape[0]
    iu, ju = _pairs(n)
    D = np.zeros((n, n))
    if iu.size:
        d = dtw_batch(series[iu], series[ju], window)
        D[iu, ju] = d
        D[ju, iu] = d
    return D


def variable_dissim(C: ClimateSet, cfg: DtwConfig | None = None) -> dict[str, DissimilarityMatrix]:
    """One DTW dissimilarity matrix per weather variable."""
    cfg = cfg or DtwConfig()
    if len(C) < 2:
        raise ValueError("need at least two climate series")
    arr = C.array
    return {
        name: DissimilarityMatrix(_pairwise(arr[:, :, v], cfg.windows[name]), name, tuple(C.ids))
        for v, name in enumerate(VARIABLES)
    }


def model_dissim(Y: YieldMatrix | np.ndarray) -> DissimilarityMatrix:
    """Root-mean-square yield difference over the basis phenotypes."""
    ids = None
    if isinstance(Y, YieldMatrix):
        ids = Y.series_ids
        Y = Y.values
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 2 or Y.shape[0] < 1:
        raise ValueError("model dissimilarity needs at least one basis phenotype")
    if Y.shape[1] < 2:
        raise ValueError("model dissimilarity needs at least two series")
    diff = Y[:, :, None] - Y[:, None, :]
    D = np.sqrt(np.mean(diff**2, axis=0))
    np.fill_diagonal(D, 0.0)
    return DissimilarityMatrix(D, "model", ids)


def cosine_normalize(D: DissimilarityMatrix | np.ndarray) -> DissimilarityMatrix:
    """Cosine preprocessing: double-center, scale to unit self-similarity.

    Rows whose centered self-similarity is ``<= EPS_NUM`` carry no information
    and get zero dissimilarity to everything.
    """
    ids = D.ids if isinstance(D, DissimilarityMatrix) else None
    values = D.values if isinstance(D, DissimilarityMatrix) else check_dissimilarity(D)
    n = values.shape[0]
    row = values.mean(axis=1)
    S = -0.5 * (values - row[:, None] - row[None, :] + values.mean())
    diag = np.diag(S).copy()
    ok = diag > EPS_NUM
    root = np.sqrt(np.where(ok, diag, 1.0))
    s_bar = np.clip(S / np.outer(root, root), -1.0, 1.0)
    out = 2.0 - 2.0 * s_bar
    out[~ok, :] = 0.0
    out[:, ~ok] = 0.0
    out = 0.5 * (out + out.T)
    out[np.arange(n), np.arange(n)] = 0.0
    return DissimilarityMatrix(out, "normalized", ids)


def combine(
    matrices: dict[str, DissimilarityMatrix] | list,
    weights: DissimWeights | None = None,
) -> DissimilarityMatrix:
    """Convex combination of six normalized matrices.

    ``matrices`` is either a mapping keyed by ``tmin, tmax, rad, etp, rain,
    model`` or a list in that order.
    """
    weights = weights or DissimWeights()
    order = VARIABLES + ("model",)
    if isinstance(matrices, dict):
        missing = set(order) - matrices.keys()
        if missing:
            raise ValueError(f"missing matrices: {sorted(missing)}")
        mats = [matrices[k] for k in order]
    else:
        mats = list(matrices)
        if len(mats) != len(order):
            raise ValueError(f"expected {len(order)} matrices, got {len(mats)}")
    arrays = [m.values if isinstance(m, DissimilarityMatrix) else np.asarray(m, float) for m in mats]
    shapes = {a.shape for a in arrays}
    if len(shapes) != 1:
        raise ValueError(f"dimension mismatch between matrices: {sorted(shapes)}")
    for m in mats:
        if isinstance(m, DissimilarityMatrix) and m.kind != "normalized":
            raise ValueError(f"combine expects normalized matrices, got kind {m.kind!r}")
    out = np.tensordot(weights.as_array(), np.stack(arrays), axes=1)
    out = 0.5 * (out + out.T)
    np.fill_diagonal(out, 0.0)
    ids = next((m.ids for m in mats if isinstance(m, DissimilarityMatrix) and m.ids), None)
    return DissimilarityMatrix(out, "combined", ids)


def climate_dissimilarity(
    C: ClimateSet,
    basis_yields: YieldMatrix | np.ndarray,
    weights: DissimWeights | None = None,
    dtw: DtwConfig | None = None,
) -> tuple[DissimilarityMatrix, dict[str, DissimilarityMatrix]]:
    """Full pipeline: DTW + model distances, normalized then combined.

    Returns the combined matrix and the six raw intermediates.
    """
    raw = variable_dissim(C, dtw)
    raw["model"] = model_dissim(basis_yields)
    normalized = {k: cosine_normalize(v) for k, v in raw.items()}
    combined = combine(normalized, weights)
    return DissimilarityMatrix(combined.values, "combined", tuple(C.ids)), raw
