"""Pareto-front quality indicators for bi-objective maximization.

Fronts are ``(n, 2)`` arrays of ``(expectation, cvar)`` pairs. All three
indicators are written for maximization: hypervolume (higher is better),
additive epsilon and R2 (lower is better).
"""

from __future__ import annotations

import numpy as np

from .moo import ParetoArchive, nondominated_mask


def as_front(front) -> np.ndarray:
    """Canonical front: non-dominated points sorted by the first objective, descending."""
    if isinstance(front, ParetoArchive):
        front = front.objectives
    F = np.asarray(front, dtype=float).reshape(-1, 2)
    if F.shape[0] == 0:
        raise ValueError("front must be non-empty")
    if not np.isfinite(F).all():
        raise ValueError("front has non-finite values")
    F = np.unique(F[nondominated_mask(F)], axis=0)
    return F[np.lexsort((-F[:, 1], -F[:, 0]))]


def hypervolume(front, ref) -> float:
    """Area weakly dominated by ``front`` and bounded below by ``ref``."""
    F = np.asarray(front.objectives if isinstance(front, ParetoArchive) else front, dtype=float)
    F = F.reshape(-1, 2)
    ref = np.asarray(ref, dtype=float)
    if (F < ref).any():
        raise ValueError("every front point must dominate the reference point")
    F = as_front(F)
    # sweep by e descending: each point adds a slab above the best cvar so far
    area, best_cvar = 0.0, ref[1]
    for e, c in F:
        if c > best_cvar:
            area += (e - ref[0]) * (c - best_cvar)
            best_cvar = c
    return float(area)


def epsilon_indicator(approx, reference) -> float:
    """Additive epsilon: smallest shift making ``approx`` weakly dominate ``reference``."""
    A = as_front(approx)
    R = as_front(reference)
    gaps = (R[:, None, :] - A[None, :, :]).max(axis=2)  # (|R|, |A|)
    return float(gaps.min(axis=1).max())


def default_weight_vectors(n: int = 21) -> np.ndarray:
    t = np.linspace(0.0, 1.0, n)
    return np.column_stack([t, 1.0 - t])


def r2_indicator(front, weight_vectors=None, ideal=None) -> float:
    """Mean over weight vectors of the best weighted Chebyshev gap to ``ideal``."""
    F = as_front(front)
    W = default_weight_vectors() if weight_vectors is None else np.asarray(weight_vectors, dtype=float)
    if W.ndim != 2 or W.shape[1] != 2 or (W < 0).any() or not np.allclose(W.sum(axis=1), 1.0):
        raise ValueError("weight vectors must be nonnegative pairs summing to 1")
    ideal = F.max(axis=0) if ideal is None else np.asarray(ideal, dtype=float)
    if (F > ideal + 1e-12).any():
        raise ValueError("ideal point must weakly dominate every front point")
    cheb = (W[:, None, :] * (ideal - F)[None, :, :]).max(axis=2)  # (|W|, n)
    return float(cheb.min(axis=1).mean())


def reference_point(fronts, margin: float = 0.01) -> np.ndarray:
    """Componentwise worst value over ``fronts``, moved down by ``margin`` of the range."""
    allF = np.vstack([as_front(f) for f in fronts])
    worst, best = allF.min(axis=0), allF.max(axis=0)
    span = best - worst
    pad = np.where(span > 0, margin * span, margin * np.maximum(np.abs(worst), 1.0))
    return worst - pad


def ideal_point(fronts) -> np.ndarray:
    return np.vstack([as_front(f) for f in fronts]).max(axis=0)
