"""Crop simulator interface, a toy sunflower model and phenotype sampling.

The toy model keeps the signature of a real crop model, ``(phenotype,
climate series) -> yield in t/ha``, so any other simulator can be plugged in
through :class:`Simulator`. Its constants are fixed plumbing chosen so yields
land in a plausible 0-6 t/ha range and so rain timing around flowering
matters.

Model, for day ``t = 1..L``:

1. thermal time ``TT(t) = sum(max(0, (tmin + tmax) / 2 - 4.8))``; flowering
   ``t_F`` is the first day with ``TT >= tdf1``, maturity ``t_M`` the first
   with ``TT >= tdm3`` (capped at ``L``). No flowering means zero yield.
2. soil water ``W(1) = 100``, ``W(t+1) = clip(W + rain - demand, 0, 150)``
   with ``demand = etp * min(1, LAI / 3) * s_TR``; ``psi = -15 (1 - W/150)``.
3. ``s_LE = logistic(1.2 (psi - le))``, ``s_TR = logistic(1.2 (psi - tr))``.
4. potential LAI is a triangle 0 -> LAImax (at ``t_F``) -> 0 (at ``t_M``) with
   ``LAImax = 0.5 * 7e-4 * tln * lls * (1 - |llh / tln - 0.55|)``; actual LAI
   scales it by the running mean of ``s_LE``.
5. biomass ``B = sum_{t <= t_M} 2.2 s_TR (1 - exp(-k LAI)) 0.48 rad`` (g/m2).
6. harvest index ``0.4 sqrt(mean s_TR over t_F +- 10 days)``.
7. yield ``0.01 * HI * B``.
"""

from __future__ import annotations

import csv
import threading
from dataclasses import astuple, dataclass, fields
from typing import Callable, Sequence

import numpy as np

from .climate import ClimateSeries, ClimateSet

TRAITS = ("tdf1", "tdm3", "tln", "k", "llh", "lls", "le", "tr")

T_BASE = 4.8
W_INIT = 100.0
W_MAX = 150.0
PSI_SCALE = 15.0
LOGISTIC_SLOPE = 1.2
LAI_DENSITY = 0.5 * 7e-4
LAI_DEMAND_SAT = 3.0
RUE = 2.2
PAR_FRACTION = 0.48
HI_MAX = 0.4
HI_HALF_WINDOW = 10
G_M2_TO_T_HA = 0.01

# Largest number of (phenotype, climate) pairs simulated in one vectorized block.
_BLOCK = 40_000


class PhenotypeError(ValueError):
    pass


@dataclass(frozen=True)
class Phenotype:
    tdf1: float
    tdm3: float
    tln: float
    k: float
    llh: float
    lls: float
    le: float
    tr: float

    def to_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=float)

    @classmethod
    def from_array(cls, values) -> "Phenotype":
        values = np.asarray(values, dtype=float).ravel()
        if values.shape != (len(TRAITS),):
            raise PhenotypeError(f"expected {len(TRAITS)} trait values, got {values.shape}")
        return cls(*(float(v) for v in values))


@dataclass(frozen=True)
class PhenotypeBounds:
    """Per-trait ``[min, max]`` box, defaults are the cultivar-derived bounds."""

    tdf1: tuple[float, float] = (765.0, 907.0)
    tdm3: tuple[float, float] = (1540.0, 1830.0)
    tln: tuple[float, float] = (22.2, 36.7)
    k: tuple[float, float] = (0.780, 0.950)
    llh: tuple[float, float] = (13.5, 20.6)
    lls: tuple[float, float] = (334.0, 670.0)
    le: tuple[float, float] = (-15.6, -2.31)
    tr: tuple[float, float] = (-14.2, -5.81)

    def __post_init__(self):
        for f in fields(self):
            lo, hi = getattr(self, f.name)
            if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
                raise PhenotypeError(f"bounds for {f.name}: need finite min < max")

    @property
    def lower(self) -> np.ndarray:
        return np.array([getattr(self, t)[0] for t in TRAITS], dtype=float)

    @property
    def upper(self) -> np.ndarray:
        return np.array([getattr(self, t)[1] for t in TRAITS], dtype=float)

    def check(self, X) -> np.ndarray:
        """Return ``X`` as an ``(n, 8)`` array, raising if any trait is out of bounds."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.ndim != 2 or X.shape[1] != len(TRAITS):
            raise PhenotypeError(f"phenotypes must have {len(TRAITS)} traits, got shape {X.shape}")
        lo, hi = self.lower, self.upper
        bad = ~np.isfinite(X) | (X < lo) | (X > hi)
        if bad.any():
            row, col = map(int, np.argwhere(bad)[0])
            raise PhenotypeError(
                f"phenotype {row}: trait {TRAITS[col]}={X[row, col]!r} outside "
                f"[{lo[col]}, {hi[col]}]"
            )
        return X

    def clip(self, X: np.ndarray) -> np.ndarray:
        return np.clip(X, self.lower, self.upper)


DEFAULT_BOUNDS = PhenotypeBounds()


def _as_phenotype_array(X) -> np.ndarray:
    if isinstance(X, Phenotype):
        return X.to_array()[None, :]
    if isinstance(X, (list, tuple)) and X and isinstance(X[0], Phenotype):
        return np.array([x.to_array() for x in X])
    return np.atleast_2d(np.asarray(X, dtype=float))


def _as_climate_array(C) -> np.ndarray:
    if isinstance(C, ClimateSet):
        return C.array
    if isinstance(C, ClimateSeries):
        return C.values[None]
    arr = np.asarray(C, dtype=float)
    return arr[None] if arr.ndim == 2 else arr


def _logistic(z):
    return 1.0 / (1.0 + np.exp(-z))


def toy_yield_grid(traits: np.ndarray, climate: np.ndarray) -> np.ndarray:
    """Toy model yields for every (phenotype, series) pair.

    Args:
        traits: ``(I, 8)`` trait values in :data:`TRAITS` order.
        climate: ``(J, L, 5)`` daily weather.

    Returns:
        ``(I, J)`` yields in t/ha.
    """
    traits = np.asarray(traits, dtype=float)
    climate = np.asarray(climate, dtype=float)
    n_x, n_c, length = traits.shape[0], climate.shape[0], climate.shape[1]
    tdf1, tdm3, tln, k, llh, lls, le, tr = (traits[:, i : i + 1] for i in range(8))
    tmin, tmax, rad, etp, rain = (climate[:, :, v] for v in range(5))

    tt = np.cumsum(np.maximum(0.0, (tmin + tmax) / 2 - T_BASE), axis=1)
    # first day index (0-based) reaching the threshold; == length when never reached
    i_f = np.empty((n_x, n_c), dtype=int)
    i_m = np.empty((n_x, n_c), dtype=int)
    for j in range(n_c):
        i_f[:, j] = np.searchsorted(tt[j], tdf1[:, 0], side="left")
        i_m[:, j] = np.searchsorted(tt[j], tdm3[:, 0], side="left")
    flowered = i_f < length
    t_f = np.where(flowered, i_f + 1, length).astype(float)
    t_m = np.minimum(i_m + 1, length).astype(float)

    lai_max = LAI_DENSITY * tln * lls * (1.0 - np.abs(llh / tln - 0.55))
    rise = np.maximum(t_f - 1.0, 1.0)
    fall = np.maximum(t_m - t_f, 1.0)

    w = np.full((n_x, n_c), W_INIT)
    sle_sum = np.zeros((n_x, n_c))
    biomass = np.zeros((n_x, n_c))
    str_sum = np.zeros((n_x, n_c))
    str_cnt = np.zeros((n_x, n_c))
    for d in range(length):
        t = d + 1.0
        psi = -PSI_SCALE * (1.0 - w / W_MAX)
        s_le = _logistic(LOGISTIC_SLOPE * (psi - le))
        s_tr = _logistic(LOGISTIC_SLOPE * (psi - tr))
        sle_sum += s_le
        pot = np.where(
            t <= t_f,
            lai_max * np.where(t_f > 1.0, (t - 1.0) / rise, 1.0),
            np.where(t <= t_m, lai_max * (t_m - t) / fall, 0.0),
        )
        lai = pot * (sle_sum / t)
        growing = t <= t_m
        biomass += np.where(
            growing, RUE * s_tr * (1.0 - np.exp(-k * lai)) * PAR_FRACTION * rad[:, d], 0.0
        )
        in_window = np.abs(t - t_f) <= HI_HALF_WINDOW
        str_sum += np.where(in_window, s_tr, 0.0)
        str_cnt += in_window
        demand = etp[:, d] * np.minimum(1.0, lai / LAI_DEMAND_SAT) * s_tr
        w = np.clip(w + rain[:, d] - demand, 0.0, W_MAX)

    hi = HI_MAX * np.sqrt(str_sum / np.maximum(str_cnt, 1.0))
    return np.where(flowered, G_M2_TO_T_HA * hi * biomass, 0.0)


def simulate_yield(x, c, bounds: PhenotypeBounds = DEFAULT_BOUNDS) -> float:
    """Yield (t/ha) of phenotype ``x`` under climate series ``c``."""
    X = bounds.check(_as_phenotype_array(x))
    C = _as_climate_array(c)
    if X.shape[0] != 1 or C.shape[0] != 1:
        raise ValueError("simulate_yield takes a single phenotype and a single series")
    return float(toy_yield_grid(X, C)[0, 0])


class Simulator:
    """Counts every (phenotype, series) simulation run through it.

    ``model`` maps ``(I, 8)`` traits and ``(J, L, 5)`` climate to ``(I, J)``
    yields. The counter is lock-protected, so its final value does not depend
    on how calls are scheduled across threads.
    """

    def __init__(
        self,
        model: Callable[[np.ndarray, np.ndarray], np.ndarray] = toy_yield_grid,
        bounds: PhenotypeBounds = DEFAULT_BOUNDS,
    ):
        self.model = model
        self.bounds = bounds
        self._calls = 0
        self._lock = threading.Lock()

    @property
    def calls(self) -> int:
        return self._calls

    def reset(self) -> None:
        with self._lock:
            self._calls = 0

    def grid(self, X, C) -> np.ndarray:
        X = self.bounds.check(_as_phenotype_array(X))
        C = _as_climate_array(C)
        rows = max(1, _BLOCK // max(1, C.shape[0]))
        out = np.vstack([self.model(X[i : i + rows], C) for i in range(0, X.shape[0], rows)])
        with self._lock:
            self._calls += X.shape[0] * C.shape[0]
        return out


@dataclass(frozen=True)
class YieldMatrix:
    """Yields of ``I`` phenotypes (rows) under ``J`` climate series (columns)."""

    values: np.ndarray
    series_ids: tuple[str, ...]
    phenotypes: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or values.shape[1] != len(self.series_ids):
            raise ValueError("yield matrix shape does not match series ids")
        if not np.isfinite(values).all() or (values < 0).any():
            raise ValueError("yields must be finite and nonnegative")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "series_ids", tuple(self.series_ids))

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(self.series_ids)
            for row in self.values:
                writer.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path) -> "YieldMatrix":
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            ids = next(reader)
            values = np.array([[float(v) for v in row] for row in reader if row], dtype=float)
        values = values.reshape(-1, len(ids))
        return cls(values, tuple(ids), np.full((values.shape[0], len(TRAITS)), np.nan))


def yield_matrix(X, C: ClimateSet, simulator: Simulator | None = None) -> YieldMatrix:
    """Evaluate every phenotype of ``X`` on every series of ``C``."""
    X = _as_phenotype_array(X)
    if X.shape[0] == 0:
        raise ValueError("yield_matrix needs at least one phenotype")
    simulator = simulator or Simulator()
    values = simulator.grid(X, C)
    return YieldMatrix(values, tuple(C.ids), X.copy())


def lhs_design(bounds: PhenotypeBounds, n: int, rng: np.random.Generator) -> np.ndarray:
    """``(n, 8)`` Latin hypercube: one point per equal-width stratum per trait."""
    if n < 1:
        raise ValueError("LHS needs n >= 1")
    lo, hi = bounds.lower, bounds.upper
    d = len(TRAITS)
    strata = np.column_stack([rng.permutation(n) for _ in range(d)])
    u = (strata + rng.random((n, d))) / n
    return np.clip(lo + u * (hi - lo), lo, hi)


def lhs_sample(bounds: PhenotypeBounds, n: int, seed: int) -> list[Phenotype]:
    rng = np.random.default_rng(seed)
    return [Phenotype.from_array(row) for row in lhs_design(bounds, n, rng)]


def read_phenotypes(path) -> np.ndarray:
    """Read a phenotype CSV with columns ``tdf1,tdm3,tln,k,llh,lls,le,tr``."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = set(TRAITS) - set(reader.fieldnames or ())
        if missing:
            raise PhenotypeError(f"{path}: missing trait columns {sorted(missing)}")
        return np.array([[float(row[t]) for t in TRAITS] for row in reader], dtype=float)


def write_phenotypes(X: Sequence, path, extra: dict[str, Sequence] | None = None) -> None:
    X = _as_phenotype_array(X)
    extra = extra or {}
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(list(TRAITS) + list(extra))
        for i, row in enumerate(X):
            writer.writerow([repr(float(v)) for v in row] + [repr(float(extra[k][i])) for k in extra])
