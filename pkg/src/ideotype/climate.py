"""Climate series data model, CSV ingestion and a seeded synthetic generator.

A climate series holds one cultural season of daily weather with five
variables, in this column order::

    tmin (degC), tmax (degC), rad (MJ/m2), etp (mm), rain (mm)

The generator stands in for historic station records. Its formulas are
plumbing: determinism and the physical invariants are the contract, not the
exact shapes.

Generator formulas, per site and day ``t = 1..L`` (``u = (t - 0.5) / L``):

* seasonal trend ``trend(t) = mean_temp + amplitude * sin(pi * u)``
* yearly anomaly ``a ~ U(-1.5, 1.5)`` degC, wet-day scale ``m ~ U(0.6, 1.4)``
* wet day with probability ``min(1, wet_prob * m)``, depth ``~ Exp(rain_depth)``
* daily temperature noise ``U(-2, 2)``; diurnal range ``10 + U(-1.5, 1.5)``,
  reduced by 4 degC on wet days
* ``rad = (14 + 10 * sin(pi * u)) * (0.45 if wet else 1) * U(0.85, 1.15)``
* ``etp = 0.0045 * rad * (tmean + 12) * (0.6 if wet else 1)``, floored at 0
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

VARIABLES = ("tmin", "tmax", "rad", "etp", "rain")
CSV_HEADER = ("series_id", "day") + VARIABLES
DEFAULT_LENGTH = 180


class ClimateError(ValueError):
    """Raised for malformed or physically invalid climate data."""


def _check_values(series_id: str, values: np.ndarray, length: int | None = None) -> None:
    if values.ndim != 2 or values.shape[1] != len(VARIABLES):
        raise ClimateError(f"series {series_id!r}: expected shape (L, 5), got {values.shape}")
    if length is not None and values.shape[0] != length:
        raise ClimateError(
            f"series {series_id!r}: length {values.shape[0]} != expected {length}"
        )
    bad = ~np.isfinite(values).all(axis=1)
    if bad.any():
        raise ClimateError(f"series {series_id!r}, day {int(np.argmax(bad)) + 1}: non-finite value")
    tmin, tmax, rad, etp, rain = values.T
    for name, mask in (
        ("tmax < tmin", tmax < tmin),
        ("rad < 0", rad < 0),
        ("etp < 0", etp < 0),
        ("rain < 0", rain < 0),
    ):
        if mask.any():
            raise ClimateError(f"series {series_id!r}, day {int(np.argmax(mask)) + 1}: {name}")


@dataclass(frozen=True)
class ClimateSeries:
    """One season of daily weather, ``values`` has shape ``(L, 5)``."""

    id: str
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        _check_values(self.id, values)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.values.shape[0]

    def __getitem__(self, variable: str) -> np.ndarray:
        return self.values[:, VARIABLES.index(variable)]

    def __eq__(self, other) -> bool:
        if not isinstance(other, ClimateSeries):
            return NotImplemented
        return self.id == other.id and np.array_equal(self.values, other.values)

    __hash__ = None


@dataclass(frozen=True)
class ClimateSet:
    """Ordered, immutable collection of climate series sharing one length."""

    series: tuple[ClimateSeries, ...]
    _array: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        series = tuple(self.series)
        if len(series) < 1:
            raise ClimateError("a climate set needs at least one series")
        lengths = {len(s) for s in series}
        if len(lengths) != 1:
            raise ClimateError(f"series lengths differ: {sorted(lengths)}")
        ids = [s.id for s in series]
        if len(set(ids)) != len(ids):
            raise ClimateError("series ids must be unique")
        arr = np.stack([s.values for s in series])
        arr.setflags(write=False)
        object.__setattr__(self, "series", series)
        object.__setattr__(self, "_array", arr)

    @classmethod
    def from_array(cls, array: np.ndarray, ids: Sequence[str] | None = None) -> "ClimateSet":
        array = np.asarray(array, dtype=float)
        if ids is None:
            ids = [f"s{i}" for i in range(array.shape[0])]
        return cls(tuple(ClimateSeries(i, a) for i, a in zip(ids, array)))

    @property
    def array(self) -> np.ndarray:
        """Read-only ``(N, L, 5)`` view of all series."""
        return self._array

    @property
    def ids(self) -> list[str]:
        return [s.id for s in self.series]

    @property
    def length(self) -> int:
        return self._array.shape[1]

    def __len__(self) -> int:
        return len(self.series)

    def __iter__(self):
        return iter(self.series)

    def __getitem__(self, idx):
        return self.series[idx]

    def subset(self, indices: Iterable[int]) -> "ClimateSet":
        return ClimateSet(tuple(self.series[i] for i in indices))

    def __eq__(self, other) -> bool:
        if not isinstance(other, ClimateSet):
            return NotImplemented
        return self.ids == other.ids and np.array_equal(self._array, other._array)

    __hash__ = None


def load_climate(path, expected_length: int = DEFAULT_LENGTH) -> ClimateSet:
    """Read a long-format climate CSV.

    Rows are grouped by ``series_id`` in first-appearance order; days must be
    numbered ``1..L`` without gaps or duplicates.
    """
    path = Path(path)
    rows: dict[str, dict[int, list[float]]] = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != CSV_HEADER:
            raise ClimateError(f"{path}: header must be {','.join(CSV_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(CSV_HEADER):
                raise ClimateError(f"{path}:{lineno}: expected {len(CSV_HEADER)} fields")
            sid = row[0]
            try:
                day = int(row[1])
            except ValueError:
                raise ClimateError(f"series {sid!r}: non-integer day {row[1]!r}") from None
            try:
                vals = [float(v) for v in row[2:]]
            except ValueError:
                raise ClimateError(f"series {sid!r}, day {day}: non-numeric field") from None
            days = rows.setdefault(sid, {})
            if day in days:
                raise ClimateError(f"series {sid!r}, day {day}: duplicate day index")
            days[day] = vals

    series = []
    for sid, days in rows.items():
        missing = sorted(set(range(1, len(days) + 1)) - days.keys())
        if missing or max(days) != len(days):
            first = missing[0] if missing else max(days)
            raise ClimateError(f"series {sid!r}, day {first}: missing or out-of-range day index")
        values = np.array([days[d] for d in range(1, len(days) + 1)], dtype=float)
        _check_values(sid, values, expected_length)
        series.append(ClimateSeries(sid, values))
    if not series:
        raise ClimateError(f"{path}: no climate rows")
    return ClimateSet(tuple(series))


def write_climate(climate: ClimateSet, path) -> None:
    """Write ``climate`` as CSV; floats use ``repr`` so reloading is exact."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for s in climate:
            for day, vals in enumerate(s.values, start=1):
                writer.writerow([s.id, day, *(repr(float(v)) for v in vals)])


@dataclass(frozen=True)
class SiteConfig:
    name: str
    mean_temp: float = 16.0
    amplitude: float = 8.0
    wet_prob: float = 0.28
    rain_depth: float = 7.0

    def __post_init__(self):
        for attr in ("amplitude", "rain_depth"):
            if not getattr(self, attr) > 0:
                raise ClimateError(f"site {self.name!r}: {attr} must be positive")
        if not 0 <= self.wet_prob <= 1:
            raise ClimateError(f"site {self.name!r}: wet_prob must lie in [0, 1]")


@dataclass(frozen=True)
class GeneratorConfig:
    sites: tuple[SiteConfig, ...]
    years: int = 38
    first_year: int = 1975
    length: int = DEFAULT_LENGTH

    def __post_init__(self):
        object.__setattr__(self, "sites", tuple(self.sites))
        if not self.sites:
            raise ClimateError("generator needs at least one site")
        if self.years < 1:
            raise ClimateError("years must be >= 1")
        if self.length < 30:
            raise ClimateError("season length must be >= 30 days")

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorConfig":
        sites = tuple(SiteConfig(**s) for s in d["sites"])
        rest = {k: v for k, v in d.items() if k != "sites"}
        return cls(sites=sites, **rest)

    def to_dict(self) -> dict:
        return {
            "sites": [vars(s).copy() for s in self.sites],
            "years": self.years,
            "first_year": self.first_year,
            "length": self.length,
        }


# Five contrasting stations, warm/dry south to cool/wet north.
DEFAULT_SITES = (
    SiteConfig("avignon", mean_temp=18.5, amplitude=8.5, wet_prob=0.20, rain_depth=9.0),
    SiteConfig("blagnac", mean_temp=17.0, amplitude=8.0, wet_prob=0.27, rain_depth=7.5),
    SiteConfig("poitiers", mean_temp=15.5, amplitude=7.5, wet_prob=0.30, rain_depth=6.5),
    SiteConfig("dijon", mean_temp=14.5, amplitude=8.5, wet_prob=0.32, rain_depth=6.5),
    SiteConfig("reims", mean_temp=13.5, amplitude=7.5, wet_prob=0.33, rain_depth=5.5),
)


def default_generator_config(years: int = 38, length: int = DEFAULT_LENGTH) -> GeneratorConfig:
    return GeneratorConfig(sites=DEFAULT_SITES, years=years, length=length)


def _site_series(site: SiteConfig, rng: np.random.Generator, length: int) -> np.ndarray:
    u = (np.arange(1, length + 1) - 0.5) / length
    shape = np.sin(math.pi * u)
    anomaly = rng.uniform(-1.5, 1.5)
    wet_scale = rng.uniform(0.6, 1.4)
    wet = rng.random(length) < min(1.0, site.wet_prob * wet_scale)
    rain = np.where(wet, rng.exponential(site.rain_depth, length), 0.0)
    tmean = site.mean_temp + site.amplitude * shape + anomaly + rng.uniform(-2.0, 2.0, length)
    dtr = 10.0 + rng.uniform(-1.5, 1.5, length) - 4.0 * wet
    tmin = tmean - dtr / 2
    tmax = tmean + dtr / 2
    rad = (14.0 + 10.0 * shape) * np.where(wet, 0.45, 1.0) * rng.uniform(0.85, 1.15, length)
    etp = np.maximum(0.0, 0.0045 * rad * (tmean + 12.0) * np.where(wet, 0.6, 1.0))
    return np.column_stack([tmin, tmax, rad, etp, rain])


def generate_climate(gen_config: GeneratorConfig, seed: int) -> ClimateSet:
    """Deterministic synthetic climate set of ``len(sites) * years`` series.

    Each site draws from its own stream seeded by ``(seed, site index)``, so
    the output does not depend on the order sites are processed in.
    """
    series = []
    for s_idx, site in enumerate(gen_config.sites):
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), s_idx]))
        for y in range(gen_config.years):
            values = _site_series(site, rng, gen_config.length)
            series.append(ClimateSeries(f"{site.name}_{gen_config.first_year + y}", values))
    return ClimateSet(tuple(series))
