"""Dataset container, CSV ingestion, synthetic generators and splitting."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    AliasError,
    DegenerateScale,
    EmptyInput,
    FormatError,
    InvalidLength,
    InvalidSplit,
    ParseError,
    ShapeError,
)


@dataclass(frozen=True)
class TimeSeriesDataset:
    """N series of length L stored row-wise. The array is made read-only."""

    values: np.ndarray
    source_tag: str = ""

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64, copy=True)
        if v.ndim != 2:
            raise ShapeError(f"expected a 2-D matrix, got shape {v.shape}")
        if v.shape[0] < 1:
            raise EmptyInput("dataset has no series")
        if v.shape[1] < 4 or v.shape[1] % 2:
            raise InvalidLength(f"series length must be even and >= 4, got {v.shape[1]}")
        if not np.all(np.isfinite(v)):
            raise ParseError("dataset contains non-finite values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def series_count(self) -> int:
        return self.values.shape[0]

    @property
    def series_len(self) -> int:
        return self.values.shape[1]

    def with_values(self, values: np.ndarray, tag: str | None = None) -> "TimeSeriesDataset":
        return TimeSeriesDataset(values, self.source_tag if tag is None else tag)

    def subset(self, rows) -> "TimeSeriesDataset":
        return TimeSeriesDataset(self.values[np.asarray(rows)], self.source_tag)


@dataclass(frozen=True)
class ScaleInfo:
    min: float
    max: float
    method: str = "global_minmax"

    def __post_init__(self):
        if not self.max > self.min:
            raise DegenerateScale(f"max ({self.max}) must exceed min ({self.min})")

    def apply(self, values: np.ndarray) -> np.ndarray:
        return (values - self.min) / (self.max - self.min)

    def invert(self, values: np.ndarray) -> np.ndarray:
        return values * (self.max - self.min) + self.min


def load_csv_dataset(path, layout: str = "rows_are_series", header: bool = False) -> TimeSeriesDataset:
    if layout != "rows_are_series":
        raise FormatError(f"unsupported layout {layout!r}")
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if header and rows:
        rows = rows[1:]
    if not rows:
        raise EmptyInput(f"{path} contains no data rows")
    width = len(rows[0])
    parsed = []
    for i, row in enumerate(rows):
        if len(row) != width:
            raise FormatError(f"row {i} has {len(row)} fields, expected {width}")
        try:
            parsed.append([float(c) for c in row])
        except ValueError as exc:
            raise ParseError(f"row {i}: {exc}") from None
    return TimeSeriesDataset(np.array(parsed), source_tag=str(path))


def save_csv_dataset(ds: TimeSeriesDataset, path) -> None:
    # repr() round-trips float64 exactly
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        for row in ds.values:
            fh.write(",".join(repr(float(v)) for v in row))
            fh.write("\n")


def normalize_dataset(ds: TimeSeriesDataset) -> tuple[TimeSeriesDataset, ScaleInfo]:
    lo, hi = float(ds.values.min()), float(ds.values.max())
    if not hi > lo:
        raise DegenerateScale("constant dataset cannot be min-max scaled")
    scale = ScaleInfo(lo, hi)
    return ds.with_values(scale.apply(ds.values)), scale


def denormalize_dataset(ds: TimeSeriesDataset, scale: ScaleInfo) -> TimeSeriesDataset:
    return ds.with_values(scale.invert(ds.values))


def _check_gen_args(n: int, length: int) -> None:
    if n < 1:
        raise EmptyInput("n must be >= 1")
    if length % 2:
        raise InvalidLength(f"series length must be even, got {length}")
    if length < 8:
        raise InvalidLength(f"series length must be >= 8, got {length}")


def _bump(t: np.ndarray, centre, width) -> np.ndarray:
    return np.exp(-0.5 * ((t - centre) / width) ** 2)


# hours of day; widths in hours
LOAD_BASE = 0.25
MORNING_PEAK = (7.5, 1.5, 0.55)
EVENING_PEAK = (19.0, 2.0, 1.0)


def load_mean_shape(length: int) -> np.ndarray:
    """Jitter-free daily load template (before scaling)."""
    t = np.arange(length) * 24.0 / length
    (mc, mw, ma), (ec, ew, ea) = MORNING_PEAK, EVENING_PEAK
    return LOAD_BASE + ma * _bump(t, mc, mw) + ea * _bump(t, ec, ew)


def gen_synthetic_load(n: int, length: int, seed: int, noise: float = 0.0) -> TimeSeriesDataset:
    """Residential daily load profiles: base load plus morning and evening peaks.

    Each series draws its own base level, peak amplitudes and peak times.
    ``noise`` adds optional multiplicative measurement noise (off by default).
    The result is scaled to [0, 1] over the whole matrix.
    """
    _check_gen_args(n, length)
    rng = np.random.default_rng(seed)
    t = np.arange(length) * 24.0 / length
    (mc, mw, ma), (ec, ew, ea) = MORNING_PEAK, EVENING_PEAK

    base = LOAD_BASE * rng.uniform(0.6, 1.4, size=(n, 1))
    m_amp = ma * rng.uniform(0.5, 1.5, size=(n, 1))
    e_amp = ea * rng.uniform(0.6, 1.4, size=(n, 1))
    m_ctr = mc + rng.normal(0.0, 0.6, size=(n, 1))
    e_ctr = ec + rng.normal(0.0, 0.8, size=(n, 1))
    m_wid = mw * rng.uniform(0.8, 1.2, size=(n, 1))
    e_wid = ew * rng.uniform(0.8, 1.2, size=(n, 1))

    x = base + m_amp * _bump(t, m_ctr, m_wid) + e_amp * _bump(t, e_ctr, e_wid)
    x = x * (1.0 + noise * rng.standard_normal((n, length)))
    x = np.clip(x, 0.0, None)
    ds, _ = normalize_dataset(TimeSeriesDataset(x, f"synthetic_load(seed={seed})"))
    return ds


def gen_synthetic_pv(n: int, length: int, seed: int, noise: float = 0.0) -> TimeSeriesDataset:
    """Daily PV output: zero at night, a clipped-cosine bell during daylight.

    Daylight spans the middle 60% of the day; the first and last 20% of
    samples are exactly zero. Per-series peak and a smooth cloud-attenuation
    factor vary with the seed; ``noise`` adds optional multiplicative
    measurement noise (off by default).
    """
    _check_gen_args(n, length)
    rng = np.random.default_rng(seed)
    start = int(math.ceil(0.2 * length))
    stop = length - start
    width = stop - start
    idx = np.arange(width)
    bell = np.sin(np.pi * (idx + 0.5) / width)

    peak = rng.uniform(0.6, 1.0, size=(n, 1))
    # low-order random attenuation, clipped to keep the bell non-negative
    k = np.arange(1, 4)
    coef = rng.normal(0.0, 0.08, size=(n, 3))
    phase = rng.uniform(0, 2 * np.pi, size=(n, 3))
    cloud = 1.0 + np.sum(
        coef[:, :, None] * np.sin(2 * np.pi * k[None, :, None] * idx[None, None, :] / width + phase[:, :, None]),
        axis=1,
    )
    day = np.clip(peak * bell * cloud * (1.0 + noise * rng.standard_normal((n, width))), 0.0, None)

    x = np.zeros((n, length))
    x[:, start:stop] = day
    ds, _ = normalize_dataset(TimeSeriesDataset(x, f"synthetic_pv(seed={seed})"))
    return ds


def gen_sine_mixture(components, length: int) -> np.ndarray:
    """Sum of ``amp * sin(2*pi*f*n/length + phase)`` over (f, amp, phase) triples."""
    if length % 2:
        raise InvalidLength(f"length must be even, got {length}")
    n = np.arange(length)
    out = np.zeros(length)
    for comp in components:
        f, amp = comp[0], comp[1]
        phase = comp[2] if len(comp) > 2 else 0.0
        if f >= length / 2:
            raise AliasError(f"frequency {f} >= Nyquist ({length // 2})")
        out += amp * np.sin(2 * np.pi * f * n / length + phase)
    return out


def split(ds: TimeSeriesDataset, train_fraction: float, seed: int) -> tuple[TimeSeriesDataset, TimeSeriesDataset]:
    """Random row partition with ``floor(fraction * N)`` training rows."""
    if not 0.0 < train_fraction < 1.0:
        raise InvalidSplit(f"train_fraction must lie in (0, 1), got {train_fraction}")
    n = ds.series_count
    n_train = int(math.floor(train_fraction * n + 1e-9))
    if n_train < 1 or n_train >= n:
        raise InvalidSplit(f"fraction {train_fraction} of {n} rows leaves an empty part")
    perm = np.random.default_rng(seed).permutation(n)
    return ds.subset(np.sort(perm[:n_train])), ds.subset(np.sort(perm[n_train:]))
