"""Frequency-domain preprocessing.

Transform convention: the forward transform carries the 1/L factor and a
positive exponent,

    a_k = 1/L * sum_n x_n exp(+2 pi i k n / L)

and the inverse uses the negative exponent with no factor, so the pair is
exact. With numpy's conventions this makes ``dft == np.fft.ifft`` and
``idft == np.fft.fft``.

A dataset of N series of even length L becomes a :class:`SpectralForm` of
K = L/2 + 1 positive-frequency bins, which is z-scored per bin across samples
and laid out on a square 2-channel (real, imag) grid for the networks.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataio import TimeSeriesDataset
from .errors import (
    InsufficientSamples,
    InvalidLength,
    ShapeError,
    SymmetryViolation,
    UndefinedReference,
)

STD_FLOOR = 1e-8
SYMMETRY_TOL = 1e-6


def dft(series) -> np.ndarray:
    """Complex coefficients a_0..a_{L-1} along the last axis."""
    x = np.asarray(series)
    if x.shape[-1] < 2:
        raise InvalidLength("DFT needs at least 2 samples")
    return np.fft.ifft(x, axis=-1)


def idft(spectrum) -> np.ndarray:
    """Inverse of :func:`dft`; returns complex values (imag ~ 0 for symmetric input)."""
    a = np.asarray(spectrum, dtype=np.complex128)
    if a.shape[-1] < 2:
        raise InvalidLength("IDFT needs at least 2 coefficients")
    return np.fft.fft(a, axis=-1)


@dataclass(frozen=True)
class SpectralForm:
    real_part: np.ndarray
    imag_part: np.ndarray
    origin_len: int

    @property
    def bins(self) -> int:
        return self.real_part.shape[1]

    @property
    def series_count(self) -> int:
        return self.real_part.shape[0]


@dataclass(frozen=True)
class NormStats:
    mean_r: np.ndarray
    std_r: np.ndarray
    mean_i: np.ndarray
    std_i: np.ndarray
    epsilon: float = STD_FLOOR

    @property
    def bins(self) -> int:
        return len(self.mean_r)


@dataclass(frozen=True)
class SpectralGrid:
    """N x C x H x W tensor holding a flattened per-series vector, zero padded."""

    data: np.ndarray
    bins: int
    pad_len: int

    @property
    def height(self) -> int:
        return self.data.shape[2]

    @property
    def width(self) -> int:
        return self.data.shape[3]

    @property
    def channels(self) -> int:
        return self.data.shape[1]


def to_spectral_form(ds: TimeSeriesDataset | np.ndarray) -> SpectralForm:
    x = ds.values if isinstance(ds, TimeSeriesDataset) else np.atleast_2d(np.asarray(ds, dtype=np.float64))
    L = x.shape[1]
    if L % 2 or L < 2:
        raise InvalidLength(f"series length must be even, got {L}")
    a = dft(x)[:, : L // 2 + 1]
    return SpectralForm(a.real.copy(), a.imag.copy(), L)


def full_spectrum(sf: SpectralForm, repair: bool = True) -> np.ndarray:
    """Rebuild all L coefficients from the positive half by conjugate symmetry."""
    L, K = sf.origin_len, sf.bins
    if K != L // 2 + 1:
        raise ShapeError(f"{K} bins do not match origin length {L}")
    imag = np.array(sf.imag_part, dtype=np.float64, copy=True)
    edge = np.abs(imag[:, [0, K - 1]])
    if edge.size and edge.max() > SYMMETRY_TOL:
        raise SymmetryViolation(f"imaginary DC/Nyquist residue {edge.max():.3g} exceeds {SYMMETRY_TOL}")
    if repair:
        imag[:, 0] = 0.0
        imag[:, K - 1] = 0.0
    half = sf.real_part + 1j * imag
    mirror = np.conj(half[:, 1 : K - 1][:, ::-1])
    return np.concatenate([half, mirror], axis=1)


def from_spectral_form(sf: SpectralForm, tag: str = "") -> TimeSeriesDataset:
    return TimeSeriesDataset(idft(full_spectrum(sf)).real, tag)


def fit_norm_stats(sf: SpectralForm, epsilon: float = STD_FLOOR) -> NormStats:
    if sf.series_count < 2:
        raise InsufficientSamples("need at least 2 series to fit per-frequency statistics")
    return NormStats(
        mean_r=sf.real_part.mean(axis=0),
        std_r=np.maximum(sf.real_part.std(axis=0), epsilon),
        mean_i=sf.imag_part.mean(axis=0),
        std_i=np.maximum(sf.imag_part.std(axis=0), epsilon),
        epsilon=epsilon,
    )


def _check_bins(sf: SpectralForm, stats: NormStats) -> None:
    if sf.bins != stats.bins:
        raise ShapeError(f"spectral form has {sf.bins} bins, statistics have {stats.bins}")


def apply_norm(sf: SpectralForm, stats: NormStats) -> SpectralForm:
    _check_bins(sf, stats)
    return SpectralForm(
        (sf.real_part - stats.mean_r) / stats.std_r,
        (sf.imag_part - stats.mean_i) / stats.std_i,
        sf.origin_len,
    )


def invert_norm(sf: SpectralForm, stats: NormStats) -> SpectralForm:
    _check_bins(sf, stats)
    return SpectralForm(
        sf.real_part * stats.std_r + stats.mean_r,
        sf.imag_part * stats.std_i + stats.mean_i,
        sf.origin_len,
    )


def grid_side(n_cells: int) -> int:
    return math.isqrt(n_cells - 1) + 1 if n_cells > 1 else 1


def vectors_to_grid(channels: list[np.ndarray]) -> SpectralGrid:
    """Lay each N x K channel matrix row-major on a ceil(sqrt(K))^2 grid."""
    n, k = channels[0].shape
    side = grid_side(k)
    data = np.zeros((n, len(channels), side * side))
    for c, mat in enumerate(channels):
        data[:, c, :k] = mat
    return SpectralGrid(data.reshape(n, len(channels), side, side), k, side * side - k)


def grid_to_vectors(g: SpectralGrid) -> list[np.ndarray]:
    flat = g.data.reshape(g.data.shape[0], g.channels, -1)
    return [flat[:, c, : g.bins].copy() for c in range(g.channels)]


def reshape_to_grid(sf: SpectralForm) -> SpectralGrid:
    return vectors_to_grid([sf.real_part, sf.imag_part])


def grid_to_form(g: SpectralGrid, origin_len: int | None = None) -> SpectralForm:
    if g.channels != 2:
        raise ShapeError(f"spectral grids have 2 channels, got {g.channels}")
    real, imag = grid_to_vectors(g)
    return SpectralForm(real, imag, origin_len if origin_len is not None else 2 * (g.bins - 1))


def spectral_cell_mask(bins: int) -> np.ndarray:
    """2 x H x W mask of the cells that carry free spectral values.

    Excludes grid padding and the imaginary DC/Nyquist cells, which are
    identically zero for real signals.
    """
    side = grid_side(bins)
    mask = np.zeros((2, side * side), dtype=bool)
    mask[0, :bins] = True
    mask[1, 1 : bins - 1] = True
    return mask.reshape(2, side, side)


def relative_error(pred, truth, k: int) -> float:
    """|a_k(pred) - a_k(truth)| / |a_k(truth)| with complex moduli."""
    pred, truth = np.asarray(pred, dtype=np.float64), np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise ShapeError(f"length mismatch {pred.shape} vs {truth.shape}")
    ah, af = dft(pred)[k], dft(truth)[k]
    if abs(af) == 0.0:
        raise UndefinedReference(f"reference coefficient at k={k} is zero")
    return float(abs(ah - af) / abs(af))


def export_spectral_csv(sf: SpectralForm, path) -> None:
    """One row per series: K real values then K imaginary values."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        for r, i in zip(sf.real_part, sf.imag_part):
            w.writerow([repr(float(v)) for v in np.concatenate([r, i])])


class FrequencyPreprocessor:
    """Scaled series <-> normalized 2-channel spectral grids, with fixed statistics."""

    domain = "frequency"

    def __init__(self, stats: NormStats, series_len: int):
        if stats.bins != series_len // 2 + 1:
            raise ShapeError(f"{stats.bins} bins do not match series length {series_len}")
        self.stats = stats
        self.series_len = series_len

    @classmethod
    def fit(cls, values: np.ndarray) -> "FrequencyPreprocessor":
        return cls(fit_norm_stats(to_spectral_form(values)), values.shape[1])

    def _check_len(self, values: np.ndarray) -> None:
        if values.shape[-1] != self.series_len:
            raise ShapeError(f"series length {values.shape[-1]}, expected {self.series_len}")

    def to_grid(self, values: np.ndarray) -> np.ndarray:
        self._check_len(values)
        return reshape_to_grid(apply_norm(to_spectral_form(values), self.stats)).data

    def from_grid(self, grid: np.ndarray) -> np.ndarray:
        g = SpectralGrid(np.asarray(grid, dtype=np.float64), self.stats.bins, grid_side(self.stats.bins) ** 2 - self.stats.bins)
        sf = invert_norm(grid_to_form(g, self.series_len), self.stats)
        return idft(full_spectrum(sf)).real

    def noise_to_grid(self, time_noise: np.ndarray) -> np.ndarray:
        """Map additive time-domain noise into normalized grid coordinates."""
        sf = to_spectral_form(time_noise)
        scaled = SpectralForm(sf.real_part / self.stats.std_r, sf.imag_part / self.stats.std_i, sf.origin_len)
        return reshape_to_grid(scaled).data


class TimePreprocessor:
    """Scaled series laid directly on a 1-channel grid (no spectral step)."""

    domain = "time"
    stats = None

    def __init__(self, series_len: int):
        self.series_len = series_len

    @classmethod
    def fit(cls, values: np.ndarray) -> "TimePreprocessor":
        return cls(values.shape[1])

    def to_grid(self, values: np.ndarray) -> np.ndarray:
        if values.shape[-1] != self.series_len:
            raise ShapeError(f"series length {values.shape[-1]}, expected {self.series_len}")
        return vectors_to_grid([np.atleast_2d(values)]).data

    def from_grid(self, grid: np.ndarray) -> np.ndarray:
        side = grid.shape[-1]
        g = SpectralGrid(np.asarray(grid, dtype=np.float64), self.series_len, side * side - self.series_len)
        return grid_to_vectors(g)[0]

    def noise_to_grid(self, time_noise: np.ndarray) -> np.ndarray:
        return self.to_grid(time_noise)


def make_preprocessor(domain: str, values: np.ndarray):
    if domain == "frequency":
        return FrequencyPreprocessor.fit(values)
    if domain == "time":
        return TimePreprocessor.fit(values)
    raise ValueError(f"unknown domain {domain!r}")
