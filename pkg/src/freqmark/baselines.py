"""Conventional watermarkers used for comparison: LSB parity and Haar-DWT QIM."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .codec import WatermarkBits
from .dataio import TimeSeriesDataset
from .errors import CapacityError, InvalidSpec, ShapeError


@dataclass(frozen=True)
class LsbConfig:
    quant_step: float = 1e-4

    def __post_init__(self):
        if not self.quant_step > 0:
            raise InvalidSpec("quant_step must be > 0")


@dataclass(frozen=True)
class DwtConfig:
    level: int = 2
    alpha: float = 0.02
    band: str = "detail"

    def __post_init__(self):
        if self.level < 1:
            raise InvalidSpec("level must be >= 1")
        if not self.alpha > 0:
            raise InvalidSpec("alpha must be > 0")
        if self.band != "detail":
            raise InvalidSpec(f"unsupported band {self.band!r}")


def _snap_parity(values: np.ndarray, step: float, bits: np.ndarray) -> np.ndarray:
    """Move each value to a lattice point ``j * step`` with ``j % 2 == bit``.

    Picks the nearest such point, which is at most ``step`` away.
    """
    q = np.round(values / step)
    wrong = (q.astype(np.int64) % 2) != bits
    up = values >= q * step
    q = np.where(wrong, np.where(up, q + 1, q - 1), q)
    return q * step


def _read_parity(values: np.ndarray, step: float) -> np.ndarray:
    return (np.round(values / step).astype(np.int64) % 2).astype(np.uint8)


# -- LSB ----------------------------------------------------------------------


def lsb_embed(ds: TimeSeriesDataset, w: WatermarkBits, cfg: LsbConfig = LsbConfig()) -> TimeSeriesDataset:
    m = len(w)
    if m > ds.series_len:
        raise CapacityError(f"{m} bits do not fit in series of length {ds.series_len}")
    out = np.array(ds.values, copy=True)
    out[:, :m] = _snap_parity(out[:, :m], cfg.quant_step, w.bits[None, :])
    return ds.with_values(out, "lsb")


def lsb_extract_all(ds: TimeSeriesDataset, m: int, cfg: LsbConfig = LsbConfig()) -> list[WatermarkBits]:
    if m > ds.series_len:
        raise CapacityError(f"{m} bits do not fit in series of length {ds.series_len}")
    return [WatermarkBits(b) for b in _read_parity(ds.values[:, :m], cfg.quant_step)]


def lsb_extract(ds: TimeSeriesDataset, m: int, cfg: LsbConfig = LsbConfig()) -> WatermarkBits:
    """Bits read from the first series; see :func:`lsb_extract_all` for every row."""
    return lsb_extract_all(ds, m, cfg)[0]


# -- Haar ---------------------------------------------------------------------

_SQRT2 = np.sqrt(2.0)


def haar_dwt(series, level: int = 1) -> list[np.ndarray]:
    """Orthonormal Haar analysis: ``[approx_level, detail_level, ..., detail_1]``.

    Works along the last axis, so a 2-D array transforms every row.
    """
    x = np.asarray(series, dtype=np.float64)
    L = x.shape[-1]
    if level < 1 or L % (2**level):
        raise ShapeError(f"length {L} not divisible by 2**{level}")
    details = []
    for _ in range(level):
        even, odd = x[..., 0::2], x[..., 1::2]
        details.append((even - odd) / _SQRT2)
        x = (even + odd) / _SQRT2
    return [x] + details[::-1]


def haar_idwt(pyramid: list[np.ndarray]) -> np.ndarray:
    x = np.asarray(pyramid[0], dtype=np.float64)
    for d in pyramid[1:]:
        if d.shape != x.shape:
            raise ShapeError(f"detail band {d.shape} does not match approximation {x.shape}")
        out = np.empty(x.shape[:-1] + (2 * x.shape[-1],))
        out[..., 0::2] = (x + d) / _SQRT2
        out[..., 1::2] = (x - d) / _SQRT2
        x = out
    return x


def dwt_capacity(series_len: int, cfg: DwtConfig) -> int:
    return series_len - series_len // 2**cfg.level


def dwt_embed(ds: TimeSeriesDataset, w: WatermarkBits, cfg: DwtConfig = DwtConfig()) -> TimeSeriesDataset:
    """QIM on the concatenated detail bands (coarsest first)."""
    m = len(w)
    cap = dwt_capacity(ds.series_len, cfg)
    if m > cap:
        raise CapacityError(f"{m} bits exceed the detail-band capacity {cap}")
    pyr = haar_dwt(ds.values, cfg.level)
    details = np.concatenate(pyr[1:], axis=-1)
    details[:, :m] = _snap_parity(details[:, :m], cfg.alpha, w.bits[None, :])
    sizes = np.cumsum([d.shape[-1] for d in pyr[1:]])[:-1]
    pyr = [pyr[0]] + np.split(details, sizes, axis=-1)
    return ds.with_values(haar_idwt(pyr), "dwt")


def dwt_extract_all(ds: TimeSeriesDataset, m: int, cfg: DwtConfig = DwtConfig()) -> list[WatermarkBits]:
    cap = dwt_capacity(ds.series_len, cfg)
    if m > cap:
        raise CapacityError(f"{m} bits exceed the detail-band capacity {cap}")
    details = np.concatenate(haar_dwt(ds.values, cfg.level)[1:], axis=-1)
    return [WatermarkBits(b) for b in _read_parity(details[:, :m], cfg.alpha)]


def dwt_extract(ds: TimeSeriesDataset, m: int, cfg: DwtConfig = DwtConfig()) -> WatermarkBits:
    return dwt_extract_all(ds, m, cfg)[0]
