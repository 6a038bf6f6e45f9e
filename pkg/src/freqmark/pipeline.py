"""End-to-end embedding and blind verification.

A :class:`WatermarkBundle` carries everything the owner needs: the trained
networks, the spectral statistics and value scale fitted at training time, and
the owner watermark. Verification uses only the bundle and the suspect data.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np
import torch

from .codec import WatermarkBits, bitwise_accuracy
from .dataio import ScaleInfo, TimeSeriesDataset, normalize_dataset
from .errors import InvalidThreshold, LengthError, ShapeError
from .model import ArchitectureDescriptor, WatermarkModel, init_model, read_checkpoint, save_checkpoint
from .spectral import FrequencyPreprocessor, NormStats, TimePreprocessor
from .training import TrainConfig, TrainHistory, fine_tune, train

DETECTION_THRESHOLD = 0.75


def reproducible_timestamp() -> str:
    """UTC timestamp honouring SOURCE_DATE_EPOCH (defaults to the epoch for byte-stable artifacts)."""
    epoch = int(os.environ.get("SOURCE_DATE_EPOCH", "0"))
    return datetime.fromtimestamp(epoch, tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass
class WatermarkBundle:
    model: WatermarkModel
    stats: NormStats | None
    scale: ScaleInfo
    watermark: WatermarkBits
    created: str = field(default_factory=reproducible_timestamp)

    def __post_init__(self):
        arch = self.model.arch
        if len(self.watermark) != arch.m:
            raise LengthError(f"watermark has {len(self.watermark)} bits, model expects {arch.m}")
        if arch.domain == "frequency" and (self.stats is None or self.stats.bins != arch.bins):
            raise ShapeError("spectral statistics do not match the model grid")

    @property
    def preprocessor(self):
        arch = self.model.arch
        if arch.domain == "frequency":
            return FrequencyPreprocessor(self.stats, arch.series_len)
        return TimePreprocessor(arch.series_len)

    def save(self, path) -> None:
        extra = {
            "watermark": str(self.watermark),
            "source_text": self.watermark.source_text,
            "created": self.created,
        }
        save_checkpoint(self.model, self.stats, self.scale, path, extra=extra)

    @classmethod
    def load(cls, path) -> "WatermarkBundle":
        model, stats, scale, extra = read_checkpoint(path)
        bits = WatermarkBits.from_string(extra["watermark"])
        if extra.get("source_text") is not None:
            bits = WatermarkBits(bits.bits, extra["source_text"])
        return cls(model, stats, scale, bits, extra.get("created", reproducible_timestamp()))


def _check_len(bundle: WatermarkBundle, ds: TimeSeriesDataset) -> None:
    if ds.series_len != bundle.model.arch.series_len:
        raise ShapeError(f"series length {ds.series_len}, bundle expects {bundle.model.arch.series_len}")


def train_bundle(
    ds: TimeSeriesDataset,
    watermark: WatermarkBits,
    cfg: TrainConfig,
    domain: str = "frequency",
    init_seed: int | None = None,
    **arch_kw,
) -> tuple[WatermarkBundle, TrainHistory]:
    """Scale ``ds``, fit preprocessing statistics, build and train a model."""
    scaled, scale = normalize_dataset(ds)
    arch = ArchitectureDescriptor.for_series(ds.series_len, len(watermark), domain=domain, **arch_kw)
    prep = FrequencyPreprocessor.fit(scaled.values) if domain == "frequency" else TimePreprocessor.fit(scaled.values)
    model = init_model(arch, cfg.seed if init_seed is None else init_seed)
    model, history = train(model, scaled, watermark, cfg, prep)
    return WatermarkBundle(model, prep.stats, scale, watermark), history


def fine_tune_bundle(
    bundle: WatermarkBundle, new_ds: TimeSeriesDataset, cfg: TrainConfig, watermark: WatermarkBits | None = None
) -> tuple[WatermarkBundle, TrainHistory]:
    """Adapt a trained bundle to a new dataset; statistics and scale are refitted on it."""
    _check_len(bundle, new_ds)
    scaled, scale = normalize_dataset(new_ds)
    arch = bundle.model.arch
    prep = FrequencyPreprocessor.fit(scaled.values) if arch.domain == "frequency" else TimePreprocessor.fit(scaled.values)
    model = init_model(arch, 0)
    model.load_state_dict(bundle.model.state_dict())
    model.train_meta = dict(bundle.model.train_meta)
    wm = watermark or bundle.watermark
    model, history = fine_tune(model, scaled, wm, cfg, prep)
    return WatermarkBundle(model, prep.stats, scale, wm), history


def _bits_tensor(w: WatermarkBits) -> torch.Tensor:
    return torch.from_numpy(w.bits.astype(np.float32)).view(1, -1)


def embed_values(bundle: WatermarkBundle, scaled: np.ndarray, watermark: WatermarkBits | None = None) -> np.ndarray:
    """Embed into already-scaled values; the residual is added in float64."""
    w = watermark or bundle.watermark
    prep, model = bundle.preprocessor, bundle.model
    grid = prep.to_grid(scaled)
    with torch.no_grad():
        delta, _ = model.residual(torch.from_numpy(grid.astype(np.float32)), _bits_tensor(w))
        delta = delta.double().numpy()
    return prep.from_grid(grid + model.arch.residual_gain * delta)


def embed_dataset(bundle: WatermarkBundle, ds: TimeSeriesDataset, watermark: WatermarkBits | None = None) -> TimeSeriesDataset:
    _check_len(bundle, ds)
    out = embed_values(bundle, bundle.scale.apply(ds.values), watermark)
    return ds.with_values(bundle.scale.invert(out), "watermarked")


def decode_probabilities(bundle: WatermarkBundle, ds: TimeSeriesDataset) -> np.ndarray:
    _check_len(bundle, ds)
    grid = bundle.preprocessor.to_grid(bundle.scale.apply(ds.values))
    with torch.no_grad():
        return bundle.model.decode(torch.from_numpy(grid.astype(np.float32))).double().numpy()


def extract_bits(bundle: WatermarkBundle, ds: TimeSeriesDataset) -> tuple[list[WatermarkBits], np.ndarray]:
    """Recovered bits per series and their bitwise accuracy against the bundle watermark."""
    probs = decode_probabilities(bundle, ds)
    recovered = [WatermarkBits((p > 0.5).astype(np.uint8)) for p in probs]
    acc = np.array([bitwise_accuracy(bundle.watermark, r) for r in recovered])
    return recovered, acc


@dataclass
class VerificationReport:
    accuracies: np.ndarray
    detected: np.ndarray
    threshold: float
    m: int
    p_value: float

    @property
    def detection_rate(self) -> float:
        return float(np.mean(self.detected))

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "m": self.m,
            "p_value": self.p_value,
            "detection_rate": self.detection_rate,
            "series_count": int(len(self.detected)),
            "mean_accuracy": float(np.mean(self.accuracies)),
            "series": [
                {"index": i, "accuracy": float(a), "detected": bool(d)}
                for i, (a, d) in enumerate(zip(self.accuracies, self.detected))
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def verify_dataset(bundle: WatermarkBundle, ds: TimeSeriesDataset, threshold: float = DETECTION_THRESHOLD) -> VerificationReport:
    from .evaluate import binomial_pvalue

    if not 0.5 < threshold <= 1.0:
        raise InvalidThreshold(f"threshold must lie in (0.5, 1], got {threshold}")
    _, acc = extract_bits(bundle, ds)
    m = bundle.model.arch.m
    needed = math.ceil(threshold * m - 1e-9)
    return VerificationReport(acc, acc >= threshold, threshold, m, binomial_pvalue(m, needed))
