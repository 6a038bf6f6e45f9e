"""Measurements: invisibility metrics, perturbations, sweeps and detection statistics."""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from .codec import WatermarkBits, random_bits
from .dataio import TimeSeriesDataset, gen_sine_mixture
from .errors import DegenerateVector, InsufficientSamples, InvalidSpec, ShapeError
from .pipeline import DETECTION_THRESHOLD, WatermarkBundle, embed_dataset, extract_bits, train_bundle, verify_dataset
from .spectral import dft, relative_error
from .training import TrainConfig

FID_SHRINKAGE = 1e-6
KL_BINS = 100
KL_SMOOTHING = 1e-10


def _values(x) -> np.ndarray:
    return x.values if isinstance(x, TimeSeriesDataset) else np.atleast_2d(np.asarray(x, dtype=np.float64))


def _pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    va, vb = _values(a), _values(b)
    if va.shape != vb.shape:
        raise ShapeError(f"shape mismatch {va.shape} vs {vb.shape}")
    return va, vb


# -- invisibility metrics -------------------------------------------------------


def rmse(a, b) -> float:
    va, vb = _pair(a, b)
    return float(np.sqrt(np.mean((va - vb) ** 2)))


def _sqrt_psd(mat: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh((mat + mat.T) / 2)
    return (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T


def frechet_distance(mu_a, cov_a, mu_b, cov_b) -> float:
    """||mu_a - mu_b||^2 + tr(S_a + S_b - 2 (S_a S_b)^(1/2)) for PSD covariances."""
    root_a = _sqrt_psd(cov_a)
    inner = root_a @ cov_b @ root_a
    vals = np.clip(np.linalg.eigvalsh((inner + inner.T) / 2), 0.0, None)
    d = float(np.sum((mu_a - mu_b) ** 2) + np.trace(cov_a) + np.trace(cov_b) - 2.0 * np.sum(np.sqrt(vals)))
    return max(d, 0.0)


def fid(a, b, shrinkage: float = FID_SHRINKAGE) -> float:
    """Fréchet distance between Gaussian fits of the two sets of raw series."""
    va, vb = _values(a), _values(b)
    if va.shape[0] < 2 or vb.shape[0] < 2:
        raise InsufficientSamples("FID needs at least two series per set")
    if va.shape[1] != vb.shape[1]:
        raise ShapeError("feature dimensions differ")
    eye = shrinkage * np.eye(va.shape[1])
    return frechet_distance(
        va.mean(axis=0), np.cov(va, rowvar=False) + eye, vb.mean(axis=0), np.cov(vb, rowvar=False) + eye
    )


def _row_cosine(va: np.ndarray, vb: np.ndarray) -> float:
    na, nb = np.linalg.norm(va, axis=1), np.linalg.norm(vb, axis=1)
    if np.any(na == 0) or np.any(nb == 0):
        raise DegenerateVector("zero-norm series")
    return float(np.mean(np.sum(va * vb, axis=1) / (na * nb)))


def cosine_similarity(a, b) -> float:
    return _row_cosine(*_pair(a, b))


def amplitude_spectrum(values: np.ndarray) -> np.ndarray:
    L = values.shape[1]
    return np.abs(dft(values)[:, : L // 2 + 1])


def spectral_similarity(a, b) -> float:
    va, vb = _pair(a, b)
    return _row_cosine(amplitude_spectrum(va), amplitude_spectrum(vb))


def kl_divergence(a, b, bins: int = KL_BINS) -> float:
    """KL(P_a || P_b) of shared-range value histograms over all cells."""
    if bins < 2:
        raise InvalidSpec("need at least 2 bins")
    va, vb = _values(a).ravel(), _values(b).ravel()
    lo, hi = min(va.min(), vb.min()), max(va.max(), vb.max())
    if hi <= lo:
        hi = lo + 1.0
    pa = np.histogram(va, bins=bins, range=(lo, hi))[0] + KL_SMOOTHING
    pb = np.histogram(vb, bins=bins, range=(lo, hi))[0] + KL_SMOOTHING
    pa, pb = pa / pa.sum(), pb / pb.sum()
    return float(max(np.sum(pa * np.log(pa / pb)), 0.0))


@dataclass
class MetricsReport:
    rmse: float
    fid: float
    cs: float
    ss: float
    kl: float
    tags: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def invisibility_report(original, modified, **tags) -> MetricsReport:
    return MetricsReport(
        rmse=rmse(original, modified),
        fid=fid(original, modified),
        cs=cosine_similarity(original, modified),
        ss=spectral_similarity(original, modified),
        kl=kl_divergence(original, modified),
        tags=tags,
    )


def series_statistics(ds) -> np.ndarray:
    """Per-series (mean, peak) pairs for distribution comparisons."""
    v = _values(ds)
    return np.column_stack([v.mean(axis=1), v.max(axis=1)])


def pca_projection(*datasets) -> list[np.ndarray]:
    """Project every dataset onto the top-2 principal axes of their union."""
    stacked = np.vstack([_values(d) for d in datasets])
    mu = stacked.mean(axis=0)
    _, _, vt = np.linalg.svd(stacked - mu, full_matrices=False)
    return [(_values(d) - mu) @ vt[:2].T for d in datasets]


# -- detection statistics ---------------------------------------------------------


def binomial_pvalue(m: int, successes: int) -> float:
    """P(X >= successes) for X ~ Binomial(m, 1/2), summed in log space."""
    if not 0 <= successes <= m:
        raise InvalidSpec(f"successes must lie in [0, {m}]")
    if successes == 0:
        return 1.0
    logs = [math.lgamma(m + 1) - math.lgamma(k + 1) - math.lgamma(m - k + 1) for k in range(successes, m + 1)]
    top = max(logs)
    log_sum = top + math.log(sum(math.exp(v - top) for v in logs))
    return float(min(1.0, math.exp(log_sum - m * math.log(2.0))))


def success_rate(accuracies, threshold: float = DETECTION_THRESHOLD) -> float:
    return float(np.mean(np.asarray(accuracies) >= threshold))


def accuracies_against(w: WatermarkBits, recovered: list[WatermarkBits]) -> np.ndarray:
    return np.array([np.mean(w.bits == r.bits) for r in recovered])


# -- perturbations ----------------------------------------------------------------


@dataclass(frozen=True)
class PerturbationSpec:
    kind: str = "gaussian_noise"
    noise_std: float = 0.0
    affected_fraction: float = 1.0
    missing_ratio: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("gaussian_noise", "missing_mask", "none"):
            raise InvalidSpec(f"unknown perturbation kind {self.kind!r}")
        if self.noise_std < 0:
            raise InvalidSpec("noise_std must be >= 0")
        if not 0.0 <= self.affected_fraction <= 1.0:
            raise InvalidSpec("affected_fraction must lie in [0, 1]")
        if not 0.0 <= self.missing_ratio <= 1.0:
            raise InvalidSpec("missing_ratio must lie in [0, 1]")

    def label(self) -> str:
        if self.kind == "gaussian_noise":
            return f"noise(std={self.noise_std:g},frac={self.affected_fraction:g})"
        if self.kind == "missing_mask":
            return f"missing({self.missing_ratio:g})"
        return "none"


def perturb(ds: TimeSeriesDataset, spec: PerturbationSpec) -> TimeSeriesDataset:
    rng = np.random.default_rng(spec.seed)
    v = np.array(ds.values, copy=True)
    n, L = v.shape
    if spec.kind == "gaussian_noise":
        k = int(math.floor(spec.affected_fraction * n + 1e-9))
        rows = rng.choice(n, size=k, replace=False)
        v[rows] += rng.normal(0.0, spec.noise_std, size=(k, L))
    elif spec.kind == "missing_mask":
        k = int(math.floor(spec.missing_ratio * L + 1e-9))
        for i in range(n):
            v[i, rng.choice(L, size=k, replace=False)] = 0.0
    return ds.with_values(v, f"{ds.source_tag}+{spec.label()}")


# -- sweeps -----------------------------------------------------------------------


@dataclass
class SweepRow:
    label: str
    mean_accuracy: float
    success_rate: float
    spec: dict


def robustness_sweep(bundle: WatermarkBundle, ds_watermarked: TimeSeriesDataset, grid: list[PerturbationSpec]) -> list[SweepRow]:
    rows = []
    for spec in grid:
        _, acc = extract_bits(bundle, perturb(ds_watermarked, spec))
        rows.append(SweepRow(spec.label(), float(acc.mean()), success_rate(acc), asdict(spec)))
    return rows


def false_positive_test(bundle: WatermarkBundle, originals: TimeSeriesDataset, watermarked: TimeSeriesDataset) -> tuple[float, float]:
    """(false-positive rate on originals, true-positive rate on watermarked)."""
    if originals is None or watermarked is None or originals.series_count == 0 or watermarked.series_count == 0:
        raise InvalidSpec("both datasets must be non-empty")
    return verify_dataset(bundle, originals).detection_rate, verify_dataset(bundle, watermarked).detection_rate


@dataclass
class CapacityRow:
    m: int
    clean_accuracy: float
    fid: float
    rmse: float


def capacity_sweep(ds: TimeSeriesDataset, lengths: list[int], cfg: TrainConfig, watermark_seed: int = 0, **arch_kw) -> list[CapacityRow]:
    if not lengths or min(lengths) < 1:
        raise InvalidSpec("watermark lengths must be positive")
    rows = []
    for m in lengths:
        w = random_bits(m, watermark_seed + m)
        bundle, _ = train_bundle(ds, w, cfg, **arch_kw)
        wm = embed_dataset(bundle, ds)
        _, acc = extract_bits(bundle, wm)
        rows.append(CapacityRow(m, float(acc.mean()), fid(ds, wm), rmse(ds, wm)))
    return rows


def write_rows_csv(rows, path) -> None:
    dicts = [r if isinstance(r, dict) else asdict(r) for r in rows]
    if not dicts:
        Path(path).write_text("", encoding="utf-8")
        return
    keys = [k for k in dicts[0] if not isinstance(dicts[0][k], dict)]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(keys)
        for d in dicts:
            w.writerow([repr(d[k]) if isinstance(d[k], float) else d[k] for k in keys])


# -- frequency-bias demonstration ---------------------------------------------------


FREQUENCY_CASE = [(1, 1.0), (5, 1.0), (10, 1.0)]
AMPLITUDE_CASES = {
    "a1>a5>a10": [(1, 1.0), (5, 0.5), (10, 0.25)],
    "a5>a10>a1": [(1, 0.25), (5, 1.0), (10, 0.5)],
    "a10>a5>a1": [(1, 0.25), (5, 0.5), (10, 1.0)],
}


@dataclass
class FreqBiasConfig:
    length: int = 128
    hidden: int = 128
    epochs: int = 1000
    learning_rate: float = 1e-2
    seed: int = 0


def fit_two_layer(target: np.ndarray, cfg: FreqBiasConfig) -> np.ndarray:
    """Fit y(t) with a one-hidden-layer tanh network (full batch, Adam); return predictions."""
    L = len(target)
    t = torch.linspace(0.0, 1.0, L + 1, dtype=torch.float64)[:-1].view(-1, 1)
    y = torch.as_tensor(target, dtype=torch.float64).view(-1, 1)
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(cfg.seed)
        net = torch.nn.Sequential(torch.nn.Linear(1, cfg.hidden), torch.nn.Tanh(), torch.nn.Linear(cfg.hidden, 1)).double()
    opt = torch.optim.Adam(net.parameters(), lr=cfg.learning_rate)
    for _ in range(cfg.epochs):
        opt.zero_grad()
        loss = torch.mean((net(t) - y) ** 2)
        loss.backward()
        opt.step()
    with torch.no_grad():
        return net(t).view(-1).numpy()


def freq_bias_demo(kind: str = "frequency", cfg: FreqBiasConfig = FreqBiasConfig()) -> list[dict]:
    """Relative error per primary frequency after fitting sine mixtures in the time domain.

    ``kind="frequency"`` fits one equal-amplitude mixture of 1, 5 and 10 cycles;
    ``kind="amplitude"`` fits the three amplitude orderings.
    """
    if kind == "frequency":
        cases = {"equal": FREQUENCY_CASE}
    elif kind == "amplitude":
        cases = AMPLITUDE_CASES
    else:
        raise InvalidSpec(f"kind must be 'frequency' or 'amplitude', got {kind!r}")
    rows = []
    for name, comps in cases.items():
        target = gen_sine_mixture(comps, cfg.length)
        pred = fit_two_layer(target, cfg)
        row = {"case": name}
        for f, _ in comps:
            row[f"delta_{f}"] = relative_error(pred, target, f)
        rows.append(row)
    return rows
