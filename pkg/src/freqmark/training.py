"""Training objective, dynamic lambda schedule and the optimisation loop."""

from __future__ import annotations

import copy
import csv
import logging
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import torch

from .codec import WatermarkBits
from .dataio import TimeSeriesDataset
from .errors import DivergenceError, InvalidLambda, InvalidSpec, LengthError, ShapeError
from .model import WatermarkModel
from .spectral import make_preprocessor

log = logging.getLogger(__name__)

PROB_CLAMP = 1e-7


@dataclass
class TrainConfig:
    epochs: int = 300
    batch_size: int = 32
    learning_rate: float = 2e-3
    noise_std: float = 0.05
    lambda_max: float = 0.05
    accuracy_threshold: float = 0.95
    ramp_fraction: float = 0.2
    seed: int = 0
    noise_domain: str = "spectral"
    random_watermarks: bool = True
    lr_schedule: str = "constant"

    def __post_init__(self):
        if self.epochs < 0:
            raise InvalidSpec("epochs must be >= 0")
        if self.batch_size < 1:
            raise InvalidSpec("batch_size must be >= 1")
        if not 0.0 < self.accuracy_threshold <= 1.0:
            raise InvalidSpec("accuracy_threshold must lie in (0, 1]")
        if self.lambda_max < 0:
            raise InvalidLambda("lambda_max must be >= 0")
        if self.noise_std < 0:
            raise InvalidSpec("noise_std must be >= 0")
        if self.noise_domain not in ("spectral", "time"):
            raise InvalidSpec(f"noise_domain must be 'spectral' or 'time', got {self.noise_domain!r}")
        if self.lr_schedule not in ("constant", "cosine"):
            raise InvalidSpec(f"lr_schedule must be 'constant' or 'cosine', got {self.lr_schedule!r}")

    @property
    def ramp_epochs(self) -> int:
        return max(1, int(round(self.ramp_fraction * self.epochs)))

    @classmethod
    def from_mapping(cls, values: dict) -> "TrainConfig":
        known = {f.name: f.type for f in fields(cls)}
        kw = {}
        for key, raw in values.items():
            key = key.replace("-", "_")
            if key not in known or raw is None:
                continue
            default = getattr(cls, key)
            if isinstance(default, bool):
                kw[key] = raw if isinstance(raw, bool) else str(raw).lower() in ("1", "true", "yes", "on")
            else:
                kw[key] = type(default)(raw)
        return cls(**kw)


FINE_TUNE_FRACTION = 0.25


def fine_tune_config(base: TrainConfig | None = None, fraction: float = FINE_TUNE_FRACTION) -> TrainConfig:
    """Fine-tuning settings: a fraction of the base epoch budget with a cosine-annealed learning rate."""
    base = base or TrainConfig()
    return replace(base, epochs=max(1, int(math.floor(fraction * base.epochs + 1e-9))), lr_schedule="cosine")


@dataclass
class EpochRecord:
    epoch: int
    l_acc: float
    l_con: float
    l_emb: float
    lam: float
    accuracy: float


@dataclass
class TrainHistory:
    records: list[EpochRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "l_acc", "l_con", "l_emb", "lambda", "accuracy"])
            for r in self.records:
                w.writerow([r.epoch, repr(r.l_acc), repr(r.l_con), repr(r.l_emb), repr(r.lam), repr(r.accuracy)])


# -- loss terms ---------------------------------------------------------------
# These accept numpy arrays or tensors; tensors stay differentiable.


def _t(x):
    return x if isinstance(x, torch.Tensor) else torch.as_tensor(np.asarray(x, dtype=np.float64))


def _out(v, *inputs):
    return v if any(isinstance(x, torch.Tensor) for x in inputs) else float(v)


def loss_acc(w, probs):
    """Binary cross-entropy (mean over bits and batch), probabilities clamped."""
    bits = w.bits if isinstance(w, WatermarkBits) else w
    tb, tp = _t(bits), _t(probs)
    if tb.shape[-1] != tp.shape[-1]:
        raise LengthError(f"{tb.shape[-1]} bits vs {tp.shape[-1]} probabilities")
    tb = tb.to(tp.dtype)
    p = tp.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
    v = -(tb * torch.log(p) + (1.0 - tb) * torch.log(1.0 - p)).mean()
    return _out(v, bits, probs)


def _sq_dist(a, b, mask=None):
    ta, tb = _t(a), _t(b)
    if ta.shape != tb.shape:
        raise ShapeError(f"shape mismatch {tuple(ta.shape)} vs {tuple(tb.shape)}")
    d = (ta - tb) ** 2
    if mask is not None:
        d = d * _t(mask).to(d.dtype)
    return d


def loss_con(x_o, x_w, mask=None):
    """Squared L2 distance over non-padded cells; per-sample sums averaged over a batch.

    Inputs of shape (C, H, W) are treated as a single sample.
    """
    d = _sq_dist(x_o, x_w, mask)
    v = d.sum() if d.dim() <= 3 else d.flatten(1).sum(1).mean()
    return _out(v, x_o, x_w)


def loss_emb(e_o, e_w):
    """Squared L2 distance between embeddings; batch-averaged for 2-D input."""
    d = _sq_dist(e_o, e_w)
    v = d.sum() if d.dim() <= 1 else d.flatten(1).sum(1).mean()
    return _out(v, e_o, e_w)


def total_loss(l_acc, l_con, l_emb, lam):
    if lam < 0:
        raise InvalidLambda(f"lambda must be >= 0, got {lam}")
    return l_acc + lam * (l_con + l_emb)


def lambda_schedule(history: TrainHistory, cfg: TrainConfig, epoch: int) -> float:
    """0 until training accuracy first reaches the threshold, then a linear ramp to lambda_max."""
    trigger = None
    for r in history.records:
        if r.epoch >= epoch:
            break
        if r.accuracy >= cfg.accuracy_threshold:
            trigger = r.epoch
            break
    if trigger is None:
        return 0.0
    frac = min(1.0, max(0.0, (epoch - trigger) / cfg.ramp_epochs))
    return cfg.lambda_max * frac


def objective(model: WatermarkModel, x: torch.Tensor, w: torch.Tensor, lam: float, noise: torch.Tensor | None):
    """One forward pass: encode, add noise, decode; returns (total, parts, probs)."""
    x_w, e_o = model.encode(x, w, return_embedding=True)
    e_w = model.bottleneck(x_w, w)
    noised = x_w if noise is None else x_w + noise
    probs = model.decode(noised)
    l_acc = loss_acc(w.expand_as(probs), probs)
    l_con = loss_con(x, x_w, model.mask)
    l_emb = loss_emb(e_o, e_w)
    return total_loss(l_acc, l_con, l_emb, lam), (l_acc, l_con, l_emb), probs


# -- loop ---------------------------------------------------------------------


def _noise_for(prep, cfg: TrainConfig, shape, gen: torch.Generator, mask: torch.Tensor, rng: np.random.Generator):
    if cfg.noise_std == 0:
        return None
    if cfg.noise_domain == "spectral":
        return torch.randn(shape, generator=gen) * cfg.noise_std * mask
    time_noise = rng.normal(0.0, cfg.noise_std, size=(shape[0], prep.series_len))
    return torch.from_numpy(prep.noise_to_grid(time_noise).astype(np.float32))


def _run(model, ds, w, cfg, prep, start_meta: dict | None = None):
    if ds.series_len != model.arch.series_len:
        raise ShapeError(f"dataset series length {ds.series_len} != model's {model.arch.series_len}")
    if w is not None and len(w) != model.arch.m:
        raise LengthError(f"watermark has {len(w)} bits, model expects {model.arch.m}")
    if prep is None:
        prep = make_preprocessor(model.arch.domain, ds.values)

    grids = torch.from_numpy(prep.to_grid(ds.values).astype(np.float32))
    n, m = grids.shape[0], model.arch.m
    rng = np.random.default_rng(cfg.seed)
    gen = torch.Generator().manual_seed(int(cfg.seed))
    mask = model.mask
    fixed = None if w is None else torch.from_numpy(w.bits.astype(np.float32))
    opt = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate, betas=(0.9, 0.999))
    sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, max(1, cfg.epochs)) if cfg.lr_schedule == "cosine" else None
    history = TrainHistory()
    good_state = copy.deepcopy(model.state_dict())
    model.train()

    for epoch in range(cfg.epochs):
        lam = lambda_schedule(history, cfg, epoch)
        order = rng.permutation(n)
        sums = np.zeros(4)
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            x = grids[idx]
            if cfg.random_watermarks or fixed is None:
                wb = torch.from_numpy(rng.integers(0, 2, size=(len(idx), m)).astype(np.float32))
            else:
                wb = fixed.view(1, m)
            noise = _noise_for(prep, cfg, x.shape, gen, mask, rng)
            loss, (la, lc, le), probs = objective(model, x, wb, lam, noise)
            if not torch.isfinite(loss):
                model.load_state_dict(good_state)
                err = DivergenceError(f"non-finite loss at epoch {epoch}")
                err.history = history
                raise err
            opt.zero_grad()
            loss.backward()
            opt.step()
            acc = ((probs.detach() > 0.5).float() == wb).float().mean().item()
            k = len(idx)
            sums += k * np.array([la.item(), lc.item(), le.item(), acc])
        sums /= n
        history.records.append(EpochRecord(epoch, *map(float, sums[:3]), float(lam), float(sums[3])))
        good_state = copy.deepcopy(model.state_dict())
        if sched is not None:
            sched.step()
        if epoch % 20 == 0 or epoch == cfg.epochs - 1:
            log.info("epoch %d acc=%.4f l_acc=%.4f l_con=%.4g lam=%.3f", epoch, sums[3], sums[0], sums[1], lam)

    model.eval()
    meta = dict(start_meta or {})
    meta.update({
        "epochs": meta.get("epochs", 0) + cfg.epochs,
        "final_lambda": history.records[-1].lam if history.records else meta.get("final_lambda", 0.0),
        "seed": int(cfg.seed),
    })
    model.train_meta = {**model.train_meta, **meta}
    return model, history


def train(model: WatermarkModel, ds: TimeSeriesDataset, w: WatermarkBits | None, cfg: TrainConfig, prep=None):
    """Jointly optimise encoder and decoder on ``ds`` (already scaled to [0, 1]).

    With ``cfg.random_watermarks`` a fresh watermark is drawn per batch and
    ``w`` may be None; otherwise ``w`` is embedded throughout. Returns the
    (mutated) model and its per-epoch history.
    """
    return _run(model, ds, w, cfg, prep, start_meta={"init_seed": model.train_meta.get("init_seed")})


def fine_tune(model: WatermarkModel, new_ds: TimeSeriesDataset, w: WatermarkBits | None, cfg: TrainConfig, prep=None):
    """Continue training a pre-trained model on a new dataset of the same series length."""
    if new_ds.series_len != model.arch.series_len:
        raise ShapeError(f"fine-tune data has length {new_ds.series_len}, model expects {model.arch.series_len}")
    meta = dict(model.train_meta)
    meta["pretrain_epochs"] = meta.get("epochs", 0)
    model, hist = _run(model, new_ds, w, cfg, prep, start_meta=meta)
    model.train_meta["fine_tune_epochs"] = cfg.epochs
    return model, hist
