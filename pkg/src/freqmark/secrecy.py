"""Steganalysis by artificial training sets (ATS) against a watermarker."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .codec import random_bits
from .dataio import TimeSeriesDataset
from .errors import InvalidSpec, InvalidTrainingSet, MissingResource, ShapeError
from .pipeline import WatermarkBundle, embed_dataset, train_bundle
from .training import TrainConfig

Watermarker = Callable[[TimeSeriesDataset], TimeSeriesDataset]

LEVELS = ("weak", "moderate", "strong")


@dataclass
class LabeledSet:
    data: TimeSeriesDataset
    labels: np.ndarray

    def __len__(self) -> int:
        return len(self.labels)


@dataclass
class AtsSets:
    """A = D + W(D), B = W(A), C = W(B); labels are 0 for the half descending from D."""

    set_a: LabeledSet
    set_b: LabeledSet
    set_c: LabeledSet


def _stack(first: TimeSeriesDataset, second: TimeSeriesDataset, tag: str) -> TimeSeriesDataset:
    return TimeSeriesDataset(np.vstack([first.values, second.values]), tag)


def build_ats_sets(disclosed: TimeSeriesDataset, watermarker: Watermarker) -> AtsSets:
    n = disclosed.series_count
    labels = np.repeat(np.array([0, 1], dtype=np.int64), n)
    once = watermarker(disclosed)
    if once.values.shape != disclosed.values.shape:
        raise ShapeError("watermarker changed the dataset shape")
    a = _stack(disclosed, once, "ats_a")
    b = watermarker(a)
    c = watermarker(b)
    return AtsSets(LabeledSet(a, labels), LabeledSet(b, labels.copy()), LabeledSet(c, labels.copy()))


# -- linear classifier --------------------------------------------------------------


@dataclass(frozen=True)
class ClassifierConfig:
    epochs: int = 200
    reg: float = 1e-3
    batch_size: int = 32
    seed: int = 0


@dataclass
class LinearClassifier:
    weights: np.ndarray
    bias: float
    mean: np.ndarray
    std: np.ndarray

    def decision(self, values: np.ndarray) -> np.ndarray:
        return ((values - self.mean) / self.std) @ self.weights + self.bias

    def predict(self, data) -> np.ndarray:
        v = data.values if isinstance(data, TimeSeriesDataset) else np.asarray(data, dtype=np.float64)
        return (self.decision(v) > 0).astype(np.int64)

    def accuracy(self, data, labels) -> float:
        return float(np.mean(self.predict(data) == np.asarray(labels)))


def train_linear_classifier(pos, neg, cfg: ClassifierConfig = ClassifierConfig()) -> LinearClassifier:
    """Mini-batch Pegasos on the hinge loss over standardized flattened series.

    The bias is learned as an extra constant feature.
    """
    vp = pos.values if isinstance(pos, TimeSeriesDataset) else np.atleast_2d(np.asarray(pos, dtype=np.float64))
    vn = neg.values if isinstance(neg, TimeSeriesDataset) else np.atleast_2d(np.asarray(neg, dtype=np.float64))
    if vp.shape[0] == 0 or vn.shape[0] == 0 or vp.size == 0 or vn.size == 0:
        raise InvalidTrainingSet("both classes need at least one sample")
    if vp.shape[1] != vn.shape[1]:
        raise ShapeError("positive and negative samples differ in length")
    x = np.vstack([vp, vn])
    y = np.concatenate([np.ones(len(vp)), -np.ones(len(vn))])
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    std = np.where(std > 1e-12, std, 1.0)
    z = np.hstack([(x - mean) / std, np.ones((len(x), 1))])

    rng = np.random.default_rng(cfg.seed)
    w = np.zeros(z.shape[1])
    radius = 1.0 / np.sqrt(cfg.reg)
    t = 0
    for _ in range(cfg.epochs):
        order = rng.permutation(len(z))
        for start in range(0, len(z), cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            t += 1
            eta = 1.0 / (cfg.reg * t)
            zb, yb = z[idx], y[idx]
            viol = yb * (zb @ w) < 1.0
            grad = (yb[viol, None] * zb[viol]).sum(axis=0) / len(idx)
            w = (1.0 - eta * cfg.reg) * w + eta * grad
            norm = np.linalg.norm(w)
            if norm > radius:
                w *= radius / norm
    return LinearClassifier(w[:-1].copy(), float(w[-1]), mean, std)


def null_calibration(ds: TimeSeriesDataset, seed: int, cfg: ClassifierConfig | None = None) -> float:
    """Accuracy of a classifier trained on two random halves of the same population.

    The data are split into disjoint positive, negative and test parts; the test
    labels are random, so an honest classifier scores about 0.5.
    """
    if ds.series_count < 8:
        raise InvalidTrainingSet("need at least 8 series")
    cfg = cfg or ClassifierConfig(seed=seed)
    rng = np.random.default_rng(seed)
    order = rng.permutation(ds.series_count)
    q = ds.series_count // 4
    clf = train_linear_classifier(ds.subset(order[:q]), ds.subset(order[q : 2 * q]), cfg)
    test = ds.subset(order[2 * q :])
    labels = rng.permutation(np.arange(test.series_count) % 2)
    return clf.accuracy(test, labels)


# -- attack ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AttackerSpec:
    level: str = "weak"
    surrogate_count: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.level not in LEVELS:
            raise InvalidSpec(f"level must be one of {LEVELS}, got {self.level!r}")
        if self.surrogate_count < 1:
            raise InvalidSpec("surrogate_count must be >= 1")


@dataclass
class AttackReport:
    level: str
    surrogate_count: int
    seed: int
    per_surrogate_accuracy: list[float]
    mean_accuracy: float
    notes: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


@dataclass(frozen=True)
class AttackConfig:
    surrogate: TrainConfig = field(default_factory=lambda: TrainConfig(epochs=20))
    classifier: ClassifierConfig = ClassifierConfig()
    domain: str = "frequency"


def _bundle_watermarker(bundle: WatermarkBundle) -> Watermarker:
    return lambda ds: embed_dataset(bundle, ds)


def _surrogate(disclosed, spec: AttackerSpec, index: int, true_bundle, cfg: AttackConfig) -> WatermarkBundle:
    seed = spec.seed * 1000 + index
    if spec.level == "weak":
        m = true_bundle.model.arch.m if true_bundle is not None else 32
        wm = random_bits(m, seed)
    else:
        if true_bundle is None:
            raise MissingResource("the moderate attacker needs the owner watermark")
        wm = true_bundle.watermark
    tcfg = TrainConfig.from_mapping({**asdict(cfg.surrogate), "seed": seed})
    bundle, _ = train_bundle(disclosed, wm, tcfg, domain=cfg.domain, init_seed=seed)
    return bundle


def ats_attack(
    spec: AttackerSpec,
    disclosed: TimeSeriesDataset,
    true_bundle: WatermarkBundle | None = None,
    cfg: AttackConfig = AttackConfig(),
) -> AttackReport:
    """Train a detector on (C positive, A negative) sets and score it on B's descent labels.

    Weak and moderate attackers train ``surrogate_count`` watermarkers of their
    own plus one held-out watermarker that produces the test-side sets. The
    strong attacker uses the owner's bundle for both.
    """
    ccfg = ClassifierConfig(cfg.classifier.epochs, cfg.classifier.reg, cfg.classifier.batch_size, spec.seed)
    if spec.level == "strong":
        if true_bundle is None:
            raise MissingResource("the strong attacker needs the owner bundle")
        sets = build_ats_sets(disclosed, _bundle_watermarker(true_bundle))
        clf = train_linear_classifier(sets.set_c.data, sets.set_a.data, ccfg)
        acc = [clf.accuracy(sets.set_b.data, sets.set_b.labels)]
        return AttackReport(spec.level, 1, spec.seed, acc, acc[0])

    held_out = _surrogate(disclosed, spec, spec.surrogate_count, true_bundle, cfg)
    test = build_ats_sets(disclosed, _bundle_watermarker(held_out)).set_b
    accs = []
    for i in range(spec.surrogate_count):
        sets = build_ats_sets(disclosed, _bundle_watermarker(_surrogate(disclosed, spec, i, true_bundle, cfg)))
        clf = train_linear_classifier(sets.set_c.data, sets.set_a.data, ccfg)
        accs.append(clf.accuracy(test.data, test.labels))
    return AttackReport(spec.level, spec.surrogate_count, spec.seed, accs, float(np.mean(accs)))

