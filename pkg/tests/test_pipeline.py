import numpy as np
import pytest

from freqmark.codec import random_bits, text_to_bits
from freqmark.dataio import gen_synthetic_load, gen_synthetic_pv
from freqmark.errors import InvalidThreshold, LengthError, ShapeError
from freqmark.model import ArchitectureDescriptor, init_model
from freqmark.pipeline import (
    WatermarkBundle,
    embed_dataset,
    extract_bits,
    fine_tune_bundle,
    reproducible_timestamp,
    train_bundle,
    verify_dataset,
)
from freqmark.spectral import FrequencyPreprocessor
from freqmark.training import TrainConfig


@pytest.fixture(scope="module")
def ds():
    return gen_synthetic_load(48, 32, 5)


@pytest.fixture(scope="module")
def untrained(ds):
    return train_bundle(ds, text_to_bits("AB"), TrainConfig(epochs=0), enc_channels=(8, 16), dec_channels=(8,))[0]


def test_zero_delta_embed_is_identity(ds, untrained):
    out = embed_dataset(untrained, ds)
    assert out.values.shape == ds.values.shape
    assert np.max(np.abs(out.values - ds.values)) < 1e-6
    assert np.all(np.isfinite(out.values))


def test_extract_is_deterministic(ds, untrained):
    r1, a1 = extract_bits(untrained, ds)
    r2, a2 = extract_bits(untrained, ds)
    assert len(r1) == ds.series_count and np.array_equal(a1, a2)
    assert [str(x) for x in r1] == [str(x) for x in r2]


def test_verify_report(ds, untrained):
    rep = verify_dataset(untrained, ds)
    assert rep.m == 16 and rep.threshold == 0.75
    assert 0.0 <= rep.detection_rate <= 1.0
    d = rep.to_dict()
    assert len(d["series"]) == ds.series_count and "p_value" in d
    with pytest.raises(InvalidThreshold):
        verify_dataset(untrained, ds, 0.5)


def test_p_value_for_m100():
    ds = gen_synthetic_load(8, 32, 0)
    bundle = train_bundle(ds, random_bits(100, 0), TrainConfig(epochs=0), enc_channels=(4, 4), dec_channels=(4,))[0]
    assert 2.5e-7 <= verify_dataset(bundle, ds).p_value <= 3.1e-7


def test_length_checks(ds, untrained):
    other = gen_synthetic_load(4, 16, 0)
    for fn in (embed_dataset, extract_bits, verify_dataset):
        with pytest.raises(ShapeError):
            fn(untrained, other)
    with pytest.raises(LengthError):
        WatermarkBundle(untrained.model, untrained.stats, untrained.scale, random_bits(5, 0))


def test_bundle_save_load_round_trip(tmp_path, ds, untrained, monkeypatch):
    monkeypatch.delenv("SOURCE_DATE_EPOCH", raising=False)
    assert reproducible_timestamp() == "1970-01-01T00:00:00Z"
    path = tmp_path / "b.wmk"
    untrained.save(path)
    back = WatermarkBundle.load(path)
    assert str(back.watermark) == str(untrained.watermark) and back.watermark.source_text == "AB"
    assert np.array_equal(embed_dataset(back, ds).values, embed_dataset(untrained, ds).values)
    back.save(tmp_path / "c.wmk")
    assert path.read_bytes() == (tmp_path / "c.wmk").read_bytes()


def test_fine_tune_refits_statistics(ds, untrained):
    pv = gen_synthetic_pv(24, 32, 1)
    tuned, hist = fine_tune_bundle(untrained, pv, TrainConfig(epochs=1))
    assert len(hist) == 1
    assert not np.allclose(tuned.stats.mean_r, untrained.stats.mean_r)
    assert tuned.model.train_meta["fine_tune_epochs"] == 1
    with pytest.raises(ShapeError):
        fine_tune_bundle(untrained, gen_synthetic_pv(4, 16, 0), TrainConfig(epochs=1))
