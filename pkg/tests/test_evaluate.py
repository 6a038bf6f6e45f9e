import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import linalg

from freqmark.dataio import TimeSeriesDataset
from freqmark.errors import DegenerateVector, InsufficientSamples, InvalidSpec, ShapeError
from freqmark.evaluate import (
    FreqBiasConfig,
    PerturbationSpec,
    binomial_pvalue,
    cosine_similarity,
    fid,
    frechet_distance,
    freq_bias_demo,
    invisibility_report,
    kl_divergence,
    pca_projection,
    perturb,
    rmse,
    series_statistics,
    spectral_similarity,
    write_rows_csv,
)


def exact_tail(m, s):
    """Oracle: P(X >= s), X ~ Bin(m, 1/2), in exact rational arithmetic."""
    return Fraction(sum(math.comb(m, k) for k in range(s, m + 1)), 2**m)


def test_binomial_examples():
    p = binomial_pvalue(100, 75)
    assert 2.5e-7 <= p <= 3.1e-7
    assert binomial_pvalue(7, 0) == 1.0
    assert binomial_pvalue(4, 4) == 0.0625
    with pytest.raises(InvalidSpec):
        binomial_pvalue(4, 5)


@pytest.mark.parametrize("m", [1, 5, 32, 64, 100])
def test_binomial_matches_big_integer_oracle(m):
    for s in range(m + 1):
        assert binomial_pvalue(m, s) == pytest.approx(float(exact_tail(m, s)), rel=1e-12)


@pytest.fixture
def pair(rng):
    a = TimeSeriesDataset(rng.uniform(0.1, 1, size=(20, 16)))
    return a, TimeSeriesDataset(a.values + rng.normal(0, 0.01, size=a.values.shape))


def test_rmse(pair):
    a, _ = pair
    assert rmse(a, a) == 0.0
    assert rmse(a, a.with_values(a.values + 0.01)) == pytest.approx(0.01)
    with pytest.raises(ShapeError):
        rmse(a, a.subset(range(3)))


def test_fid_identities(pair):
    a, b = pair
    assert fid(a, a) < 1e-8
    assert fid(a, b) == pytest.approx(fid(b, a), rel=1e-9)
    assert fid(a, b) >= 0.0
    with pytest.raises(InsufficientSamples):
        fid(a.subset([0]), b)


def test_fid_closed_form_gaussians():
    rng = np.random.default_rng(0)
    d = 4
    mu_a, mu_b = np.zeros(d), np.array([1.0, -0.5, 0.2, 0.0])
    qa, qb = rng.normal(size=(d, d)), rng.normal(size=(d, d))
    cov_a, cov_b = qa @ qa.T / d + 0.5 * np.eye(d), qb @ qb.T / d + 0.5 * np.eye(d)
    # independent oracle via scipy's general matrix square root
    root = linalg.sqrtm(cov_a @ cov_b).real
    truth = float(np.sum((mu_a - mu_b) ** 2) + np.trace(cov_a + cov_b - 2 * root))
    assert frechet_distance(mu_a, cov_a, mu_b, cov_b) == pytest.approx(truth, rel=1e-9)
    xa = rng.multivariate_normal(mu_a, cov_a, size=10_000)
    xb = rng.multivariate_normal(mu_b, cov_b, size=10_000)
    assert fid(xa, xb) == pytest.approx(truth, rel=0.05)


def test_cosine_and_spectral_similarity(rng):
    a = TimeSeriesDataset(rng.normal(size=(6, 16)) + 2)
    assert cosine_similarity(a, a) == pytest.approx(1.0)
    assert spectral_similarity(a, a) == pytest.approx(1.0)
    assert cosine_similarity(a, a.with_values(2 * a.values)) == pytest.approx(1.0)
    shifted = a.with_values(np.roll(a.values - 2, 8, axis=1))
    base = a.with_values(a.values - 2)
    assert spectral_similarity(base, shifted) == pytest.approx(1.0)
    assert cosine_similarity(base, shifted) < 1.0
    with pytest.raises(DegenerateVector):
        cosine_similarity(np.zeros((1, 4)), np.ones((1, 4)))


def test_kl(pair, rng):
    a, b = pair
    assert kl_divergence(a, a) < 1e-9
    far = kl_divergence(np.zeros((2, 4)), np.ones((2, 4)))
    assert far > 10
    with pytest.raises(InvalidSpec):
        kl_divergence(a, b, bins=1)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31))
def test_kl_nonnegative(seed):
    r = np.random.default_rng(seed)
    assert kl_divergence(r.normal(size=(4, 8)), r.uniform(size=(4, 8))) >= 0.0


def test_report(pair):
    a, b = pair
    rep = invisibility_report(a, b, source="x")
    assert rep.rmse > 0 and rep.fid >= 0 and -1 <= rep.cs <= 1 and -1 <= rep.ss <= 1 and rep.kl >= 0
    assert rep.to_dict()["tags"] == {"source": "x"}


def test_perturb_examples(rng):
    ds = TimeSeriesDataset(rng.uniform(size=(100, 1000)))
    assert np.array_equal(perturb(ds, PerturbationSpec("gaussian_noise", 0.1, affected_fraction=0.0)).values, ds.values)
    assert np.array_equal(perturb(ds, PerturbationSpec("missing_mask", missing_ratio=0.0)).values, ds.values)
    assert np.all(perturb(ds, PerturbationSpec("missing_mask", missing_ratio=1.0)).values == 0)
    diff = perturb(ds, PerturbationSpec("gaussian_noise", 0.1, 1.0, seed=3)).values - ds.values
    assert abs(diff.std() - 0.1) < 0.002
    half = perturb(ds, PerturbationSpec("gaussian_noise", 0.1, 0.5, seed=3)).values - ds.values
    assert int(np.sum(np.any(half != 0, axis=1))) == 50
    masked = perturb(ds, PerturbationSpec("missing_mask", missing_ratio=0.15, seed=1)).values
    assert np.all(np.sum(masked == 0, axis=1) == 150)
    again = perturb(ds, PerturbationSpec("missing_mask", missing_ratio=0.15, seed=1)).values
    assert np.array_equal(masked, again)


@pytest.mark.parametrize(
    "kw", [dict(kind="blur"), dict(noise_std=-1), dict(affected_fraction=1.5), dict(missing_ratio=-0.1)]
)
def test_perturbation_spec_validation(kw):
    with pytest.raises(InvalidSpec):
        PerturbationSpec(**kw)


def test_exports(tmp_path, pair):
    a, b = pair
    stats = series_statistics(a)
    assert stats.shape == (20, 2) and np.allclose(stats[:, 1], a.values.max(axis=1))
    pa, pb = pca_projection(a, b)
    assert pa.shape == (20, 2) and pb.shape == (20, 2)
    write_rows_csv([{"x": 1.5, "y": "a"}], tmp_path / "r.csv")
    assert (tmp_path / "r.csv").read_text().splitlines() == ["x,y", "1.5,a"]


def test_freq_bias_untrained_baseline():
    rows = freq_bias_demo("frequency", FreqBiasConfig(epochs=0))
    assert all(rows[0][f"delta_{f}"] > 0.5 for f in (1, 5, 10))
    with pytest.raises(InvalidSpec):
        freq_bias_demo("phase")
