"""Likelihood scores, consistency and distortion measures, latent form."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blindkit.degrade import ChainFlags, DegradationParams, degrade, mean_measurement
from blindkit.estimator import ParamPrediction
from blindkit.metrics import (
    MetricReport,
    cmse,
    default_embedder,
    ela_score,
    ela_score_blind,
    embed,
    log_likelihood_gaussian,
    lpips_form,
    mse,
    proxlpips,
    proxmse,
    proxmse_batch,
    proxmse_error_bound,
    psnr,
)
from blindkit.suites import synthetic_portrait
from blindkit.tensor_io import ImageTensor, SeededRng

FULL = ChainFlags()


def _rand(seed, h, w, c=1):
    g = np.random.default_rng(seed)
    return ImageTensor(g.uniform(0, 1, (h, w, c)))


# ---------------------------------------------------------------------------
# gaussian log likelihood


def test_loglik_zero_at_match():
    y = _rand(1, 5, 5)
    assert log_likelihood_gaussian(y, y) == 0.0


def test_loglik_single_pixel_unit_difference():
    y = ImageTensor(np.zeros((2, 2, 1)))
    hx = ImageTensor(np.array([[[1.0], [0.0]], [[0.0], [0.0]]]))
    assert log_likelihood_gaussian(y, hx) == -1.0


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_loglik_never_positive(seed):
    g = np.random.default_rng(seed)
    y = ImageTensor(g.uniform(0, 1, (4, 4, 1)))
    hx = ImageTensor(g.uniform(0, 1, (4, 4, 1)))
    assert log_likelihood_gaussian(y, hx) <= 0.0


def test_loglik_dim_mismatch():
    with pytest.raises(ValueError):
        log_likelihood_gaussian(_rand(2, 4, 4), _rand(3, 5, 5))


# ---------------------------------------------------------------------------
# likelihood approximation with the chain mean


def test_ela_score_zero_when_y_equals_mean():
    x = synthetic_portrait(SeededRng(60), 16, 1)
    a = DegradationParams(1.0, 2.0, 0.02, 70.0)
    mu, _ = mean_measurement(x, a, FULL, 8, SeededRng(61))
    assert ela_score(mu, x, a, FULL, 8, SeededRng(61)) == 0.0


def test_ela_score_equals_loglik_on_deterministic_chain():
    x = synthetic_portrait(SeededRng(62), 16, 1)
    a = DegradationParams(1.2, 2.0, 0.0, 70.0)
    flags = ChainFlags(enable_jpeg=False)
    y = degrade(x, a, flags, SeededRng(0))
    det = degrade(x, a, flags, SeededRng(1))
    assert ela_score(y, x, a, flags, 4, SeededRng(2)) == pytest.approx(
        log_likelihood_gaussian(y, det), rel=1e-12
    )


def test_ela_score_quadratic_along_perturbation_ray():
    x = synthetic_portrait(SeededRng(63), 16, 1)
    a = DegradationParams(1.0, 2.0, 0.0, 70.0)
    flags = ChainFlags(enable_jpeg=False)
    y = degrade(x, a, flags, SeededRng(0))
    g = np.random.default_rng(64)
    direction = g.uniform(-1, 1, x.shape)
    scores = []
    for t in (0.0, 0.02, 0.05, 0.1):
        xt = ImageTensor(np.clip(x.data + t * direction, 0, 1))
        scores.append(ela_score(y, xt, a, flags, 4, SeededRng(65)))
    assert all(s1 >= s2 for s1, s2 in zip(scores, scores[1:]))


def test_blind_score_identical_with_true_prediction():
    x = synthetic_portrait(SeededRng(66), 16, 1)
    a = DegradationParams(1.0, 2.0, 0.02, 70.0)
    y = degrade(x, a, FULL, SeededRng(1))
    pred = ParamPrediction(params=a, objective=0.0, source="external")
    assert ela_score_blind(y, x, pred, FULL, 8, SeededRng(2)) == ela_score(
        y, x, a, FULL, 8, SeededRng(2)
    )


def test_blind_score_dimension_mismatch_on_wrong_scale():
    x = synthetic_portrait(SeededRng(67), 32, 1)
    a = DegradationParams(1.0, 2.0, 0.01, 80.0)
    y = degrade(x, a, FULL, SeededRng(1))
    wrong = ParamPrediction(params=a.replace(scale=8.0), objective=0.0, source="external")
    with pytest.raises(ValueError):
        ela_score_blind(y, x, wrong, FULL, 4, SeededRng(2))


# ---------------------------------------------------------------------------
# consistency


def test_cmse_zero_on_deterministic_chain_with_truth():
    x = synthetic_portrait(SeededRng(68), 16, 1)
    a = DegradationParams(1.0, 2.0, 0.0, 70.0)
    flags = ChainFlags(enable_jpeg=False)
    y = degrade(x, a, flags, SeededRng(0))
    assert cmse([(x, y, a)], flags, 4, SeededRng(1)) == pytest.approx(0.0, abs=1e-18)


def test_cmse_vanishes_with_many_samples():
    # Against the exact deterministic chain output, the only residual is the
    # Monte Carlo error of the mean, which scales like sigma^2 / m.
    x = synthetic_portrait(SeededRng(69), 16, 1)
    sigma = 6 / 255
    a = DegradationParams(1.0, 2.0, sigma, 70.0)
    flags = ChainFlags(enable_jpeg=False)
    y = degrade(x, a.replace(sigma_n=0.0), flags, SeededRng(2))
    few = cmse([(x, y, a)], flags, 4, SeededRng(3))
    many = cmse([(x, y, a)], flags, 512, SeededRng(3))
    assert many < few
    assert many <= 3 * 65025 * sigma**2 / 512


def test_cmse_order_invariant():
    xs = [synthetic_portrait(SeededRng(70 + i), 12, 1) for i in range(3)]
    a = DegradationParams(1.0, 2.0, 0.02, 70.0)
    pairs = [(x, degrade(x, a, FULL, SeededRng(80 + i)), a) for i, x in enumerate(xs)]
    fwd = cmse(pairs, FULL, 8, SeededRng(90))
    rev = cmse(list(reversed(pairs)), FULL, 8, SeededRng(90))
    assert fwd == pytest.approx(rev, rel=1e-12)


def test_cmse_empty_rejected():
    with pytest.raises(ValueError):
        cmse([], FULL, 4, SeededRng(0))


# ---------------------------------------------------------------------------
# distortion


def test_mse_psnr_sentinels_and_values():
    x = _rand(71, 4, 4)
    assert mse(x, x) == 0.0
    assert psnr(x, x) == float("inf")
    zeros = ImageTensor(np.zeros((3, 3, 1)))
    ones = ImageTensor(np.ones((3, 3, 1)))
    assert mse(zeros, ones) == pytest.approx(65025.0)


def test_mse_one_quarter_for_single_lsb_error():
    x = ImageTensor(np.zeros((2, 2, 1)))
    x_hat = ImageTensor(np.array([[[1 / 255], [0.0]], [[0.0], [0.0]]]))
    assert mse(x, x_hat) == pytest.approx(0.25)


def test_proxmse_is_mse_against_proxy():
    x_hat = _rand(72, 6, 6)
    proxy = _rand(73, 6, 6)
    assert proxmse(x_hat, proxy) == pytest.approx(mse(x_hat, proxy))
    assert proxmse(proxy, proxy) == 0.0


def test_proxmse_scales_quadratically():
    x_hat = _rand(74, 5, 5)
    proxy = _rand(75, 5, 5)
    base = proxmse(x_hat, proxy)
    scaled = proxmse(
        ImageTensor(0.5 * x_hat.data), ImageTensor(0.5 * proxy.data)
    )
    assert scaled == pytest.approx(0.25 * base, rel=1e-12)


def test_proxmse_batch_averages_items():
    a, b = _rand(76, 4, 4), _rand(77, 4, 4)
    c, d = _rand(78, 4, 4), _rand(79, 4, 4)
    avg = proxmse_batch([(a, b), (c, d)])
    assert avg == pytest.approx(0.5 * (proxmse(a, b) + proxmse(c, d)), rel=1e-12)


# ---------------------------------------------------------------------------
# latent form


def test_latent_form_zero_at_match():
    e = default_embedder()
    x = synthetic_portrait(SeededRng(80), 16, 3)
    z = embed(x, e)
    assert lpips_form(z, z) == 0.0


def test_layer_sum_equals_flattened_form():
    # The weighted per-layer sum and the flattened squared distance are the
    # same number; agreement must be at machine precision.
    e = default_embedder()
    x = synthetic_portrait(SeededRng(81), 12, 3)
    x2 = synthetic_portrait(SeededRng(82), 12, 3)
    z, z2 = embed(x, e), embed(x2, e)
    direct = float(np.sum((z - z2) ** 2))
    assert lpips_form(z, z2) == pytest.approx(direct, rel=1e-12)


def test_single_scalar_latent_reduces_to_squared_error():
    assert lpips_form(np.array([0.3]), np.array([0.7])) == pytest.approx(0.16, rel=1e-12)


def test_proxlpips_zero_when_embedding_matches():
    e = default_embedder()
    x = synthetic_portrait(SeededRng(83), 12, 3)
    assert proxlpips(x, embed(x, e), e) == 0.0


def test_latent_shape_mismatch_rejected():
    with pytest.raises(ValueError):
        lpips_form(np.zeros(4), np.zeros(5))


def test_embedding_deterministic():
    e = default_embedder()
    x = synthetic_portrait(SeededRng(84), 12, 3)
    np.testing.assert_array_equal(embed(x, e), embed(x, e))


# ---------------------------------------------------------------------------
# perturbation bound helper


def test_bound_zero_residuals():
    assert proxmse_error_bound([ImageTensor(np.zeros((3, 3, 1)))]) == 0.0


def test_bound_single_entry_arithmetic():
    r = np.zeros((1, 2, 1))
    r[0, 0, 0] = 0.5
    assert proxmse_error_bound([ImageTensor(r)]) == pytest.approx(2.25)


def test_bound_empty_rejected():
    with pytest.raises(ValueError):
        proxmse_error_bound([])


# ---------------------------------------------------------------------------
# report container


def test_report_aggregate_matches_mean():
    rows = (
        ("a", "mse", 1.0),
        ("b", "mse", 3.0),
        ("a", "psnr", 30.0),
    )
    rep = MetricReport(rows=rows)
    agg = rep.aggregate()
    assert agg["mse"][0] == pytest.approx(2.0, abs=1e-12)
    csv_text = rep.to_csv()
    assert csv_text.splitlines()[0] == "item,metric,value"
    assert len(csv_text.splitlines()) == 4
    assert "mse" in rep.to_json_summary()
