"""Forward degradation chain: kernels, resampling, codec, noise, adjoints."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blindkit.degrade import (
    ChainFlags,
    DegradationParams,
    ParamBounds,
    add_noise,
    blur,
    blur_adjoint,
    degrade,
    downsample_adjoint,
    downsample_bilinear,
    downsample_dims,
    gaussian_kernel,
    jpeg_roundtrip,
    mean_measurement,
    read_sidecar,
    resize_bilinear,
    sample_params,
    write_sidecar,
)
from blindkit.metrics import psnr
from blindkit.suites import synthetic_portrait
from blindkit.tensor_io import ImageTensor, SeededRng, read_image

DATA = __file__.rsplit("/", 1)[0] + "/data"


def _rand_image(seed, h, w, c=1):
    g = np.random.default_rng(seed)
    return ImageTensor(g.uniform(0.0, 1.0, (h, w, c)))


# ---------------------------------------------------------------------------
# gaussian_kernel


def test_kernel_radius_rule():
    assert gaussian_kernel(0.1).radius == 1
    assert gaussian_kernel(15.0).radius == 45
    assert gaussian_kernel(1.2).radius == 4


def test_narrow_kernel_concentrates_at_center():
    k = gaussian_kernel(0.1)
    w = np.asarray(k.weights).reshape(3, 3)
    assert w[1, 1] > 0.999


def test_kernel_center_weight_matches_direct_evaluation():
    # Independent evaluation of exp(-(i^2+j^2)/(2 sigma^2)) normalized.
    k = gaussian_kernel(1.2)
    r = k.radius
    ii, jj = np.meshgrid(np.arange(-r, r + 1), np.arange(-r, r + 1), indexing="ij")
    ref = np.exp(-(ii**2 + jj**2) / (2 * 1.2**2))
    ref /= ref.sum()
    got = np.asarray(k.weights).reshape(2 * r + 1, 2 * r + 1)
    np.testing.assert_allclose(got, ref, rtol=1e-12)
    assert got[r, r] == pytest.approx(0.11054978907421718, abs=1e-15)


@settings(max_examples=30, deadline=None)
@given(sigma=st.floats(0.1, 15.0, allow_nan=False))
def test_kernel_normalized_and_symmetric(sigma):
    k = gaussian_kernel(sigma)
    n = 2 * k.radius + 1
    w = np.asarray(k.weights).reshape(n, n)
    assert abs(w.sum() - 1.0) <= 1e-12
    np.testing.assert_array_equal(w, w.T)
    np.testing.assert_array_equal(w, w[::-1, :])
    np.testing.assert_array_equal(w, w[:, ::-1])


def test_nonpositive_sigma_rejected():
    with pytest.raises(ValueError):
        gaussian_kernel(0.0)
    with pytest.raises(ValueError):
        gaussian_kernel(-1.0)


# ---------------------------------------------------------------------------
# blur


def test_blur_preserves_constants():
    img = ImageTensor(np.full((9, 7, 3), 0.42))
    out = blur(img, gaussian_kernel(2.0))
    np.testing.assert_allclose(out.data, 0.42, atol=1e-12)


def test_blur_of_centered_delta_reproduces_kernel():
    k = gaussian_kernel(0.8)
    n = 2 * k.radius + 1
    size = 4 * n
    data = np.zeros((size, size, 1))
    data[size // 2, size // 2, 0] = 1.0
    out = blur(ImageTensor(data), k)
    lo = size // 2 - k.radius
    patch = out.data[lo : lo + n, lo : lo + n, 0]
    np.testing.assert_allclose(patch, np.asarray(k.weights).reshape(n, n), atol=1e-12)


def test_blur_adjoint_inner_product_identity():
    k = gaussian_kernel(1.7)
    u = _rand_image(1, 12, 10)
    v = _rand_image(2, 12, 10)
    lhs = float(np.sum(blur(u, k).data * v.data))
    rhs = float(np.sum(u.data * blur_adjoint(v, k).data))
    assert abs(lhs - rhs) <= 1e-6 * max(abs(lhs), 1.0)


# ---------------------------------------------------------------------------
# downsample


def test_downsample_scale_one_is_identity():
    img = _rand_image(3, 7, 5, 3)
    np.testing.assert_array_equal(downsample_bilinear(img, 1.0).data, img.data)


def test_checkerboard_halves_to_mean():
    img = ImageTensor(np.array([[0.0, 1.0], [1.0, 0.0]]).reshape(2, 2, 1))
    out = downsample_bilinear(img, 2.0)
    assert out.shape == (1, 1, 1)
    assert out.data[0, 0, 0] == pytest.approx(0.5, abs=1e-12)


def test_downsample_preserves_constants():
    img = ImageTensor(np.full((12, 9, 1), 0.77))
    out = downsample_bilinear(img, 2.5)
    np.testing.assert_allclose(out.data, 0.77, atol=1e-12)


def test_degenerate_output_size_rejected():
    img = _rand_image(4, 3, 3)
    with pytest.raises(ValueError):
        downsample_bilinear(img, 50.0)


def test_downsample_adjoint_inner_product_identity():
    src = _rand_image(5, 11, 9)
    h2, w2 = downsample_dims(11, 9, 2.3)
    v = _rand_image(6, h2, w2)
    lhs = float(np.sum(downsample_bilinear(src, 2.3).data * v.data))
    rhs = float(np.sum(src.data * downsample_adjoint(v, 2.3, (11, 9)).data))
    assert abs(lhs - rhs) <= 1e-6 * max(abs(lhs), 1.0)


def test_adjoint_of_one_hot_is_weight_footprint():
    # The transpose scatters each low-res pixel's bilinear weights; total
    # mass equals the forward row sum, which is 1 per output pixel.
    one_hot = np.zeros((2, 2, 1))
    one_hot[0, 0, 0] = 1.0
    up = downsample_adjoint(ImageTensor(one_hot), 2.0, (4, 4))
    assert up.data.sum() == pytest.approx(1.0, abs=1e-12)
    assert (up.data >= 0).all()


# ---------------------------------------------------------------------------
# noise


def test_zero_noise_is_identity():
    img = _rand_image(8, 6, 6)
    np.testing.assert_array_equal(add_noise(img, 0.0, SeededRng(1)).data, img.data)


def test_noise_deterministic_per_seed():
    img = _rand_image(9, 6, 6)
    a = add_noise(img, 0.05, SeededRng(4))
    b = add_noise(img, 0.05, SeededRng(4))
    np.testing.assert_array_equal(a.data, b.data)


def test_noise_empirical_std():
    img = ImageTensor(np.full((256, 256, 1), 0.5))
    out = add_noise(img, 10 / 255, SeededRng(12))
    emp = float((out.data - img.data).std())
    assert abs(emp - 10 / 255) <= 0.02 * (10 / 255)


# ---------------------------------------------------------------------------
# jpeg


def test_midgray_constant_is_codec_fixed_point():
    img = ImageTensor(np.full((24, 24, 3), 128 / 255))
    for q in (1.0, 35.0, 50.0, 77.0, 100.0):
        np.testing.assert_array_equal(jpeg_roundtrip(img, q).data, img.data)


def test_codec_quality_ordering_on_natural_image():
    x = synthetic_portrait(SeededRng(16000), 64, 3)
    assert psnr(x, jpeg_roundtrip(x, 90.0)) >= psnr(x, jpeg_roundtrip(x, 30.0))


def test_codec_deterministic():
    x = synthetic_portrait(SeededRng(21), 32, 3)
    np.testing.assert_array_equal(jpeg_roundtrip(x, 42.0).data, jpeg_roundtrip(x, 42.0).data)


def test_codec_near_idempotent():
    x = synthetic_portrait(SeededRng(22), 48, 3)
    once = jpeg_roundtrip(x, 60.0)
    twice = jpeg_roundtrip(once, 60.0)
    frac = float(np.mean(np.abs(twice.data - once.data) <= 2 / 255))
    assert frac >= 0.95


def test_quality_out_of_range_rejected():
    x = synthetic_portrait(SeededRng(23), 16, 1)
    with pytest.raises(ValueError):
        jpeg_roundtrip(x, 0.0)
    with pytest.raises(ValueError):
        jpeg_roundtrip(x, 101.0)


# ---------------------------------------------------------------------------
# full chain


def test_noise_only_with_zero_sigma_is_identity():
    x = _rand_image(30, 8, 8, 3)
    flags = ChainFlags(enable_blur=False, enable_downsample=False, enable_noise=True, enable_jpeg=False)
    a = DegradationParams(1.0, 1.0, 0.0, 50.0)
    np.testing.assert_array_equal(degrade(x, a, flags, SeededRng(0)).data, x.data)


def test_narrow_kernel_chain_close_to_identity():
    x = _rand_image(31, 10, 10, 1)
    flags = ChainFlags(enable_jpeg=False)
    a = DegradationParams(0.1, 1.0, 0.0, 50.0)
    y = degrade(x, a, flags, SeededRng(0))
    assert float(np.abs(y.data - x.data).max()) <= 1e-3


def test_full_chain_matches_golden_file(tmp_path):
    x = synthetic_portrait(SeededRng(31), 24, 3)
    a = DegradationParams(1.3, 2.0, 0.03, 65.0)
    y = degrade(x, a, ChainFlags(), SeededRng(77))
    from blindkit.tensor_io import write_image

    out = tmp_path / "fresh.irtf"
    write_image(y, out, fmt="raw_f32")
    assert out.read_bytes() == open(f"{DATA}/golden_degrade.irtf", "rb").read()


def test_stage_order_is_blur_downsample_noise_jpeg():
    x = synthetic_portrait(SeededRng(32), 20, 3)
    a = DegradationParams(1.4, 2.0, 0.02, 70.0)
    y = degrade(x, a, ChainFlags(), SeededRng(55))
    manual = blur(x, gaussian_kernel(a.sigma_k))
    manual = downsample_bilinear(manual, a.scale)
    manual = add_noise(manual, a.sigma_n, SeededRng(55))
    manual = jpeg_roundtrip(manual, a.quality)
    np.testing.assert_array_equal(y.data, manual.data)


def test_resize_back_restores_source_dims():
    x = synthetic_portrait(SeededRng(33), 20, 3)
    a = DegradationParams(1.0, 2.0, 0.01, 80.0)
    y = degrade(x, a, ChainFlags(resize_back=True), SeededRng(3))
    assert (y.height, y.width) == (20, 20)


def test_all_stages_disabled_rejected():
    with pytest.raises(ValueError):
        ChainFlags(enable_blur=False, enable_downsample=False, enable_noise=False, enable_jpeg=False)


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_chain_deterministic_per_seed(seed):
    x = _rand_image(34, 12, 12, 3)
    a = DegradationParams(1.1, 1.5, 0.02, 60.0)
    y1 = degrade(x, a, ChainFlags(), SeededRng(seed))
    y2 = degrade(x, a, ChainFlags(), SeededRng(seed))
    np.testing.assert_array_equal(y1.data, y2.data)


# ---------------------------------------------------------------------------
# mean_measurement


def test_mean_zero_noise_collapses_to_single_degrade():
    x = synthetic_portrait(SeededRng(35), 16, 3)
    a = DegradationParams(1.0, 2.0, 0.0, 70.0)
    mu, sd = mean_measurement(x, a, ChainFlags(), 8, SeededRng(5))
    np.testing.assert_array_equal(mu.data, degrade(x, a, ChainFlags(), SeededRng(5)).data)
    assert float(np.abs(sd.data).max()) == 0.0


def test_mean_single_sample_has_zero_std():
    x = synthetic_portrait(SeededRng(36), 16, 1)
    a = DegradationParams(1.0, 2.0, 0.04, 70.0)
    _, sd = mean_measurement(x, a, ChainFlags(), 1, SeededRng(6))
    assert float(np.abs(sd.data).max()) == 0.0


def test_mean_error_shrinks_with_samples():
    # Root-mean-square MC error decreases with m; exact slope is checked in
    # the acceptance suite, here we just require monotone improvement.
    x = synthetic_portrait(SeededRng(37), 16, 1)
    a = DegradationParams(1.0, 2.0, 8 / 255, 70.0)
    flags = ChainFlags(enable_jpeg=False)
    ref, _ = mean_measurement(x, a, flags, 4096, SeededRng(70))
    errs = []
    for m in (4, 64):
        mu, _ = mean_measurement(x, a, flags, m, SeededRng(71))
        errs.append(float(np.sqrt(np.mean((mu.data - ref.data) ** 2))))
    assert errs[1] < errs[0]


# ---------------------------------------------------------------------------
# params, bounds, sidecars


def test_param_validation():
    with pytest.raises(ValueError):
        DegradationParams(0.0, 1.0, 0.0, 50.0)
    with pytest.raises(ValueError):
        DegradationParams(1.0, 0.5, 0.0, 50.0)
    with pytest.raises(ValueError):
        DegradationParams(1.0, 1.0, -0.1, 50.0)
    with pytest.raises(ValueError):
        DegradationParams(1.0, 1.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        DegradationParams(1.0, 1.0, float("nan"), 50.0)


def test_params_coerce_numpy_scalars():
    a = DegradationParams(np.float64(1.5), np.float64(2.0), np.float64(0.01), np.float64(60.0))
    assert all(type(v) is float for v in a.as_tuple())


def test_sample_params_within_default_bounds():
    for i in range(50):
        a = sample_params(SeededRng(40, (i,)))
        assert 0.1 <= a.sigma_k <= 15.0
        assert 1.0 <= a.scale <= 32.0
        assert 0.0 <= a.sigma_n <= 20 / 255
        assert 30.0 <= a.quality <= 100.0


def test_sidecar_round_trip(tmp_path):
    entries = [
        ("img0.ppm", DegradationParams(1.25, 2.0, 0.0123456789, 67.5)),
        ("img1.ppm", DegradationParams(np.float64(3.5), 1.0, 0.0, 100.0)),
    ]
    path = tmp_path / "params.txt"
    write_sidecar(entries, path)
    back = read_sidecar(path)
    for name, a in entries:
        assert back[name].as_tuple() == a.as_tuple()


def test_sidecar_rejects_whitespace_names(tmp_path):
    with pytest.raises(ValueError, match="whitespace"):
        write_sidecar([("bad name", DegradationParams(1, 1, 0, 50))], tmp_path / "p.txt")


def test_sidecar_parse_errors_name_line(tmp_path):
    path = tmp_path / "p.txt"
    path.write_text("ok 1.0 1.0 0.0 50.0\nbroken 1.0 x 0.0 50.0\n")
    with pytest.raises(ValueError, match=":2"):
        read_sidecar(path)


def test_bounds_validation():
    with pytest.raises(ValueError):
        ParamBounds(sigma_k=(2.0, 1.0), scale=(1, 2), sigma_n=(0, 0.1), quality=(30, 100))


# ---------------------------------------------------------------------------
# resize


def test_resize_round_trip_dims():
    x = _rand_image(41, 9, 13, 3)
    up = resize_bilinear(x, (18, 26))
    assert (up.height, up.width) == (18, 26)
    back = resize_bilinear(up, (9, 13))
    assert (back.height, back.width) == (9, 13)


def test_resize_preserves_constants():
    x = ImageTensor(np.full((5, 4, 1), 0.3))
    out = resize_bilinear(x, (11, 7))
    np.testing.assert_allclose(out.data, 0.3, atol=1e-12)
