"""Image container, RNG streams, and file format round trips."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blindkit.tensor_io import (
    FormatError,
    ImageTensor,
    SeededRng,
    gaussian_samples,
    read_image,
    write_image,
)


def test_p5_bytes_map_to_unit_interval(tmp_path):
    path = tmp_path / "tiny.pgm"
    path.write_bytes(b"P5\n2 2\n255\n" + bytes([0, 255, 128, 64]))
    img = read_image(path)
    assert img.shape == (2, 2, 1)
    np.testing.assert_allclose(img.data.ravel(), [0.0, 1.0, 128 / 255, 64 / 255])


def test_p6_single_pixel(tmp_path):
    path = tmp_path / "dot.ppm"
    path.write_bytes(b"P6\n1 1\n255\n" + bytes([255, 0, 0]))
    img = read_image(path)
    assert img.shape == (1, 1, 3)
    np.testing.assert_allclose(img.data.ravel(), [1.0, 0.0, 0.0])


def test_raw_float_values_verbatim(tmp_path):
    vals = np.array([0.25, -1.5, 2.0, 0.125], dtype="<f4")
    path = tmp_path / "t.irtf"
    path.write_bytes(b"IRTF1\n2 2 1\n" + vals.tobytes())
    img = read_image(path)
    np.testing.assert_array_equal(img.data.ravel(), vals.astype(np.float64))


def test_pgm8_rounds_half_away_from_zero(tmp_path):
    # 0.5 * 255 = 127.5 must become byte 128, not banker's 127.
    img = ImageTensor(np.full((1, 1, 1), 0.5))
    path = tmp_path / "half.pgm"
    write_image(img, path)
    assert path.read_bytes()[-1] == 128


def test_pgm8_clamps_out_of_range(tmp_path):
    img = ImageTensor(np.array([[[1.2], [-0.4]]]))
    path = tmp_path / "clamped.pgm"
    write_image(img, path)
    assert list(path.read_bytes()[-2:]) == [255, 0]


@settings(max_examples=25, deadline=None)
@given(
    h=st.integers(1, 6),
    w=st.integers(1, 6),
    c=st.sampled_from([1, 3]),
    seed=st.integers(0, 2**32 - 1),
)
def test_raw_f32_round_trip_is_identity(tmp_path_factory, h, w, c, seed):
    g = np.random.default_rng(seed)
    data = g.uniform(-4.0, 4.0, (h, w, c)).astype(np.float32).astype(np.float64)
    img = ImageTensor(data)
    path = tmp_path_factory.mktemp("rt") / "x.irtf"
    write_image(img, path)
    back = read_image(path)
    np.testing.assert_array_equal(back.data, img.data)


def test_8bit_round_trip_identity_on_quantized_payload(tmp_path):
    g = np.random.default_rng(7)
    payload = g.integers(0, 256, 48, dtype=np.uint8)
    src = tmp_path / "a.ppm"
    src.write_bytes(b"P6\n4 4\n255\n" + payload.tobytes())
    img = read_image(src)
    dst = tmp_path / "b.ppm"
    write_image(img, dst)
    assert dst.read_bytes() == src.read_bytes()


def test_format_inferred_from_suffix(tmp_path):
    gray = ImageTensor(np.full((2, 2, 1), 0.5))
    color = ImageTensor(np.full((2, 2, 3), 0.5))
    write_image(gray, tmp_path / "g.pgm")
    write_image(color, tmp_path / "c.ppm")
    write_image(color, tmp_path / "r.irtf")
    assert (tmp_path / "g.pgm").read_bytes().startswith(b"P5")
    assert (tmp_path / "c.ppm").read_bytes().startswith(b"P6")
    assert (tmp_path / "r.irtf").read_bytes().startswith(b"IRTF1\n")


def test_channel_count_must_match_format(tmp_path):
    gray = ImageTensor(np.full((2, 2, 1), 0.5))
    with pytest.raises(ValueError):
        write_image(gray, tmp_path / "x.ppm")


def test_malformed_header_reports_offset(tmp_path):
    path = tmp_path / "bad.pgm"
    path.write_bytes(b"P5\n2 zz\n255\n\x00\x00\x00\x00")
    with pytest.raises(FormatError) as exc:
        read_image(path)
    assert exc.value.offset is not None


def test_truncated_payload_rejected(tmp_path):
    path = tmp_path / "short.pgm"
    path.write_bytes(b"P5\n2 2\n255\n" + bytes([1, 2]))
    with pytest.raises(FormatError, match="truncated"):
        read_image(path)


def test_16bit_maxval_rejected(tmp_path):
    path = tmp_path / "deep.pgm"
    path.write_bytes(b"P5\n1 1\n65535\n\x00\x00")
    with pytest.raises(FormatError, match="max value"):
        read_image(path)


def test_unknown_magic_rejected(tmp_path):
    path = tmp_path / "junk.bin"
    path.write_bytes(b"GARBAGE DATA")
    with pytest.raises(FormatError) as exc:
        read_image(path)
    assert exc.value.offset == 0


def test_tensor_rejects_non_finite():
    with pytest.raises(ValueError, match="non-finite"):
        ImageTensor(np.array([[[np.nan]]]))
    with pytest.raises(ValueError, match="non-finite"):
        ImageTensor(np.array([[[np.inf]]]))


def test_tensor_rejects_bad_channel_count():
    with pytest.raises(ValueError, match="channel count"):
        ImageTensor(np.zeros((2, 2, 2)))


def test_tensor_keeps_out_of_range_values_until_clamped():
    img = ImageTensor(np.array([[[1.7], [-0.3]]]))
    assert img.data.max() == 1.7
    clamped = img.clamped()
    assert clamped.data.min() == 0.0 and clamped.data.max() == 1.0


def test_same_seed_and_stream_reproduces_sequence():
    a = gaussian_samples(SeededRng(11, (3,)), 64)
    b = gaussian_samples(SeededRng(11, (3,)), 64)
    np.testing.assert_array_equal(a, b)


def test_distinct_streams_differ():
    a = gaussian_samples(SeededRng(11, (0,)), 64)
    b = gaussian_samples(SeededRng(11, (1,)), 64)
    assert not np.array_equal(a, b)


def test_value_semantics_fresh_generator_per_call():
    rng = SeededRng(5)
    first = gaussian_samples(rng, 16)
    second = gaussian_samples(rng, 16)
    np.testing.assert_array_equal(first, second)


def test_child_streams_deterministic_and_distinct():
    rng = SeededRng(9, (4,))
    a0 = gaussian_samples(rng.child(0), 32)
    a0_again = gaussian_samples(rng.child(0), 32)
    a1 = gaussian_samples(rng.child(1), 32)
    np.testing.assert_array_equal(a0, a0_again)
    assert not np.array_equal(a0, a1)


def test_string_stream_ids_rejected():
    with pytest.raises((TypeError, ValueError)):
        SeededRng(3, ("label",))


def test_empty_draw_and_moments():
    assert gaussian_samples(SeededRng(0), 0).size == 0
    draws = gaussian_samples(SeededRng(123), 1_000_000)
    assert abs(float(draws.mean())) < 0.004
    assert abs(float(draws.var()) - 1.0) < 0.01


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**63 - 1), n=st.integers(1, 128))
def test_reproducibility_holds_for_any_seed(seed, n):
    np.testing.assert_array_equal(
        gaussian_samples(SeededRng(seed), n), gaussian_samples(SeededRng(seed), n)
    )
