"""Forward degradation model: blur, downsample, noise, JPEG.

A measurement is produced from a source image x by the four-stage chain

    y = JPEG_Q( (K_{sigma_k} * x) down_S + N_{sigma_n} ),

applied in the fixed order blur -> downsample -> noise -> JPEG, with an
optional bilinear resize back to the source resolution after JPEG. Each
stage can be switched off; disabled stages are skipped entirely. The JPEG
stage simulates compression in the quantization domain (blocked DCT,
Annex-K tables scaled by the quality factor, coefficient rounding) without
producing a bitstream, which keeps it differentiable-by-convention
(straight-through) and exactly reproducible.

Blur and downsampling are exact linear operators with exact adjoints
(`blur_adjoint`, `downsample_adjoint`): the adjoint code is the transpose
of the same padding/interpolation weights, not a separate approximation,
so the dot-product identity <Au, v> = <u, A^T v> holds to float precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
from scipy.fft import dctn, idctn
from scipy.signal import fftconvolve

from .tensor_io import ImageTensor, SeededRng

__all__ = [
    "DEFAULT_BOUNDS",
    "ChainFlags",
    "DegradationParams",
    "Kernel2D",
    "ParamBounds",
    "add_noise",
    "blur",
    "blur_adjoint",
    "degrade",
    "downsample_bilinear",
    "downsample_adjoint",
    "downsample_dims",
    "gaussian_kernel",
    "jpeg_roundtrip",
    "mean_measurement",
    "read_sidecar",
    "resize_bilinear",
    "resize_adjoint",
    "sample_params",
    "write_sidecar",
]


@dataclass(frozen=True)
class ParamBounds:
    """Per-axis (lo, hi) sampling bounds for the degradation parameters."""

    sigma_k: tuple[float, float] = (0.1, 15.0)
    scale: tuple[float, float] = (1.0, 32.0)
    sigma_n: tuple[float, float] = (0.0, 20.0 / 255.0)
    quality: tuple[float, float] = (30.0, 100.0)

    def __post_init__(self):
        for name, (lo, hi) in self.as_dict().items():
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                raise ValueError(f"{name} bounds need lo < hi, got ({lo}, {hi})")

    def as_dict(self) -> dict[str, tuple[float, float]]:
        return {
            "sigma_k": self.sigma_k,
            "scale": self.scale,
            "sigma_n": self.sigma_n,
            "quality": self.quality,
        }


DEFAULT_BOUNDS = ParamBounds()


@dataclass(frozen=True)
class DegradationParams:
    """One point a = (sigma_k, scale, sigma_n, quality) of the forward model."""

    sigma_k: float
    scale: float
    sigma_n: float
    quality: float

    def __post_init__(self):
        # Coerce numpy scalars so repr round-trips through sidecar files.
        for f in ("sigma_k", "scale", "sigma_n", "quality"):
            object.__setattr__(self, f, float(getattr(self, f)))
        vals = (self.sigma_k, self.scale, self.sigma_n, self.quality)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"non-finite degradation params {vals}")
        if self.sigma_k <= 0:
            raise ValueError(f"sigma_k must be positive, got {self.sigma_k}")
        if self.scale < 1:
            raise ValueError(f"scale must be >= 1, got {self.scale}")
        if self.sigma_n < 0:
            raise ValueError(f"sigma_n must be nonnegative, got {self.sigma_n}")
        if not (1.0 <= self.quality <= 100.0):
            raise ValueError(f"quality must lie in [1, 100], got {self.quality}")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.sigma_k, self.scale, self.sigma_n, self.quality)

    def replace(self, **kw) -> "DegradationParams":
        return replace(self, **kw)


def sample_params(rng: SeededRng, bounds: ParamBounds = DEFAULT_BOUNDS) -> DegradationParams:
    """Draw a ~ U(bounds), each axis independent uniform."""
    u = rng.generator().uniform(0.0, 1.0, size=4)
    lo = np.array([bounds.sigma_k[0], bounds.scale[0], bounds.sigma_n[0], bounds.quality[0]])
    hi = np.array([bounds.sigma_k[1], bounds.scale[1], bounds.sigma_n[1], bounds.quality[1]])
    v = lo + u * (hi - lo)
    return DegradationParams(*v)


@dataclass(frozen=True)
class ChainFlags:
    """Which stages of the chain run. At least one must be enabled."""

    enable_blur: bool = True
    enable_downsample: bool = True
    enable_noise: bool = True
    enable_jpeg: bool = True
    resize_back: bool = False

    def __post_init__(self):
        if not (self.enable_blur or self.enable_downsample or self.enable_noise or self.enable_jpeg):
            raise ValueError("at least one chain stage must be enabled")
        if self.resize_back and not self.enable_downsample:
            raise ValueError("resize_back requires enable_downsample")


# ---------------------------------------------------------------------------
# Gaussian blur with reflect padding


@dataclass(frozen=True)
class Kernel2D:
    radius: int
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        k = 2 * self.radius + 1
        if w.shape != (k, k):
            raise ValueError(f"kernel weights must be ({k}, {k}) for radius {self.radius}")
        if not np.all(np.isfinite(w)):
            raise ValueError("kernel weights must be finite")
        if abs(float(w.sum()) - 1.0) > 1e-12:
            raise ValueError(f"kernel weights must sum to 1, got {w.sum()!r}")
        w = np.ascontiguousarray(w)
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)


@lru_cache(maxsize=512)
def gaussian_kernel(sigma_k: float) -> Kernel2D:
    """Isotropic Gaussian kernel, radius ceil(3 sigma), normalized to sum 1."""
    if not (sigma_k > 0 and math.isfinite(sigma_k)):
        raise ValueError(f"sigma_k must be positive and finite, got {sigma_k}")
    r = int(math.ceil(3.0 * sigma_k))
    ax = np.arange(-r, r + 1, dtype=np.float64)
    g1 = np.exp(-(ax**2) / (2.0 * sigma_k**2))
    w = np.outer(g1, g1)
    w /= w.sum()
    return Kernel2D(radius=r, weights=w)


@lru_cache(maxsize=1024)
def _reflect_indices(n: int, r: int) -> np.ndarray:
    # reflect padding that does not repeat the border pixel: ... c b | a b c ...
    idx = np.pad(np.arange(n), r, mode="reflect")
    idx.setflags(write=False)
    return idx


def _blur_array(arr: np.ndarray, k: Kernel2D) -> np.ndarray:
    r = k.radius
    if r == 0:
        return arr * k.weights[0, 0]
    ri = _reflect_indices(arr.shape[0], r)
    ci = _reflect_indices(arr.shape[1], r)
    padded = arr[ri][:, ci]
    # correlation == convolution with the flipped kernel
    kern = k.weights[::-1, ::-1][:, :, None]
    return fftconvolve(padded, kern, mode="valid", axes=(0, 1))


def _blur_adjoint_array(arr: np.ndarray, k: Kernel2D, out_hw: tuple[int, int]) -> np.ndarray:
    r = k.radius
    if r == 0:
        return arr * k.weights[0, 0]
    h, w = out_hw
    full = fftconvolve(arr, k.weights[:, :, None], mode="full", axes=(0, 1))
    ri = _reflect_indices(h, r)
    ci = _reflect_indices(w, r)
    out = np.zeros((h, w, arr.shape[2]), dtype=np.float64)
    # transpose of the reflect-pad gather is a scatter-add onto source pixels
    np.add.at(out, (ri[:, None], ci[None, :]), full)
    return out


def blur(img: ImageTensor, k: Kernel2D) -> ImageTensor:
    """Correlate with k under reflect padding (border pixel not repeated)."""
    return ImageTensor(_blur_array(img.data, k))


def blur_adjoint(img: ImageTensor, k: Kernel2D) -> ImageTensor:
    """Exact transpose of `blur` on same-shaped images."""
    return ImageTensor(_blur_adjoint_array(img.data, k, (img.height, img.width)))


# ---------------------------------------------------------------------------
# Bilinear resampling as explicit interpolation matrices


def downsample_dims(height: int, width: int, scale: float) -> tuple[int, int]:
    if not (scale >= 1 and math.isfinite(scale)):
        raise ValueError(f"scale must lie in [1, inf), got {scale}")
    oh = int(math.floor(height / scale + 0.5))
    ow = int(math.floor(width / scale + 0.5))
    if oh < 1 or ow < 1:
        raise ValueError(f"scale {scale} collapses {height}x{width} below one pixel")
    return oh, ow


@lru_cache(maxsize=4096)
def _resize_matrix(src: int, dst: int) -> np.ndarray:
    """(dst, src) bilinear weights; row d samples source coord (d+.5)*src/dst-.5."""
    w = np.zeros((dst, src), dtype=np.float64)
    ratio = src / dst
    for d in range(dst):
        c = (d + 0.5) * ratio - 0.5
        c = min(max(c, 0.0), src - 1.0)
        i0 = int(math.floor(c))
        f = c - i0
        i1 = min(i0 + 1, src - 1)
        w[d, i0] += 1.0 - f
        w[d, i1] += f
    w.setflags(write=False)
    return w


def _resize_array(arr: np.ndarray, out_hw: tuple[int, int]) -> np.ndarray:
    wh = _resize_matrix(arr.shape[0], out_hw[0])
    ww = _resize_matrix(arr.shape[1], out_hw[1])
    return np.einsum("ij,jkc,lk->ilc", wh, arr, ww, optimize=True)


def _resize_adjoint_array(arr: np.ndarray, src_hw: tuple[int, int]) -> np.ndarray:
    wh = _resize_matrix(src_hw[0], arr.shape[0])
    ww = _resize_matrix(src_hw[1], arr.shape[1])
    return np.einsum("ji,jkc,kl->ilc", wh, arr, ww, optimize=True)


def resize_bilinear(img: ImageTensor, out_hw: tuple[int, int]) -> ImageTensor:
    """Separable bilinear resize to any target shape (up or down)."""
    if out_hw[0] < 1 or out_hw[1] < 1:
        raise ValueError(f"bad target shape {out_hw}")
    return ImageTensor(_resize_array(img.data, out_hw))


def resize_adjoint(img: ImageTensor, src_hw: tuple[int, int]) -> ImageTensor:
    """Exact transpose of `resize_bilinear` from src_hw to img's shape."""
    return ImageTensor(_resize_adjoint_array(img.data, src_hw))


def downsample_bilinear(img: ImageTensor, scale: float) -> ImageTensor:
    """Bilinear downsample by S >= 1; output dims are round(dim / S)."""
    return resize_bilinear(img, downsample_dims(img.height, img.width, scale))


def downsample_adjoint(img: ImageTensor, scale: float, src_hw: tuple[int, int]) -> ImageTensor:
    expect = downsample_dims(src_hw[0], src_hw[1], scale)
    if (img.height, img.width) != expect:
        raise ValueError(f"adjoint input has shape {(img.height, img.width)}, expected {expect} for scale {scale} from {src_hw}")
    return resize_adjoint(img, src_hw)


# ---------------------------------------------------------------------------
# Additive Gaussian noise


def add_noise(img: ImageTensor, sigma_n: float, rng: SeededRng) -> ImageTensor:
    """img + sigma_n * g, g iid standard normal. No clamping."""
    if sigma_n < 0:
        raise ValueError(f"sigma_n must be nonnegative, got {sigma_n}")
    if sigma_n == 0:
        return img
    g = rng.generator().standard_normal(img.shape)
    return ImageTensor(img.data + sigma_n * g)


# ---------------------------------------------------------------------------
# JPEG round-trip in the quantization domain

# ITU-T T.81 Annex K reference quantization tables
_LUMA_TABLE = np.array(
    [
        [16, 11, 10, 16, 24, 40, 51, 61],
        [12, 12, 14, 19, 26, 58, 60, 55],
        [14, 13, 16, 24, 40, 57, 69, 56],
        [14, 17, 22, 29, 51, 87, 80, 62],
        [18, 22, 37, 56, 68, 109, 103, 77],
        [24, 35, 55, 64, 81, 104, 113, 92],
        [49, 64, 78, 87, 103, 121, 120, 101],
        [72, 92, 95, 98, 112, 100, 103, 99],
    ],
    dtype=np.float64,
)

_CHROMA_TABLE = np.array(
    [
        [17, 18, 24, 47, 99, 99, 99, 99],
        [18, 21, 26, 66, 99, 99, 99, 99],
        [24, 26, 56, 99, 99, 99, 99, 99],
        [47, 66, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
    ],
    dtype=np.float64,
)

# BT.601 full-range RGB <-> YCbCr
_RGB_TO_YCBCR = np.array(
    [
        [0.299, 0.587, 0.114],
        [-0.168735892, -0.331264108, 0.5],
        [0.5, -0.418687589, -0.081312411],
    ]
)
_YCBCR_TO_RGB = np.array(
    [
        [1.0, 0.0, 1.402],
        [1.0, -0.344136286, -0.714136286],
        [1.0, 1.772, 0.0],
    ]
)
_CHROMA_OFFSET = np.array([0.0, 128.0, 128.0])


@lru_cache(maxsize=512)
def _scaled_tables(quality: float) -> tuple[np.ndarray, np.ndarray]:
    q = float(quality)
    s = 5000.0 / q if q < 50.0 else 200.0 - 2.0 * q
    out = []
    for table in (_LUMA_TABLE, _CHROMA_TABLE):
        t = np.floor((table * s + 50.0) / 100.0)
        t = np.clip(t, 1.0, 255.0)
        t.setflags(write=False)
        out.append(t)
    return out[0], out[1]


def _jpeg_plane(plane255: np.ndarray, table: np.ndarray) -> np.ndarray:
    h, w = plane255.shape
    ph, pw = (-h) % 8, (-w) % 8
    padded = np.pad(plane255, ((0, ph), (0, pw)), mode="edge")
    hp, wp = padded.shape
    blocks = padded.reshape(hp // 8, 8, wp // 8, 8).transpose(0, 2, 1, 3)
    coef = dctn(blocks - 128.0, type=2, norm="ortho", axes=(2, 3))
    quant = np.sign(coef) * np.floor(np.abs(coef) / table + 0.5) * table
    rec = idctn(quant, type=2, norm="ortho", axes=(2, 3)) + 128.0
    out = rec.transpose(0, 2, 1, 3).reshape(hp, wp)
    return out[:h, :w]


def _jpeg_array(arr: np.ndarray, quality: float) -> np.ndarray:
    luma_t, chroma_t = _scaled_tables(quality)
    v = np.clip(arr, 0.0, 1.0) * 255.0
    if arr.shape[2] == 1:
        rec = _jpeg_plane(v[:, :, 0], luma_t)[:, :, None]
    else:
        ycc = v @ _RGB_TO_YCBCR.T + _CHROMA_OFFSET
        planes = [
            _jpeg_plane(ycc[:, :, 0], luma_t),
            _jpeg_plane(ycc[:, :, 1], chroma_t),
            _jpeg_plane(ycc[:, :, 2], chroma_t),
        ]
        rec = (np.stack(planes, axis=2) - _CHROMA_OFFSET) @ _YCBCR_TO_RGB.T
    return np.clip(rec / 255.0, 0.0, 1.0)


def jpeg_roundtrip(img: ImageTensor, quality: float) -> ImageTensor:
    """Quantization-domain JPEG simulation (no bitstream).

    BT.601 YCbCr without chroma subsampling, edge-replicated padding to a
    multiple of 8, level shift by 128, blocked orthonormal DCT-II, Annex-K
    tables scaled by s = 5000/Q (Q < 50) or 200 - 2Q (Q >= 50) with
    q' = clamp(floor((q*s + 50)/100), 1, 255), coefficient rounding, and the
    inverse transform. Input and output are clipped to [0, 1] like the 8-bit
    pipeline it models. Deterministic; no RNG involved.
    """
    if not (1.0 <= quality <= 100.0):
        raise ValueError(f"quality must lie in [1, 100], got {quality}")
    return ImageTensor(_jpeg_array(img.data, quality))


# ---------------------------------------------------------------------------
# Full chain


def _degrade_array(arr: np.ndarray, a: DegradationParams, flags: ChainFlags, rng: SeededRng) -> np.ndarray:
    src_hw = (arr.shape[0], arr.shape[1])
    y = arr
    if flags.enable_blur:
        y = _blur_array(y, gaussian_kernel(a.sigma_k))
    if flags.enable_downsample:
        y = _resize_array(y, downsample_dims(src_hw[0], src_hw[1], a.scale))
    if flags.enable_noise and a.sigma_n > 0:
        g = rng.generator().standard_normal(y.shape)
        y = y + a.sigma_n * g
    if flags.enable_jpeg:
        y = _jpeg_array(y, a.quality)
    if flags.resize_back:
        y = _resize_array(y, src_hw)
    return y


def degrade(x: ImageTensor, a: DegradationParams, flags: ChainFlags, rng: SeededRng) -> ImageTensor:
    """One draw of the measurement Y = JPEG_Q((K*x) down_S + N) under flags."""
    return ImageTensor(_degrade_array(x.data, a, flags, rng))


def mean_measurement(
    x: ImageTensor,
    a: DegradationParams,
    flags: ChainFlags,
    m: int,
    rng: SeededRng,
) -> tuple[ImageTensor, ImageTensor]:
    """Monte Carlo estimate of mu_Y(x, a) over m independent degradations.

    Sample i draws its noise from rng.child(i), so results are reproducible
    and independent of evaluation order; the reduction itself runs in sample
    index order (Welford), which keeps parallel callers byte-deterministic.
    Returns (per-pixel mean, per-pixel standard deviation); the std is the
    population std and is all zeros for m = 1 by convention.
    """
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    mean = None
    m2 = None
    for i in range(m):
        sample = _degrade_array(x.data, a, flags, rng.child(i))
        if mean is None:
            mean = sample.copy()
            m2 = np.zeros_like(sample)
        else:
            delta = sample - mean
            mean += delta / (i + 1)
            m2 += delta * (sample - mean)
    std = np.sqrt(np.maximum(m2 / m, 0.0))
    return ImageTensor(mean), ImageTensor(std)


# ---------------------------------------------------------------------------
# Degradation parameter sidecar files


def write_sidecar(entries, path) -> None:
    """One line per image: `name sigma_k scale sigma_n quality`, full precision."""
    if hasattr(entries, "items"):
        entries = entries.items()
    lines = []
    for name, a in entries:
        name = str(name)
        if any(ch.isspace() for ch in name):
            raise ValueError(f"sidecar names cannot contain whitespace: {name!r}")
        lines.append(f"{name} {a.sigma_k!r} {a.scale!r} {a.sigma_n!r} {a.quality!r}\n")
    with open(str(path), "w", encoding="ascii") as fh:
        fh.writelines(lines)


def read_sidecar(path) -> dict[str, DegradationParams]:
    out: dict[str, DegradationParams] = {}
    with open(str(path), "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 5:
                raise ValueError(f"{path}:{lineno}: expected 'name sigma_k scale sigma_n quality', got {len(parts)} fields")
            name = parts[0]
            try:
                vals = [float(p) for p in parts[1:]]
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-numeric parameter") from None
            out[name] = DegradationParams(*vals)
    return out
