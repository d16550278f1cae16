"""Likelihood scores, consistency measures and no-reference distortion proxies.

Everything here works on measurements and reconstructions of the
degradation chain in `degrade`:

* empirical likelihood scores: `log_likelihood_gaussian` for a known
  deterministic operator, `ela_score` for the simulated chain (the
  measurement mean is estimated by Monte Carlo), and `ela_score_blind`
  which plugs in a predicted parameter set instead of the true one;

* consistency: `cmse` re-degrades a reconstruction with the true
  parameters and compares against the measurement, `proxcmse` does the
  same with parameters estimated from the measurement alone;

* distortion: `mse`/`psnr` against a reference, `proxmse`/`proxlpips`
  against a proxy of the minimum-MSE estimator in pixel or feature
  space, and `proxmse_error_bound` which evaluates the proxy-quality
  error bound mean(||R||^2 + 4 ||R||_1) for residuals R between the
  proxy and the exact posterior mean.

Squared-error image metrics are reported per pixel on the 0..255 scale
(values around a few hundred for visibly degraded images); likelihood
scores stay in raw intensity units since only differences matter.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable, Protocol, Sequence

import numpy as np
from scipy.signal import correlate

from .degrade import ChainFlags, DegradationParams, downsample_bilinear, mean_measurement
from .estimator import ParamPrediction
from .tensor_io import ImageTensor, SeededRng

__all__ = [
    "FeatureEmbedder",
    "LinearFilterBank",
    "MetricReport",
    "cmse",
    "cmse_per_item",
    "default_embedder",
    "ela_score",
    "ela_score_blind",
    "embed",
    "log_likelihood_gaussian",
    "lpips_form",
    "mse",
    "proxcmse",
    "proxcmse_per_item",
    "proxlpips",
    "proxmse",
    "proxmse_batch",
    "proxmse_error_bound",
    "psnr",
]


def _require_same_shape(a: ImageTensor, b: ImageTensor, what: str) -> None:
    if a.shape != b.shape:
        raise ValueError(f"{what}: shapes {a.shape} and {b.shape} differ")


# ---------------------------------------------------------------------------
# Likelihood scores (raw intensity units)


def log_likelihood_gaussian(y: ImageTensor, hx: ImageTensor) -> float:
    """-||y - hx||^2, the Gaussian log likelihood up to its constant."""
    _require_same_shape(y, hx, "log_likelihood_gaussian")
    d = y.data - hx.data
    return -float(np.sum(d * d))


def ela_score(
    y: ImageTensor,
    x: ImageTensor,
    a: DegradationParams,
    flags: ChainFlags,
    m: int,
    rng: SeededRng,
) -> float:
    """Empirical likelihood approximation -||y - mu_hat_Y(x, a)||^2.

    The conditional mean of the measurement is estimated with m Monte
    Carlo chain draws; with the codec and noise stages disabled the chain
    is deterministic and the score equals `log_likelihood_gaussian`
    against the chain output exactly.
    """
    mu, _ = mean_measurement(x, a, flags, m, rng)
    if mu.shape != y.shape:
        raise ValueError(
            f"measurement has dims {y.shape} but the chain for these parameters outputs {mu.shape}"
        )
    d = y.data - mu.data
    return -float(np.sum(d * d))


def ela_score_blind(
    y: ImageTensor,
    x: ImageTensor,
    predictor: ParamPrediction,
    flags: ChainFlags,
    m: int,
    rng: SeededRng,
) -> float:
    """`ela_score` with the degradation parameters taken from a prediction."""
    return ela_score(y, x, predictor.params, flags, m, rng)


# ---------------------------------------------------------------------------
# Consistency measures (per-pixel, 0..255 scale)

_SCALE255 = 255.0**2


def _consistency_value(
    x_hat: ImageTensor,
    y: ImageTensor,
    a: DegradationParams,
    flags: ChainFlags,
    m: int,
    rng: SeededRng,
) -> float:
    mu, _ = mean_measurement(x_hat, a, flags, m, rng)
    if mu.shape != y.shape:
        raise ValueError(
            f"measurement has dims {y.shape} but the chain for these parameters outputs {mu.shape}"
        )
    d = y.data - mu.data
    return float(np.sum(d * d)) / d.size * _SCALE255


def cmse_per_item(
    pairs: Sequence[tuple[ImageTensor, ImageTensor, DegradationParams]],
    flags: ChainFlags,
    m: int,
    rng: SeededRng,
) -> list[float]:
    """Per-item consistency values ||y - mu_hat_Y(x_hat, a)||^2 / pixels * 255^2.

    Every item reuses the same noise streams (the rng has value
    semantics), so the list is independent of evaluation order and safe
    to compute in parallel.
    """
    if len(pairs) == 0:
        raise ValueError("cmse needs at least one (x_hat, y, a) item")
    return [_consistency_value(x_hat, y, a, flags, m, rng) for (x_hat, y, a) in pairs]


def cmse(
    pairs: Sequence[tuple[ImageTensor, ImageTensor, DegradationParams]],
    flags: ChainFlags,
    m: int,
    rng: SeededRng,
) -> float:
    """Mean re-degradation consistency error under the true parameters."""
    vals = cmse_per_item(pairs, flags, m, rng)
    return math.fsum(vals) / len(vals)


def proxcmse_per_item(
    pairs: Sequence[tuple[ImageTensor, ImageTensor]],
    estimator: Callable[[ImageTensor], ParamPrediction],
    flags: ChainFlags,
    m: int,
    rng: SeededRng,
) -> list[float]:
    """Per-item consistency with parameters estimated from each measurement."""
    if len(pairs) == 0:
        raise ValueError("proxcmse needs at least one (x_hat, y) item")
    out = []
    for x_hat, y in pairs:
        a_hat = estimator(y).params
        out.append(_consistency_value(x_hat, y, a_hat, flags, m, rng))
    return out


def proxcmse(
    pairs: Sequence[tuple[ImageTensor, ImageTensor]],
    estimator: Callable[[ImageTensor], ParamPrediction],
    flags: ChainFlags,
    m: int,
    rng: SeededRng,
) -> float:
    """Mean re-degradation consistency error under estimated parameters."""
    vals = proxcmse_per_item(pairs, estimator, flags, m, rng)
    return math.fsum(vals) / len(vals)


# ---------------------------------------------------------------------------
# Distortion measures


def mse(x: ImageTensor, x_hat: ImageTensor) -> float:
    """Mean squared error per pixel on the 0..255 scale."""
    _require_same_shape(x, x_hat, "mse")
    d = x.data - x_hat.data
    return float(np.sum(d * d)) / d.size * _SCALE255


def psnr(x: ImageTensor, x_hat: ImageTensor) -> float:
    """Peak signal-to-noise ratio in dB; identical images give +inf."""
    v = mse(x, x_hat)
    if v == 0.0:
        return math.inf
    return 10.0 * math.log10(_SCALE255 / v)


def proxmse(x_hat: ImageTensor, x_star_proxy: ImageTensor) -> float:
    """Distance to a proxy of the posterior-mean estimator, as `mse`."""
    _require_same_shape(x_hat, x_star_proxy, "proxmse")
    return mse(x_hat, x_star_proxy)


def proxmse_batch(pairs: Sequence[tuple[ImageTensor, ImageTensor]]) -> float:
    if len(pairs) == 0:
        raise ValueError("proxmse_batch needs at least one item")
    return math.fsum(proxmse(x_hat, p) for x_hat, p in pairs) / len(pairs)


def proxmse_error_bound(residuals: Sequence[ImageTensor]) -> float:
    """mean(||R||^2 + 4 ||R||_1) over proxy residuals R = proxy - exact.

    When the reconstruction and both estimators take values in [0, 1],
    the absolute error of the proxy distortion measure is bounded by this
    quantity (raw intensity units, not rescaled).
    """
    if len(residuals) == 0:
        raise ValueError("proxmse_error_bound needs at least one residual")
    vals = []
    for r in residuals:
        arr = r.data
        vals.append(float(np.sum(arr * arr)) + 4.0 * float(np.sum(np.abs(arr))))
    return math.fsum(vals) / len(vals)


# ---------------------------------------------------------------------------
# Feature-space (latent) form


class FeatureEmbedder(Protocol):
    """Maps an image to feature stacks with per-channel weights.

    `features(x)` returns a list of (f_l, w_l) pairs where f_l has shape
    (H_l, W_l, C_l) and w_l has shape (C_l,). Implementations must be
    deterministic and should emit channel-normalized features (each
    channel's filter scaled to unit norm) so the weights carry the
    relative importance.
    """

    def features(self, x: ImageTensor) -> list[tuple[np.ndarray, np.ndarray]]: ...


# 3x3 filter bank: identity, horizontal/vertical edge, curvature.
# Each filter is scaled to unit L2 norm, which is the channel-wise
# normalization the latent metric expects; the map stays linear so
# posterior means commute with it.
_BANK = [
    np.array([[0.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 0.0]]),
    np.array([[1.0, 0.0, -1.0], [2.0, 0.0, -2.0], [1.0, 0.0, -1.0]]),
    np.array([[1.0, 2.0, 1.0], [0.0, 0.0, 0.0], [-1.0, -2.0, -1.0]]),
    np.array([[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]]),
]
_BANK = [k / float(np.linalg.norm(k)) for k in _BANK]


@dataclass(frozen=True)
class LinearFilterBank:
    """Fixed multi-scale linear embedder.

    Applies the 3x3 bank (identity, Sobel-x, Sobel-y, Laplacian, each
    unit-normalized) per input channel at dyadic scales of the image.
    Scales that would shrink the short side below 4 pixels are skipped,
    so the layer list adapts to the input size but is deterministic
    given the shape.
    """

    scales: tuple[int, ...] = (1, 2, 4)

    def features(self, x: ImageTensor) -> list[tuple[np.ndarray, np.ndarray]]:
        out = []
        for s in self.scales:
            if min(x.height, x.width) // s < 4:
                continue
            img = x if s == 1 else downsample_bilinear(x, float(s))
            plane = img.data
            responses = []
            for k in _BANK:
                padded = np.pad(plane, ((1, 1), (1, 1), (0, 0)), mode="reflect")
                for c in range(plane.shape[2]):
                    responses.append(correlate(padded[:, :, c], k, mode="valid"))
            f = np.stack(responses, axis=-1)
            w = np.ones(f.shape[-1])
            out.append((f, w))
        if not out:
            raise ValueError(f"image {x.shape} too small for any embedding scale")
        return out


def default_embedder() -> LinearFilterBank:
    return LinearFilterBank()


def embed(x: ImageTensor, e: FeatureEmbedder) -> np.ndarray:
    """Flatten weighted features into one vector.

    Layer l contributes (1/sqrt(H_l W_l)) * (w_l * f_l) flattened, so the
    squared norm of the difference of two embeddings equals the layer sum
    sum_l (1/(H_l W_l)) sum_{h,w} ||w_l * (f_l - f_hat_l)||^2.
    """
    parts = []
    for f, w in e.features(x):
        h, wd = f.shape[0], f.shape[1]
        parts.append((f * w).reshape(-1) / math.sqrt(h * wd))
    return np.concatenate(parts)


def lpips_form(z: np.ndarray, z_hat: np.ndarray) -> float:
    """Squared distance between flattened feature vectors."""
    z = np.asarray(z, dtype=np.float64)
    z_hat = np.asarray(z_hat, dtype=np.float64)
    if z.shape != z_hat.shape:
        raise ValueError(f"feature vectors have shapes {z.shape} and {z_hat.shape}")
    d = z - z_hat
    return float(np.sum(d * d))


def proxlpips(x_hat: ImageTensor, z_star_proxy: np.ndarray, e: FeatureEmbedder) -> float:
    """Latent-space distance to a proxy of the posterior mean's embedding."""
    return lpips_form(embed(x_hat, e), z_star_proxy)


# ---------------------------------------------------------------------------
# Reports


@dataclass(frozen=True)
class MetricReport:
    """Per-item metric rows plus exact aggregates.

    Rows are (item, metric, value) triples. The aggregate mean per metric
    is the arithmetic mean of its rows computed with exact summation, and
    the standard error is the sample standard deviation over sqrt(n)
    (zero for a single row).
    """

    rows: tuple[tuple[str, str, float], ...]

    def metrics(self) -> list[str]:
        seen = []
        for _, name, _ in self.rows:
            if name not in seen:
                seen.append(name)
        return seen

    def values(self, metric: str) -> list[float]:
        return [v for _, name, v in self.rows if name == metric]

    def aggregate(self) -> dict[str, tuple[float, float]]:
        out = {}
        for name in self.metrics():
            vals = self.values(name)
            mean = math.fsum(vals) / len(vals)
            if len(vals) > 1:
                var = math.fsum((v - mean) ** 2 for v in vals) / (len(vals) - 1)
                stderr = math.sqrt(var / len(vals))
            else:
                stderr = 0.0
            out[name] = (mean, stderr)
        return out

    def to_csv(self) -> str:
        lines = ["item,metric,value"]
        for item, name, v in self.rows:
            lines.append(f"{item},{name},{v!r}")
        return "\n".join(lines) + "\n"

    def to_json_summary(self) -> str:
        agg = self.aggregate()
        payload = {
            name: {"mean": mean, "stderr": stderr, "count": len(self.values(name))}
            for name, (mean, stderr) in agg.items()
        }
        return json.dumps({"metrics": payload}, indent=2, sort_keys=True) + "\n"
