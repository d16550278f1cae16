"""Degradation parameter estimation.

Two routes produce a :class:`ParamPrediction`:

* `estimate_blind(y, ...)` runs cheap single-image heads on the measurement
  alone: an Immerkaer Laplacian estimate for the noise level, quantization
  step detection in the blocked DCT domain for the JPEG quality, and radial
  power-spectrum fits for the blur width and (when needed) the downsampling
  factor. These are coarse, honest heuristics standing in for a trained
  regressor.

* `fit_params_oracle(x, y, ...)` has access to the clean source and fits
  a by simulation matching: score candidates with a per-pixel Gaussian
  log likelihood built from the Monte Carlo mean and variance of the
  simulated measurement. The MC draws use fixed seeds across all
  objective evaluations (common random numbers), so the objective is
  deterministic and the fit reproducible. A coarse grid scan seeds a
  bounded Nelder-Mead refinement (reflection 1, expansion 2, contraction
  0.5, shrink 0.5, stop when the simplex diameter falls below 1e-3 in
  normalized coordinates).

Training-style losses for external predictors are provided as
`loss_main` (parameter-space, per-axis normalized), `loss_reg`
(measurement-space with common random numbers), and their 0.25/1 weighted
sum `loss_total`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.fft import dctn
from scipy.signal import correlate

from .degrade import (
    DEFAULT_BOUNDS,
    ChainFlags,
    DegradationParams,
    ParamBounds,
    _RGB_TO_YCBCR,
    _blur_array,
    _scaled_tables,
    downsample_dims,
    gaussian_kernel,
    mean_measurement,
    read_sidecar,
)
from .tensor_io import ImageTensor, SeededRng

__all__ = [
    "EstimatorConfig",
    "FitError",
    "ParamPrediction",
    "estimate_blind",
    "estimate_jpeg_quality",
    "estimate_noise_std",
    "fit_params_oracle",
    "load_external_params",
    "loss_main",
    "loss_reg",
    "loss_total",
]


class FitError(RuntimeError):
    pass


@dataclass(frozen=True)
class ParamPrediction:
    """Estimated degradation parameters plus where they came from.

    `objective` is the final fit objective for oracle fits and None for
    blind or external predictions. `source` is one of "blind",
    "oracle_fit", "external".
    """

    params: DegradationParams
    objective: float | None = None
    source: str = "blind"
    warnings: tuple[str, ...] = ()


@dataclass(frozen=True)
class EstimatorConfig:
    bounds: ParamBounds = DEFAULT_BOUNDS
    grid_resolution: int = 4
    refine_iters: int = 200
    mc_samples: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.grid_resolution < 2:
            raise ValueError("grid_resolution must be >= 2")
        if self.refine_iters < 0 or self.mc_samples < 1:
            raise ValueError("bad EstimatorConfig")


# ---------------------------------------------------------------------------
# Blind heads

_IMMERKAER_MASK = np.array([[1.0, -2.0, 1.0], [-2.0, 4.0, -2.0], [1.0, -2.0, 1.0]])


def estimate_noise_std(y: ImageTensor) -> float:
    """Immerkaer fast noise estimate, averaged over channels.

    sigma_hat = sqrt(pi/2) / (6 (W-2)(H-2)) * sum |y (*) M| with the
    3x3 Laplacian-difference mask M; the mask annihilates locally planar
    structure, so the absolute response measures the noise floor.
    """
    h, w = y.height, y.width
    if h < 3 or w < 3:
        raise ValueError("noise estimation needs at least a 3x3 image")
    total = 0.0
    for c in range(y.channels):
        resp = correlate(y.data[:, :, c], _IMMERKAER_MASK, mode="valid")
        total += float(np.abs(resp).sum()) * math.sqrt(0.5 * math.pi) / (6.0 * (w - 2) * (h - 2))
    return total / y.channels


def _luma255(y: ImageTensor) -> np.ndarray:
    v = y.data * 255.0
    if y.channels == 1:
        return v[:, :, 0]
    return v @ _RGB_TO_YCBCR[0]


def _detect_quality(y: ImageTensor) -> tuple[float, bool]:
    """Quality factor plus a flag saying whether lattice structure was found.

    The output of the codec stage carries its quantized DCT coefficients
    exactly (the colour transform and inverse DCT are linear), so blocks
    that were not clipped afterwards sit on the step lattice up to float
    roundoff. All 64 coefficient positions are pooled: for each candidate
    Q the residual to the predicted lattice is normalized by the step's
    uniform-distribution variance (step^2/12) and averaged over the
    coefficients that round off the zero bin. Blocks containing saturated
    pixels are masked out since clipping knocks them off the lattice.
    """
    h, w = y.height, y.width
    if min(h, w) < 16:
        raise ValueError("quality estimation needs at least 16x16 pixels")
    luma = _luma255(y) - 128.0
    nbh, nbw = h // 8, w // 8
    blocks = luma[: nbh * 8, : nbw * 8].reshape(nbh, 8, nbw, 8).transpose(0, 2, 1, 3)
    pix = y.data[: nbh * 8, : nbw * 8, :].reshape(nbh, 8, nbw, 8, -1).transpose(0, 2, 1, 3, 4)
    keep = ~((pix <= 0.0) | (pix >= 1.0)).any(axis=(2, 3, 4))
    if not keep.any():
        keep = np.ones((nbh, nbw), dtype=bool)
    coef = dctn(blocks, type=2, norm="ortho", axes=(2, 3))[keep]

    def lattice_err(q_candidate: int) -> float | None:
        table = _scaled_tables(float(q_candidate))[0]
        k = np.round(coef / table)
        nz = k != 0
        if int(nz.sum()) < 8:
            return None
        r = coef - k * table
        t = np.broadcast_to(table, coef.shape)
        return float(np.mean(12.0 * r[nz] ** 2 / t[nz] ** 2))

    good = []
    for q in range(1, 101):
        e = lattice_err(q)
        if e is not None and e < 0.15:
            good.append(q)
    if not good:
        return 100.0, False
    q_lo = min(good)
    q_hi = q_lo
    while q_hi + 1 in good:
        q_hi += 1
    if q_hi == 100:
        return 100.0, True
    return float((q_lo + q_hi) // 2), True


def estimate_jpeg_quality(y: ImageTensor) -> float:
    """Estimate the JPEG quality factor from DCT quantization structure.

    A previously compressed image has its blocked DCT coefficients
    clustered on multiples of the quantization steps. Every candidate Q
    in 1..100 is scored by the normalized misfit to its step lattice over
    all 64 coefficient positions, and the smallest consistent Q (refined
    to the midpoint of its plateau of equally consistent neighbours)
    wins. Returns 100.0 when no quantization structure is detected.
    """
    return _detect_quality(y)[0]


def _radial_power(luma: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Radially averaged power spectrum; frequencies in cycles/pixel."""
    h, w = luma.shape
    spec = np.fft.rfft2(luma - luma.mean())
    power = np.abs(spec) ** 2 / (h * w)
    fy = np.fft.fftfreq(h)[:, None]
    fx = np.fft.rfftfreq(w)[None, :]
    fr = np.hypot(fy, fx)
    nbins = max(min(h, w) // 2, 4)
    edges = np.linspace(0.0, 0.5, nbins + 1)
    idx = np.clip(np.digitize(fr.ravel(), edges) - 1, 0, nbins - 1)
    sums = np.bincount(idx, weights=power.ravel(), minlength=nbins)
    counts = np.bincount(idx, minlength=nbins)
    centers = 0.5 * (edges[:-1] + edges[1:])
    valid = counts > 0
    return centers[valid], sums[valid] / counts[valid]


def _grad_energy(plane: np.ndarray) -> float:
    gx = np.diff(plane, axis=1)
    gy = np.diff(plane, axis=0)
    return float(np.mean(gx * gx) + np.mean(gy * gy))


def _noise_grad_factor(sigma_probe: float) -> float:
    """Gradient energy of unit white noise after an extra probe blur."""
    if sigma_probe <= 0:
        return 4.0  # two axes, each E[(n_{i+1}-n_i)^2] = 2
    k = gaussian_kernel(sigma_probe).weights
    z = np.zeros((k.shape[0], 1))
    t = np.hstack([k, z]) - np.hstack([z, k])  # composite blur-then-diff filter
    return float(2.0 * np.sum(t * t))


def _fit_blur_sigma(luma: np.ndarray, lo: float, hi: float, sigma_n: float = 0.0) -> float:
    """Blur width by the re-blur gradient-energy ratio.

    For a scene with a 1/f^3 power law (a good match to smooth
    portrait-like content) seen through a Gaussian blur of width sigma,
    the mean squared gradient after an extra probe blur of width s scales
    as 1/sqrt(sigma^2 + s^2), so with R = G(0)/G(s)

        sigma^2 = s^2 / (R^2 - 1).

    The expected white-noise contribution (from a previously estimated
    sigma_n) is subtracted from both energies. A second pass re-probes at
    the first estimate for better conditioning of wide blurs.
    """
    plane = np.ascontiguousarray(luma, dtype=np.float64)[:, :, None]
    g0 = _grad_energy(plane[:, :, 0]) - sigma_n**2 * _noise_grad_factor(0.0)
    if g0 <= 0:
        raise ValueError("gradient energy below the noise floor")

    def estimate(probe: float) -> float:
        blurred = _blur_array(plane, gaussian_kernel(probe))[:, :, 0]
        gs = _grad_energy(blurred) - sigma_n**2 * _noise_grad_factor(probe)
        if gs <= 0:
            return lo
        ratio2 = (g0 / gs) ** 2
        if ratio2 <= 1.0 + 1e-9:
            return hi
        return math.sqrt(probe**2 / (ratio2 - 1.0))

    sigma = estimate(1.0)
    if sigma > 2.0:
        sigma = estimate(min(max(sigma, 1.0), hi))
    return float(min(max(sigma, lo), hi))


def _spectral_cutoff_scale(luma: np.ndarray, lo: float, hi: float) -> float:
    """Scale factor from the radial frequency where content power collapses."""
    freqs, power = _radial_power(luma)
    if power.size < 8:
        raise ValueError("image too small for spectral scale estimation")
    smooth = np.convolve(power, np.ones(3) / 3.0, mode="same")
    ref = float(np.max(smooth[: max(3, smooth.size // 8)]))
    below = np.nonzero((smooth < 1e-3 * ref) & (freqs > 0.02))[0]
    if below.size == 0:
        return lo
    f_cut = float(freqs[below[0]])
    return float(min(max(0.5 / f_cut, lo), hi))


def _clamp(v: float, lohi: tuple[float, float]) -> float:
    return min(max(v, lohi[0]), lohi[1])


def estimate_blind(
    y: ImageTensor,
    flags: ChainFlags,
    source_size: int | tuple[int, int] | None = None,
    bounds: ParamBounds = DEFAULT_BOUNDS,
) -> ParamPrediction:
    """Parameter prediction from the measurement alone.

    When the measurement is at its native downsampled resolution, the scale
    is read off a declared canonical source size; with resize_back it is
    estimated from the radial spectral cutoff. Failed heads degrade to the
    bound midpoints and are reported in `warnings`.
    """
    warnings: list[str] = []
    mid = {k: 0.5 * (lo + hi) for k, (lo, hi) in bounds.as_dict().items()}

    if flags.enable_noise:
        try:
            sigma_n = _clamp(estimate_noise_std(y), bounds.sigma_n)
        except Exception as exc:
            warnings.append(f"sigma_n head failed ({exc}); using bound midpoint")
            sigma_n = mid["sigma_n"]
    else:
        sigma_n = 0.0

    if flags.enable_jpeg:
        try:
            quality = _clamp(estimate_jpeg_quality(y), bounds.quality)
        except Exception as exc:
            warnings.append(f"quality head failed ({exc}); using bound midpoint")
            quality = mid["quality"]
    else:
        quality = 100.0

    scale = 1.0
    if flags.enable_downsample:
        if not flags.resize_back:
            if source_size is None:
                warnings.append("native-resolution measurement without a declared source size; using bound midpoint")
                scale = mid["scale"]
            else:
                src_h = source_size[0] if isinstance(source_size, tuple) else int(source_size)
                scale = _clamp(src_h / y.height, bounds.scale)
        else:
            try:
                scale = _spectral_cutoff_scale(_luma255(y), *bounds.scale)
            except Exception as exc:
                warnings.append(f"scale head failed ({exc}); using bound midpoint")
                scale = mid["scale"]

    if flags.enable_blur:
        try:
            apparent = _fit_blur_sigma(y.data.mean(axis=2) if y.channels == 3 else y.data[:, :, 0],
                                       bounds.sigma_k[0], bounds.sigma_k[1],
                                       sigma_n=sigma_n if flags.enable_noise else 0.0)
            if flags.enable_downsample and not flags.resize_back and scale > 1.2:
                # the resampling itself smooths by roughly half a pixel on y's grid
                apparent = math.sqrt(max(apparent**2 - 0.25, bounds.sigma_k[0] ** 2))
                sigma_k = _clamp(apparent * scale, bounds.sigma_k)
            else:
                sigma_k = _clamp(apparent, bounds.sigma_k)
        except Exception as exc:
            warnings.append(f"sigma_k head failed ({exc}); using bound midpoint")
            sigma_k = mid["sigma_k"]
    else:
        sigma_k = bounds.sigma_k[0]

    params = DegradationParams(sigma_k=sigma_k, scale=scale, sigma_n=sigma_n, quality=quality)
    return ParamPrediction(params=params, objective=None, source="blind", warnings=tuple(warnings))


# ---------------------------------------------------------------------------
# Oracle fit by simulation matching

_AXES = ("sigma_k", "log_scale", "sigma_n", "quality")


def _axis_bounds(bounds: ParamBounds) -> dict[str, tuple[float, float]]:
    return {
        "sigma_k": bounds.sigma_k,
        "log_scale": (math.log(bounds.scale[0]), math.log(bounds.scale[1])),
        "sigma_n": bounds.sigma_n,
        "quality": bounds.quality,
    }


def _nelder_mead(f, x0: np.ndarray, step: float, max_iter: int, diam_tol: float = 1e-3):
    """Bounded Nelder-Mead on [0,1]^n; candidates are clipped into the box."""
    n = x0.size
    clip = lambda v: np.clip(v, 0.0, 1.0)
    sim = [x0.copy()]
    for i in range(n):
        v = x0.copy()
        v[i] = v[i] + step if v[i] + step <= 1.0 else v[i] - step
        sim.append(clip(v))
    fs = [f(v) for v in sim]

    for _ in range(max_iter):
        order = np.argsort(np.asarray(fs), kind="stable")
        sim = [sim[i] for i in order]
        fs = [fs[i] for i in order]
        diam = max(
            float(np.linalg.norm(sim[i] - sim[j]))
            for i in range(n + 1)
            for j in range(i + 1, n + 1)
        )
        if diam < diam_tol:
            break
        centroid = np.mean(sim[:-1], axis=0)
        xr = clip(centroid + (centroid - sim[-1]))
        fr = f(xr)
        if fr < fs[0]:
            xe = clip(centroid + 2.0 * (centroid - sim[-1]))
            fe = f(xe)
            sim[-1], fs[-1] = (xe, fe) if fe < fr else (xr, fr)
        elif fr < fs[-2]:
            sim[-1], fs[-1] = xr, fr
        else:
            if fr < fs[-1]:
                xc = clip(centroid + 0.5 * (xr - centroid))
                fc = f(xc)
                if fc <= fr:
                    sim[-1], fs[-1] = xc, fc
                    continue
            else:
                xc = centroid + 0.5 * (sim[-1] - centroid)
                fc = f(xc)
                if fc < fs[-1]:
                    sim[-1], fs[-1] = xc, fc
                    continue
            for i in range(1, n + 1):
                sim[i] = sim[0] + 0.5 * (sim[i] - sim[0])
                fs[i] = f(sim[i])
    best = int(np.argmin(fs))
    return sim[best], fs[best]


# variance floor inside the fit's per-pixel Gaussian model: half an 8-bit
# quantization level, so deterministic chains never divide by zero
_VAR_FLOOR = (0.5 / 255.0) ** 2


def fit_params_oracle(
    x: ImageTensor,
    y: ImageTensor,
    flags: ChainFlags,
    cfg: EstimatorConfig = EstimatorConfig(),
) -> ParamPrediction:
    """Fit the chain parameters by matching simulated measurement moments.

    Candidates are scored with a per-pixel Gaussian log likelihood built
    from the Monte Carlo mean and variance of the simulated measurement,
    sum((y - mu)^2 / v + log v). The plain squared residual to the mean
    carries almost no information about the noise level (the noise only
    leaves a second-order dither trace in the mean), while the variance
    term identifies it directly; the residual term still drives the blur
    and codec axes. The MC draws reuse the same streams for every
    objective evaluation (common random numbers), so the objective is a
    deterministic function of a and the whole fit is reproducible.

    Search runs on a coarse grid then a bounded Nelder-Mead over the free
    axes (sigma_k, log S, sigma_n, Q). Two axes can be resolved exactly
    beforehand and are then pinned rather than searched: the scale when
    the measurement sits at its native downsampled resolution (the chain
    depends on S only through the output dimensions), and the quality
    when the codec stage is terminal and its quantization lattice is
    detectable in y. Parameters of disabled stages are reported at
    neutral values. Never returns parameters outside the configured
    bounds. The reported objective is the plain squared residual
    ||y - mu_Y(x, a)||^2 at the minimizer.
    """
    rng_fit = SeededRng(cfg.seed, (91,))
    ax_bounds = _axis_bounds(cfg.bounds)

    pinned_scale = 1.0
    pinned_quality = 100.0
    free_axes = []
    if flags.enable_blur:
        free_axes.append("sigma_k")
    if flags.enable_downsample:
        if flags.resize_back:
            if (y.height, y.width) != (x.height, x.width):
                raise FitError(f"resize_back measurement must match source dims, got {(y.height, y.width)} vs {(x.height, x.width)}")
            free_axes.append("log_scale")
        else:
            pinned_scale = x.height / y.height
            lo, hi = cfg.bounds.scale
            if not (lo <= pinned_scale <= hi):
                raise FitError(f"implied scale {pinned_scale} outside bounds {cfg.bounds.scale}")
            if downsample_dims(x.height, x.width, pinned_scale) != (y.height, y.width):
                raise FitError(f"measurement dims {(y.height, y.width)} inconsistent with source {(x.height, x.width)}")
    if flags.enable_noise:
        free_axes.append("sigma_n")
    if flags.enable_jpeg:
        detected = False
        if not flags.resize_back and min(y.height, y.width) >= 16:
            q_hat, detected = _detect_quality(y)
        if detected:
            pinned_quality = _clamp(q_hat, cfg.bounds.quality)
        else:
            free_axes.append("quality")

    def denorm(vec: np.ndarray) -> DegradationParams:
        vals = {"sigma_k": cfg.bounds.sigma_k[0], "sigma_n": 0.0, "quality": pinned_quality}
        scale = pinned_scale if flags.enable_downsample else 1.0
        for name, u in zip(free_axes, vec):
            lo, hi = ax_bounds[name]
            v = lo + float(u) * (hi - lo)
            if name == "log_scale":
                scale = math.exp(v)
            else:
                vals[name] = v
        return DegradationParams(sigma_k=vals["sigma_k"], scale=scale, sigma_n=vals["sigma_n"], quality=vals["quality"])

    y_arr = y.data
    m = cfg.mc_samples

    def moments(params: DegradationParams):
        try:
            mu, sd = mean_measurement(x, params, flags, m, rng_fit)
        except ValueError:
            return None
        if mu.shape != y.shape:
            return None
        return mu, sd

    def objective(vec: np.ndarray) -> float:
        params = denorm(vec)
        mom = moments(params)
        if mom is None:
            return math.inf
        mu, sd = mom
        r2 = (y_arr - mu.data) ** 2
        if m > 1:
            # unbiased sample variance, inflated by the mean's own MC error
            v = sd.data**2 * (m / (m - 1)) * (1.0 + 1.0 / m) + _VAR_FLOOR
            val = float(np.sum(r2 / v + np.log(v)))
        else:
            val = float(np.sum(r2))
        if math.isnan(val):
            raise FitError(f"non-finite objective at {params}")
        return val

    def residual(params: DegradationParams) -> float:
        mom = moments(params)
        if mom is None:
            raise FitError(f"infeasible parameters {params}")
        return float(np.sum((y_arr - mom[0].data) ** 2))

    if not free_axes:
        params = denorm(np.zeros(0))
        val = objective(np.zeros(0))
        if not math.isfinite(val):
            raise FitError("objective is infeasible with all axes pinned")
        return ParamPrediction(params=params, objective=residual(params), source="oracle_fit")

    grid_axes = [np.linspace(0.0, 1.0, cfg.grid_resolution)] * len(free_axes)
    best_vec, best_val = None, math.inf
    mesh = np.meshgrid(*grid_axes, indexing="ij")
    points = np.stack([m_.ravel() for m_ in mesh], axis=1)
    for vec in points:
        val = objective(vec)
        if val < best_val:
            best_vec, best_val = vec.copy(), val
    if best_vec is None or not math.isfinite(best_val):
        raise FitError("every grid cell was infeasible")

    if cfg.refine_iters > 0:
        step = 0.5 / max(cfg.grid_resolution - 1, 1)
        best_vec, best_val = _nelder_mead(objective, best_vec, step, cfg.refine_iters)

    params = denorm(best_vec)
    return ParamPrediction(params=params, objective=residual(params), source="oracle_fit")


# ---------------------------------------------------------------------------
# Losses for predictor training / evaluation


def _normalized(a: DegradationParams, bounds: ParamBounds) -> np.ndarray:
    d = bounds.as_dict()
    out = []
    for name, v in zip(("sigma_k", "scale", "sigma_n", "quality"), a.as_tuple()):
        lo, hi = d[name]
        out.append((v - lo) / (hi - lo))
    return np.array(out)


def loss_main(a: DegradationParams, a_hat: DegradationParams, bounds: ParamBounds = DEFAULT_BOUNDS) -> float:
    """Squared parameter error with each axis normalized to [0, 1] span."""
    d = _normalized(a, bounds) - _normalized(a_hat, bounds)
    return float(np.sum(d * d))


def loss_reg(
    x: ImageTensor,
    a: DegradationParams,
    a_hat: DegradationParams,
    flags: ChainFlags,
    m: int,
    rng: SeededRng,
) -> float:
    """||mu_Y(x, a) - mu_Y(x, a_hat)||^2 with common random numbers."""
    mu_a, _ = mean_measurement(x, a, flags, m, rng)
    mu_b, _ = mean_measurement(x, a_hat, flags, m, rng)
    if mu_a.shape != mu_b.shape:
        raise ValueError(f"mean measurements have different shapes {mu_a.shape} vs {mu_b.shape}; regularizer undefined")
    return float(np.sum((mu_a.data - mu_b.data) ** 2))


def loss_total(
    x: ImageTensor,
    a: DegradationParams,
    a_hat: DegradationParams,
    flags: ChainFlags,
    m: int,
    rng: SeededRng,
    bounds: ParamBounds = DEFAULT_BOUNDS,
) -> float:
    """0.25 * loss_main + loss_reg."""
    return 0.25 * loss_main(a, a_hat, bounds) + loss_reg(x, a, a_hat, flags, m, rng)


def load_external_params(path, bounds: ParamBounds = DEFAULT_BOUNDS) -> dict[str, ParamPrediction]:
    """Sidecar file -> predictions with source="external".

    Sampling bounds are soft here: out-of-range values are accepted but
    flagged in `warnings`.
    """
    out: dict[str, ParamPrediction] = {}
    for name, a in read_sidecar(path).items():
        warnings = []
        for axis, (lo, hi) in bounds.as_dict().items():
            v = getattr(a, axis)
            if not (lo <= v <= hi):
                warnings.append(f"{axis}={v!r} outside sampling bounds [{lo}, {hi}]")
        out[name] = ParamPrediction(params=a, objective=None, source="external", warnings=tuple(warnings))
    return out
