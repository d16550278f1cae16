"""blindkit: simulate, estimate, and evaluate blind image restoration.

Desk-scale toolkit built around four ideas:

* a stochastic degradation chain (blur, downsample, noise, JPEG) with
  exact linear-stage adjoints (`blindkit.degrade`);
* measurement-consistency scores and proxy distortion metrics computed
  against Monte Carlo estimates of the expected measurement
  (`blindkit.metrics`), with exact finite-alphabet oracles for the
  identities behind them (`blindkit.toy_oracle`);
* degradation-parameter estimation, both blind single-image heads and an
  oracle fit by simulation matching (`blindkit.estimator`), plus KDE
  mimicry of parameter distributions (`blindkit.kde_synth`);
* a guided diffusion restoration sampler with an empirical-prior denoiser
  (`blindkit.restore`).

Everything is deterministic given a (seed, stream) pair; see README for
the RNG contract.
"""

from .tensor_io import FormatError, ImageTensor, SeededRng, gaussian_samples, read_image, write_image
from .degrade import (
    DEFAULT_BOUNDS,
    ChainFlags,
    DegradationParams,
    Kernel2D,
    ParamBounds,
    add_noise,
    blur,
    blur_adjoint,
    degrade,
    downsample_adjoint,
    downsample_bilinear,
    gaussian_kernel,
    jpeg_roundtrip,
    mean_measurement,
    read_sidecar,
    resize_bilinear,
    sample_params,
    write_sidecar,
)
from .estimator import (
    EstimatorConfig,
    FitError,
    ParamPrediction,
    estimate_blind,
    estimate_jpeg_quality,
    estimate_noise_std,
    fit_params_oracle,
    load_external_params,
    loss_main,
    loss_reg,
    loss_total,
)
from .metrics import (
    LinearFilterBank,
    MetricReport,
    cmse,
    default_embedder,
    ela_score,
    ela_score_blind,
    embed,
    log_likelihood_gaussian,
    lpips_form,
    mse,
    proxcmse,
    proxlpips,
    proxmse,
    proxmse_batch,
    proxmse_error_bound,
    psnr,
)
from .toy_oracle import (
    ToyChannel,
    ToyEstimator,
    bsc_channel,
    identity_estimator,
    mmse_value,
    posterior_mean,
    random_channel,
    random_estimator,
    toy_cmse,
    toy_mse,
    toy_proxmse,
    verify_bound,
    verify_prop1,
)
from .kde_synth import KdeModel, kde_fit, kde_sample, synth_dataset
from .restore import (
    EladConfig,
    NoiseSchedule,
    RestoreError,
    ddim_step,
    elad_restore,
    empirical_mmse_denoiser,
    forward_sample,
    guidance_gradient,
    linear_schedule,
    mmse_regressor,
    step_size,
)

__version__ = "0.1.0"
