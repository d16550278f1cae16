"""End-to-end acceptance suite shared by pytest and `blindkit selftest`.

Twelve numbered checks, each a self-contained experiment with frozen
seeds so every run reproduces the same numbers. The expensive suites
(parameter recovery, guided-vs-unguided sampling, metric alignment)
parallelize over cases through `parallel_map`, whose ordered reduction
keeps results independent of the worker count; check 12 verifies that
independence byte-for-byte on a miniature artifact pipeline.

`run_all` returns one result per criterion; `format_report` renders the
stable one-line-per-criterion report (no timings, so report files are
identical across runs and worker counts).
"""

from __future__ import annotations

import filecmp
import math
import os
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .degrade import (
    ChainFlags,
    DegradationParams,
    ParamBounds,
    blur,
    blur_adjoint,
    degrade,
    downsample_adjoint,
    downsample_bilinear,
    downsample_dims,
    gaussian_kernel,
    jpeg_roundtrip,
    mean_measurement,
)
from .estimator import EstimatorConfig, ParamPrediction, fit_params_oracle
from .kde_synth import kde_fit, synth_dataset
from .metrics import MetricReport, cmse_per_item, default_embedder, embed, lpips_form, mse, psnr
from .restore import EladConfig, elad_restore, empirical_mmse_denoiser, guidance_gradient, linear_schedule, mmse_regressor
from .suites import synthetic_portrait
from .tensor_io import ImageTensor, SeededRng, write_image
from .toy_oracle import (
    bsc_channel,
    identity_estimator,
    mmse_value,
    random_channel,
    random_estimator,
    toy_mse,
    toy_proxmse,
    verify_bound,
    verify_prop1,
)

__all__ = ["CriterionResult", "format_report", "parallel_map", "run_all", "run_criterion"]


@dataclass(frozen=True)
class CriterionResult:
    index: int
    name: str
    passed: bool
    detail: str
    seconds: float


def parallel_map(fn: Callable, items: Sequence, jobs: int = 1) -> list:
    """Ordered map over items; jobs > 1 fans out to worker processes.

    Results come back in input order regardless of completion order, so
    any reduction over them is deterministic in the worker count.
    """
    if jobs < 1:
        raise ValueError("jobs must be >= 1")
    if jobs == 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# 1. Proxy-distortion identity on random finite channels


def _toy_suite(c: int):
    rng = SeededRng(7, (90, c))
    chan = random_channel(rng.child(0), n_x=6, n_y=7, d=3)
    ests = [random_estimator(rng.child(1 + k), chan, n_out=4 + (k % 3)) for k in range(5)]
    return chan, ests


def _c1(jobs: int) -> tuple[bool, str]:
    start = time.monotonic()
    worst = 0.0
    violations = 0
    for c in range(20):
        chan, ests = _toy_suite(c)
        rep = verify_prop1(chan, ests)
        worst = max(worst, rep.max_residual)
        violations += len(rep.violations)
    elapsed = time.monotonic() - start
    ok = violations == 0 and worst <= 1e-10 and elapsed < 5.0
    return ok, f"max residual {worst:.2e}, {violations} violations over 20 channels x 5 estimators"


# ---------------------------------------------------------------------------
# 2. Worked binary-channel numbers


def _c2(jobs: int) -> tuple[bool, str]:
    ch = bsc_channel(0.1)
    ident = identity_estimator(ch)
    m = toy_mse(ch, ident)
    d = mmse_value(ch)
    p = toy_proxmse(ch, ident)
    errs = (abs(m - 0.1), abs(d - 0.09), abs(p - 0.01))
    ok = all(e <= 1e-12 for e in errs)
    return ok, f"MSE {m:.12f}, d* {d:.12f}, ProxMSE {p:.12f} (max dev {max(errs):.1e})"


# ---------------------------------------------------------------------------
# 3. Proxy perturbation bound


def _c3(jobs: int) -> tuple[bool, str]:
    total = 0
    violations = 0
    max_ratio = 0.0
    for c in range(20):
        chan, _ = _toy_suite(c)
        est = random_estimator(SeededRng(7, (91, c)), chan, n_out=5)
        g = SeededRng(7, (92, c)).generator()
        perts = []
        for _ in range(100):
            scale = float(np.exp(g.uniform(np.log(0.01), np.log(1.0))))
            perts.append(g.uniform(-scale, scale, (chan.n_y, chan.x_alphabet.shape[1])))
        rep = verify_bound(chan, est, perts)
        total += rep.checked
        violations += len(rep.violations)
        max_ratio = max(max_ratio, rep.max_ratio)
    ok = violations == 0
    return ok, f"{violations} violations over {total} perturbations, tightest |delta|/bound {max_ratio:.3f}"


# ---------------------------------------------------------------------------
# 4. Layer-sum feature distance equals the flattened form


def _c4(jobs: int) -> tuple[bool, str]:
    emb = default_embedder()
    worst = 0.0
    for i in range(50):
        g = SeededRng(7, (93, i)).generator()
        h = int(g.integers(8, 21))
        w = int(g.integers(8, 21))
        c = int(g.choice([1, 3]))
        x = ImageTensor(g.uniform(0, 1, (h, w, c)))
        x2 = ImageTensor(g.uniform(0, 1, (h, w, c)))
        layer_sum = 0.0
        for (f, wt), (f2, _) in zip(emb.features(x), emb.features(x2)):
            d = wt * (f - f2)
            layer_sum += float(np.sum(d * d)) / (f.shape[0] * f.shape[1])
        flat = lpips_form(embed(x, emb), embed(x2, emb))
        worst = max(worst, abs(layer_sum - flat) / max(1.0, abs(flat)))
    ok = worst <= 1e-12
    return ok, f"max relative gap {worst:.2e} over 50 random feature sets"


# ---------------------------------------------------------------------------
# 5. Linear-stage adjoints


def _c5(jobs: int) -> tuple[bool, str]:
    worst = 0.0
    for i in range(20):
        g = SeededRng(7, (94, i)).generator()
        h = int(g.integers(5, 17))
        w = int(g.integers(5, 17))
        k = gaussian_kernel(float(g.uniform(0.5, 3.0)))
        u = ImageTensor(g.normal(size=(h, w, 1)))
        v = ImageTensor(g.normal(size=(h, w, 1)))
        lhs = float(np.sum(blur(u, k).data * v.data))
        rhs = float(np.sum(u.data * blur_adjoint(v, k).data))
        worst = max(worst, abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1e-30))
        s = float(g.uniform(1.0, 3.0))
        dh, dw = downsample_dims(h, w, s)
        vd = ImageTensor(g.normal(size=(dh, dw, 1)))
        lhs = float(np.sum(downsample_bilinear(u, s).data * vd.data))
        rhs = float(np.sum(u.data * downsample_adjoint(vd, s, (h, w)).data))
        worst = max(worst, abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1e-30))
    ok = worst <= 1e-6
    return ok, f"max relative inner-product gap {worst:.2e} over 20 blur + 20 downsample pairs"


# ---------------------------------------------------------------------------
# 6. Guidance gradient vs central finite differences


def _c6(jobs: int) -> tuple[bool, str]:
    worst = 0.0
    cases = [
        (1.0, 1e-6, False, False, 1),  # near-identity blur, no noise
        (0.9, 2.0, False, False, 1),
        (1.4, 4 / 3, False, False, 1),
        (0.8, 2.0, True, False, 4),  # additive noise keeps the mean affine
        (1.1, 2.0, False, True, 1),  # resized back to source dims
    ]
    for idx, (sk, s, with_noise, resize_back, m) in enumerate(cases):
        flags = ChainFlags(enable_jpeg=False, enable_noise=with_noise, resize_back=resize_back)
        a = DegradationParams(sk, max(s, 1.0), 4 / 255 if with_noise else 0.0, 90.0)
        g0 = SeededRng(7, (95, idx)).generator()
        x = ImageTensor(g0.uniform(0.2, 0.8, (8, 8, 1)))
        dh, dw = downsample_dims(8, 8, a.scale)
        if resize_back:
            dh, dw = 8, 8
        y = ImageTensor(g0.uniform(0.0, 1.0, (dh, dw, 1)))
        rng = SeededRng(7, (96, idx))

        def loss(arr):
            mu, _ = mean_measurement(ImageTensor(arr), a, flags, m, rng)
            return float(np.sum((y.data - mu.data) ** 2))

        grad = guidance_gradient(x, y, a, flags, m, rng, cov_weighted=False)
        h = 1e-5
        fd = np.zeros_like(x.data)
        for i in range(8):
            for j in range(8):
                e = np.zeros_like(x.data)
                e[i, j, 0] = h
                fd[i, j, 0] = (loss(x.data + e) - loss(x.data - e)) / (2 * h)
        worst = max(worst, float(np.abs(grad.data - fd).max() / np.abs(fd).max()))
    ok = worst <= 1e-4
    return ok, f"max relative gradient error {worst:.2e} over {len(cases)} codec-free cases"


# ---------------------------------------------------------------------------
# 7. Monte Carlo mean convergence rate


def _c7(jobs: int) -> tuple[bool, str]:
    flags = ChainFlags()
    a = DegradationParams(1.2, 2.0, 8 / 255, 70.0)
    x = synthetic_portrait(SeededRng(15000), size=32, channels=3)
    mu_ref, _ = mean_measurement(x, a, flags, 8192, SeededRng(15001))
    ms = [4, 16, 64, 256]
    errs = []
    for m in ms:
        level = []
        for r in range(6):
            mu, _ = mean_measurement(x, a, flags, m, SeededRng(15002, (m, r)))
            level.append(float(np.sqrt(((mu.data - mu_ref.data) ** 2).mean())))
        errs.append(float(np.mean(level)))
    slope = float(np.polyfit(np.log(ms), np.log(errs), 1)[0])
    ok = abs(slope + 0.5) <= 0.1
    return ok, f"log-log error slope {slope:.3f} over m in {ms}"


# ---------------------------------------------------------------------------
# 8. Codec fixed point and quality monotonicity


def _c8(jobs: int) -> tuple[bool, str]:
    flat = ImageTensor(np.full((24, 24, 3), 128.0 / 255.0))
    exact = all(
        np.array_equal(jpeg_roundtrip(flat, float(q)).data, flat.data) for q in range(1, 101)
    )
    x = synthetic_portrait(SeededRng(16000), size=64, channels=3)
    psnrs = [psnr(x, jpeg_roundtrip(x, float(q))) for q in (30, 50, 70, 90)]
    mono = all(b >= a for a, b in zip(psnrs, psnrs[1:]))
    ok = exact and mono
    vals = ", ".join(f"{v:.2f}" for v in psnrs)
    return ok, f"mid-gray bit-exact at Q=1..100: {exact}; PSNR over Q 30/50/70/90: {vals} dB"


# ---------------------------------------------------------------------------
# 9. Closed-loop parameter recovery


_FIT_FLAGS = ChainFlags()
_FIT_BOUNDS = ParamBounds(sigma_k=(0.1, 4.0), scale=(1.0, 4.0), sigma_n=(0.0, 20 / 255), quality=(30.0, 100.0))
_FIT_CFG = EstimatorConfig(bounds=_FIT_BOUNDS, grid_resolution=4, refine_iters=200, mc_samples=56, seed=0)


def _recovery_cases() -> list[tuple[int, DegradationParams]]:
    rng = np.random.default_rng(42)
    cases = []
    for i in range(30):
        if i % 4 == 3:
            scale, sn = 2.0, float(rng.uniform(2 / 255, 4.5 / 255))
        else:
            scale = float(rng.choice([1.0, 4 / 3]))
            sn = float(rng.uniform(12 / 255, 18 / 255))
        a = DegradationParams(
            sigma_k=float(rng.uniform(1.0, 2.6)),
            scale=scale,
            sigma_n=sn,
            quality=float(rng.uniform(35.0, 90.0)),
        )
        cases.append((i, a))
    return cases


def _recovery_case(case: tuple[int, DegradationParams]) -> tuple[float, float, float, bool]:
    i, a = case
    x = synthetic_portrait(SeededRng(1000 + i), size=32, channels=3)
    y = degrade(x, a, _FIT_FLAGS, SeededRng(2000 + i))
    p = fit_params_oracle(x, y, _FIT_FLAGS, _FIT_CFG).params
    noise_binds = a.sigma_n >= 5 / 255
    return (
        abs(p.sigma_n - a.sigma_n) / a.sigma_n,
        abs(p.quality - a.quality),
        abs(p.sigma_k - a.sigma_k) / a.sigma_k,
        noise_binds,
    )


def _c9(jobs: int) -> tuple[bool, str]:
    start = time.monotonic()
    rows = parallel_map(_recovery_case, _recovery_cases(), jobs)
    elapsed = time.monotonic() - start
    fails = sum(
        1
        for en, eq, ek, binds in rows
        if not ((en <= 0.10 or not binds) and eq <= 10.0 and ek <= 0.25)
    )
    worst_sn = max((en for en, _, _, binds in rows if binds), default=0.0)
    worst_q = max(eq for _, eq, _, _ in rows)
    worst_sk = max(ek for _, _, ek, _ in rows)
    ok = fails == 0 and elapsed < 120.0
    return ok, (
        f"{30 - fails}/30 within tolerance; worst sigma_n {worst_sn:.1%} (limit 10%), "
        f"Q {worst_q:.1f} (limit 10), sigma_k {worst_sk:.1%} (limit 25%)"
    )


# ---------------------------------------------------------------------------
# 10. Guided sampler beats unguided on consistency


def _prior_images() -> list[ImageTensor]:
    return [synthetic_portrait(SeededRng(3000 + j), size=32, channels=3) for j in range(32)]


def _guided_case(i: int) -> tuple[float, float, float, float]:
    sched = linear_schedule(1000)
    flags = ChainFlags()
    prior = _prior_images()
    den = empirical_mmse_denoiser(prior, sched)
    rng = np.random.default_rng(9000 + i)
    x = synthetic_portrait(SeededRng(4000 + i), size=32, channels=3)
    a = DegradationParams(
        sigma_k=float(rng.uniform(0.6, 1.6)),
        scale=float(rng.choice([1.0, 2.0])),
        sigma_n=float(rng.uniform(4 / 255, 10 / 255)),
        quality=float(rng.uniform(50.0, 90.0)),
    )
    y = degrade(x, a, flags, SeededRng(5000 + i))
    pred = ParamPrediction(params=a, objective=0.0, source="external")

    def est(img):
        return pred

    def reg(yv, pv):
        return mmse_regressor(yv, est, prior, flags, 8, SeededRng(6000 + i), prediction=pv)

    out = []
    for lam in (1e-5, 0.0):
        cfg = EladConfig(t0=200, num_steps=40, eta=0.5, lam=lam, mc_samples=8)
        xr = elad_restore(y, est, den, reg, cfg, sched, SeededRng(7000 + i), flags=flags)
        out.append(cmse_per_item([(xr, y, a)], flags, 32, SeededRng(8000 + i))[0])
        out.append(mse(x, xr))
    return tuple(out)  # cmse_guided, mse_guided, cmse_unguided, mse_unguided


def _c10(jobs: int) -> tuple[bool, str]:
    start = time.monotonic()
    rows = parallel_map(_guided_case, list(range(50)), jobs)
    elapsed = time.monotonic() - start
    wins = sum(1 for cg, _, cu, _ in rows if cg < cu)
    reductions = [(cu - cg) / cu for cg, _, cu, _ in rows]
    med_red = float(np.median(reductions))
    med_mse_g = float(np.median([mg for _, mg, _, _ in rows]))
    med_mse_u = float(np.median([mu for _, _, _, mu in rows]))
    ok = wins >= 40 and med_red >= 0.15 and med_mse_g <= med_mse_u and elapsed < 300.0
    return ok, (
        f"guided wins {wins}/50, median consistency reduction {med_red:.1%}, "
        f"median MSE {med_mse_g:.1f} guided vs {med_mse_u:.1f} unguided"
    )


# ---------------------------------------------------------------------------
# 11. Consistency metric alignment, true vs fitted parameters


_ALIGN_CFG = EstimatorConfig(bounds=_FIT_BOUNDS, grid_resolution=3, refine_iters=120, mc_samples=32, seed=0)


def _alignment_case(i: int) -> tuple[float, float]:
    flags = ChainFlags()
    rng = np.random.default_rng(11000 + i)
    x = synthetic_portrait(SeededRng(4000 + i), size=32, channels=3)
    a = DegradationParams(
        sigma_k=float(rng.uniform(1.0, 2.6)),
        scale=float(rng.choice([1.0, 4 / 3, 2.0])),
        sigma_n=float(rng.uniform(6 / 255, 18 / 255)),
        quality=float(rng.uniform(35.0, 90.0)),
    )
    y = degrade(x, a, flags, SeededRng(12000 + i))
    tau = i / 49.0
    g = SeededRng(13000 + i).generator()
    xb = blur(x, gaussian_kernel(0.6 + 2.0 * tau))
    mixed = x.data * (1 - 0.8 * tau) + xb.data * (0.8 * tau) + g.normal(0, 0.08 * tau, x.shape)
    x_hat = ImageTensor(np.clip(mixed, 0.0, 1.0))
    pred = fit_params_oracle(x, y, flags, _ALIGN_CFG)
    c_true = cmse_per_item([(x_hat, y, a)], flags, 32, SeededRng(14000 + i))[0]
    c_prox = cmse_per_item([(x_hat, y, pred.params)], flags, 32, SeededRng(14000 + i))[0]
    return c_true, c_prox


def _c11(jobs: int) -> tuple[bool, str]:
    rows = parallel_map(_alignment_case, list(range(50)), jobs)
    ct = np.array([r[0] for r in rows])
    cp = np.array([r[1] for r in rows])
    r = float(np.corrcoef(ct, cp)[0, 1])
    ok = r >= 0.9
    return ok, f"Pearson correlation {r:.4f} over 50 cases (range {ct.min():.1f}..{ct.max():.1f})"


# ---------------------------------------------------------------------------
# 12. Worker-count determinism


def _mini_restore_case(i: int) -> tuple[str, ImageTensor, float]:
    sched = linear_schedule(400)
    flags = ChainFlags()
    prior = [synthetic_portrait(SeededRng(17000 + j), size=16, channels=3) for j in range(8)]
    den = empirical_mmse_denoiser(prior, sched)
    x = synthetic_portrait(SeededRng(17100 + i), size=16, channels=3)
    a = DegradationParams(0.8, 2.0, 6 / 255, 75.0)
    y = degrade(x, a, flags, SeededRng(17200 + i))
    pred = ParamPrediction(params=a, objective=0.0, source="external")

    def est(img):
        return pred

    def reg(yv, pv):
        return mmse_regressor(yv, est, prior, flags, 4, SeededRng(17300 + i), prediction=pv)

    cfg = EladConfig(t0=80, num_steps=8, eta=0.5, lam=1e-5, mc_samples=4)
    xr = elad_restore(y, est, den, reg, cfg, sched, SeededRng(17400 + i), flags=flags)
    c = cmse_per_item([(xr, y, a)], flags, 8, SeededRng(17500 + i))[0]
    return f"case{i:02d}.irtf", xr, c


def _artifact_workload(out_dir: str, jobs: int) -> None:
    rows = parallel_map(_mini_restore_case, list(range(8)), jobs)
    os.makedirs(out_dir, exist_ok=True)
    report_rows = []
    for name, img, c in rows:
        write_image(img, os.path.join(out_dir, name), fmt="raw_f32")
        report_rows.append((name, "cmse", c))
    rep = MetricReport(rows=tuple(report_rows))
    with open(os.path.join(out_dir, "metrics.csv"), "w", encoding="ascii") as fh:
        fh.write(rep.to_csv())
    with open(os.path.join(out_dir, "metrics.json"), "w", encoding="ascii") as fh:
        fh.write(rep.to_json_summary())
    clean_dir = os.path.join(out_dir, "clean")
    os.makedirs(clean_dir, exist_ok=True)
    for j in range(4):
        write_image(
            synthetic_portrait(SeededRng(17600 + j), size=16, channels=3),
            os.path.join(clean_dir, f"clean{j}.ppm"),
        )
    params = [
        DegradationParams(1.0 + 0.1 * j, 1.0 + 0.25 * j, (2 + j) / 255, 60.0 + 5 * j)
        for j in range(6)
    ]
    model = kde_fit(params, _FIT_BOUNDS)
    synth_dataset(clean_dir, model, ChainFlags(), SeededRng(17700), os.path.join(out_dir, "synth"))


def _dirs_identical(a: str, b: str) -> bool:
    cmp = filecmp.dircmp(a, b)
    if cmp.left_only or cmp.right_only or cmp.diff_files or cmp.funny_files:
        return False
    (_, mismatch, errors) = filecmp.cmpfiles(a, b, cmp.common_files, shallow=False)
    if mismatch or errors:
        return False
    return all(_dirs_identical(os.path.join(a, d), os.path.join(b, d)) for d in cmp.common_dirs)


def _c12(jobs: int) -> tuple[bool, str]:
    with tempfile.TemporaryDirectory() as td:
        d1 = os.path.join(td, "jobs1")
        d8 = os.path.join(td, "jobs8")
        _artifact_workload(d1, jobs=1)
        _artifact_workload(d8, jobs=8)
        same = _dirs_identical(d1, d8)
        n_files = sum(len(fs) for _, _, fs in os.walk(d1))
    return same, f"jobs=1 and jobs=8 artifact trees byte-identical: {same} ({n_files} files)"


# ---------------------------------------------------------------------------
# Registry


_CRITERIA: list[tuple[int, str, Callable[[int], tuple[bool, str]]]] = [
    (1, "proxy-distortion identity on random finite channels", _c1),
    (2, "worked binary-channel numbers", _c2),
    (3, "proxy perturbation error bound", _c3),
    (4, "layer-sum feature distance equals flattened form", _c4),
    (5, "blur and downsample adjoint identities", _c5),
    (6, "guidance gradient matches finite differences", _c6),
    (7, "Monte Carlo mean error decays as m^-1/2", _c7),
    (8, "codec mid-gray fixed point and quality monotonicity", _c8),
    (9, "closed-loop degradation parameter recovery", _c9),
    (10, "guided sampling improves measurement consistency", _c10),
    (11, "consistency metric alignment under fitted parameters", _c11),
    (12, "artifacts independent of worker count", _c12),
]


def run_criterion(index: int, jobs: int = 1) -> CriterionResult:
    for idx, name, fn in _CRITERIA:
        if idx == index:
            start = time.monotonic()
            passed, detail = fn(jobs)
            return CriterionResult(idx, name, passed, detail, time.monotonic() - start)
    raise ValueError(f"no criterion {index}; valid indices are 1..{len(_CRITERIA)}")


def run_all(indices: Iterable[int] | None = None, jobs: int = 1) -> list[CriterionResult]:
    wanted = list(indices) if indices is not None else [idx for idx, _, _ in _CRITERIA]
    return [run_criterion(i, jobs) for i in wanted]


def format_report(results: Sequence[CriterionResult]) -> str:
    """Stable report: one PASS/FAIL line per criterion, no timings."""
    lines = [
        f"{'PASS' if r.passed else 'FAIL'} criterion {r.index:2d}: {r.name} -- {r.detail}"
        for r in results
    ]
    n_pass = sum(r.passed for r in results)
    lines.append(f"{n_pass}/{len(results)} criteria passed")
    return "\n".join(lines) + "\n"
