"""Command-line surface for every pipeline stage.

One subcommand per stage: degrade a clean image, synthesize mimicking
datasets, fit and sample parameter KDEs, estimate degradations, compute
expected measurements, score metric batches, run the guided restoration
sampler, verify the toy-world identities, and run the full acceptance
selftest. Every run prints its resolved configuration and seed; given
the same flags and seed the outputs are byte-identical, whatever
`--jobs` says.

Exit codes: 0 success, 1 validation error (bad flags, unreadable files,
inconsistent inputs), 2 verification or acceptance failure. Errors are
written to stderr prefixed with `ERROR:`.
"""

from __future__ import annotations

import argparse
import csv
import functools
import json
import os
import sys

import numpy as np

from . import acceptance
from .degrade import (
    DEFAULT_BOUNDS,
    ChainFlags,
    DegradationParams,
    ParamBounds,
    degrade,
    mean_measurement,
    read_sidecar,
    write_sidecar,
)
from .estimator import (
    EstimatorConfig,
    FitError,
    ParamPrediction,
    estimate_blind,
    fit_params_oracle,
    load_external_params,
)
from .kde_synth import KdeModel, kde_fit, kde_sample, synth_dataset
from .metrics import MetricReport, cmse_per_item, mse, proxmse, psnr
from .restore import (
    EladConfig,
    elad_restore,
    empirical_mmse_denoiser,
    linear_schedule,
    load_elad_config,
    mmse_regressor,
)
from .tensor_io import FormatError, ImageTensor, SeededRng, read_image, write_image
from .toy_oracle import random_channel, random_estimator, verify_bound, verify_prop1

__all__ = ["main", "run"]


class _Parser(argparse.ArgumentParser):
    """argparse that reports validation failures with exit code 1."""

    def error(self, message):
        raise _UsageError(message)


class _UsageError(ValueError):
    pass


def _print_config(args: argparse.Namespace) -> None:
    skip = {"func", "command"}
    pairs = [f"{k}={v!r}" for k, v in sorted(vars(args).items()) if k not in skip]
    print(f"config[{args.command}]: " + " ".join(pairs))


def _add_chain_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--no-blur", action="store_true", help="disable the blur stage")
    p.add_argument("--no-downsample", action="store_true", help="disable downsampling")
    p.add_argument("--no-noise", action="store_true", help="disable additive noise")
    p.add_argument("--no-jpeg", action="store_true", help="disable the codec stage")
    p.add_argument("--resize-back", action="store_true", help="resize the measurement back to source dims")


def _chain_flags(args: argparse.Namespace) -> ChainFlags:
    return ChainFlags(
        enable_blur=not args.no_blur,
        enable_downsample=not args.no_downsample,
        enable_noise=not args.no_noise,
        enable_jpeg=not args.no_jpeg,
        resize_back=args.resize_back,
    )


def _add_param_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--sigma-k", type=float, required=True, help="blur kernel width (sampling default range 0.1..15)")
    p.add_argument("--scale", type=float, required=True, help="downsample factor >= 1 (default range 1..32)")
    p.add_argument("--sigma-n", type=float, required=True, help="noise std in [0,1] units (default range 0..0.0784)")
    p.add_argument("--quality", type=float, required=True, help="codec quality in [1,100] (default range 30..100)")


def _add_bounds_flags(p: argparse.ArgumentParser) -> None:
    b = DEFAULT_BOUNDS
    p.add_argument("--sigma-k-min", type=float, default=b.sigma_k[0], help=f"lower sigma_k bound (default {b.sigma_k[0]})")
    p.add_argument("--sigma-k-max", type=float, default=b.sigma_k[1], help=f"upper sigma_k bound (default {b.sigma_k[1]})")
    p.add_argument("--scale-min", type=float, default=b.scale[0], help=f"lower scale bound (default {b.scale[0]})")
    p.add_argument("--scale-max", type=float, default=b.scale[1], help=f"upper scale bound (default {b.scale[1]})")
    p.add_argument("--sigma-n-min", type=float, default=b.sigma_n[0], help=f"lower sigma_n bound (default {b.sigma_n[0]})")
    p.add_argument("--sigma-n-max", type=float, default=b.sigma_n[1], help=f"upper sigma_n bound (default {b.sigma_n[1]:.4f})")
    p.add_argument("--quality-min", type=float, default=b.quality[0], help=f"lower quality bound (default {b.quality[0]})")
    p.add_argument("--quality-max", type=float, default=b.quality[1], help=f"upper quality bound (default {b.quality[1]})")


def _bounds(args: argparse.Namespace) -> ParamBounds:
    return ParamBounds(
        sigma_k=(args.sigma_k_min, args.sigma_k_max),
        scale=(args.scale_min, args.scale_max),
        sigma_n=(args.sigma_n_min, args.sigma_n_max),
        quality=(args.quality_min, args.quality_max),
    )


# ---------------------------------------------------------------------------
# Subcommands


def _cmd_degrade(args) -> int:
    x = read_image(args.in_path)
    a = DegradationParams(args.sigma_k, args.scale, args.sigma_n, args.quality)
    y = degrade(x, a, _chain_flags(args), SeededRng(args.seed))
    write_image(y, args.out)
    name = os.path.basename(args.out)
    write_sidecar([(name, a)], args.out + ".params.txt")
    print(f"wrote {args.out} ({y.height}x{y.width}x{y.channels}) and {args.out}.params.txt")
    return 0


def _cmd_synth(args) -> int:
    with open(args.model, "r", encoding="ascii") as fh:
        model = KdeModel.from_json(fh.read())
    rows = synth_dataset(args.clean_dir, model, _chain_flags(args), SeededRng(args.seed), args.out_dir)
    print(f"synthesized {len(rows)} measurements into {args.out_dir} (manifest.csv, params.txt)")
    return 0


def _cmd_kde_fit(args) -> int:
    entries = read_sidecar(args.params)
    if not entries:
        raise ValueError(f"no parameter lines in {args.params}")
    model = kde_fit(list(entries.values()), _bounds(args))
    with open(args.out, "w", encoding="ascii") as fh:
        fh.write(model.to_json())
    bw = ", ".join(f"{v:.4f}" for v in model.bandwidths)
    print(f"fitted KDE over {model.n_samples} samples, normalized bandwidths [{bw}] -> {args.out}")
    return 0


def _cmd_kde_sample(args) -> int:
    with open(args.model, "r", encoding="ascii") as fh:
        model = KdeModel.from_json(fh.read())
    draws = kde_sample(model, args.n, SeededRng(args.seed))
    entries = [(f"sample{i:04d}", a) for i, a in enumerate(draws)]
    if args.out:
        write_sidecar(entries, args.out)
        print(f"wrote {len(draws)} draws to {args.out}")
    else:
        for name, a in entries:
            print(f"{name} {a.sigma_k!r} {a.scale!r} {a.sigma_n!r} {a.quality!r}")
    return 0


def _prediction_json(pred: ParamPrediction) -> str:
    return json.dumps(
        {
            "sigma_k": pred.params.sigma_k,
            "scale": pred.params.scale,
            "sigma_n": pred.params.sigma_n,
            "quality": pred.params.quality,
            "objective": pred.objective,
            "source": pred.source,
        },
        sort_keys=True,
    )


def _cmd_estimate(args) -> int:
    y = read_image(args.in_path)
    flags = _chain_flags(args)
    if args.mode == "blind":
        pred = estimate_blind(y, flags, bounds=_bounds(args))
    elif args.mode == "oracle":
        if not args.source:
            raise ValueError("--mode oracle requires --source (the clean image)")
        x = read_image(args.source)
        cfg = EstimatorConfig(
            bounds=_bounds(args),
            grid_resolution=args.grid_resolution,
            refine_iters=args.refine_iters,
            mc_samples=args.mc_samples,
            seed=args.seed,
        )
        pred = fit_params_oracle(x, y, flags, cfg)
    else:  # external
        if not args.params:
            raise ValueError("--mode external requires --params (a sidecar file)")
        pred = _external_entry(args.params, args.name or os.path.basename(args.in_path))
    print(_prediction_json(pred))
    return 0


def _external_entry(path: str, name: str) -> ParamPrediction:
    preds = load_external_params(path)
    if name not in preds:
        raise ValueError(f"no entry named {name!r} in {path}")
    return preds[name]


def _cmd_mean(args) -> int:
    x = read_image(args.in_path)
    a = DegradationParams(args.sigma_k, args.scale, args.sigma_n, args.quality)
    mu, sd = mean_measurement(x, a, _chain_flags(args), args.m, SeededRng(args.seed))
    write_image(mu, args.out)
    print(f"wrote expected measurement {args.out} ({mu.height}x{mu.width}x{mu.channels}, m={args.m})")
    if args.std_out:
        write_image(sd, args.std_out)
        print(f"wrote per-pixel std {args.std_out}")
    return 0


_METRIC_CHOICES = ("mse", "psnr", "proxmse", "cmse", "proxcmse")


def _read_manifest(path: str) -> list[dict]:
    base = os.path.dirname(os.path.abspath(path))
    rows = []
    with open(path, "r", encoding="ascii", newline="") as fh:
        for row in csv.DictReader(fh):
            row = {k.strip(): v.strip() for k, v in row.items() if k is not None}
            row["_base"] = base
            rows.append(row)
    if not rows:
        raise ValueError(f"manifest {path} has no rows")
    return rows


def _metric_row(row: dict, which: tuple[str, ...], m: int, seed: int, fit_cfg: EstimatorConfig, flags: ChainFlags) -> list[tuple[str, str, float]]:
    def img(key):
        if not row.get(key):
            raise ValueError(f"item {row.get('item', '?')}: metric needs column {key!r}")
        return read_image(os.path.join(row["_base"], row[key]))

    item = row.get("item") or row.get("x_hat", "?")
    out = []
    x_hat = img("x_hat")
    if "mse" in which or "psnr" in which or "proxmse" in which:
        ref = img("x_ref")
        if "mse" in which:
            out.append((item, "mse", mse(ref, x_hat)))
        if "psnr" in which:
            out.append((item, "psnr", psnr(ref, x_hat)))
        if "proxmse" in which:
            out.append((item, "proxmse", proxmse(x_hat, ref)))
    if "cmse" in which or "proxcmse" in which:
        y = img("y")
        rng = SeededRng(seed, (1,))
        if "cmse" in which:
            try:
                a = DegradationParams(
                    float(row["sigma_k"]), float(row["scale"]), float(row["sigma_n"]), float(row["quality"])
                )
            except (KeyError, TypeError, ValueError):
                raise ValueError(f"item {item}: cmse needs sigma_k,scale,sigma_n,quality columns") from None
            out.append((item, "cmse", cmse_per_item([(x_hat, y, a)], flags, m, rng)[0]))
        if "proxcmse" in which:
            src = img("x_ref")
            pred = fit_params_oracle(src, y, flags, fit_cfg)
            out.append((item, "proxcmse", cmse_per_item([(x_hat, y, pred.params)], flags, m, rng)[0]))
    return out


def _cmd_metrics(args) -> int:
    which = tuple(w.strip() for w in args.which.split(",") if w.strip())
    for w in which:
        if w not in _METRIC_CHOICES:
            raise ValueError(f"unknown metric {w!r}; choose from {', '.join(_METRIC_CHOICES)}")
    rows = _read_manifest(args.pairs)
    fit_cfg = EstimatorConfig(
        bounds=_bounds(args),
        grid_resolution=args.grid_resolution,
        refine_iters=args.refine_iters,
        mc_samples=args.mc_samples,
        seed=args.seed,
    )
    flags = _chain_flags(args)
    worker = functools.partial(_metric_row, which=which, m=args.m, seed=args.seed, fit_cfg=fit_cfg, flags=flags)
    per_item = acceptance.parallel_map(worker, rows, args.jobs)
    report = MetricReport(rows=tuple(r for chunk in per_item for r in chunk))
    csv_path = args.out_prefix + ".csv"
    json_path = args.out_prefix + ".json"
    with open(csv_path, "w", encoding="ascii") as fh:
        fh.write(report.to_csv())
    with open(json_path, "w", encoding="ascii") as fh:
        fh.write(report.to_json_summary())
    print(report.to_json_summary())
    print(f"wrote {csv_path} and {json_path}")
    return 0


def _load_dataset_dir(path: str) -> list[ImageTensor]:
    names = sorted(f for f in os.listdir(path) if os.path.isfile(os.path.join(path, f)))
    imgs = []
    for n in names:
        try:
            imgs.append(read_image(os.path.join(path, n)))
        except FormatError:
            continue
    if not imgs:
        raise ValueError(f"no readable images in {path}")
    return imgs


def _cmd_elad(args) -> int:
    y = read_image(args.in_path)
    flags = _chain_flags(args)
    cfg = load_elad_config(args.config) if args.config else EladConfig()
    overrides = {}
    for field, flag in (
        ("t0", args.t0),
        ("num_steps", args.num_steps),
        ("eta", args.eta),
        ("lam", getattr(args, "lambda")),
        ("mc_samples", args.mc_samples),
        ("clamp", args.clamp),
        ("std_floor", args.std_floor),
    ):
        if flag is not None:
            overrides[field] = flag
    if args.cov_weighted is not None:
        overrides["cov_weighted"] = args.cov_weighted == "true"
    if overrides:
        from dataclasses import replace

        cfg = replace(cfg, **overrides)
    dataset = _load_dataset_dir(args.dataset_dir) if args.dataset_dir else None
    sched = linear_schedule(args.schedule_steps)
    rng = SeededRng(args.seed)

    if args.estimator == "external":
        if not args.params:
            raise ValueError("--estimator external requires --params")
        pred0 = _external_entry(args.params, args.name or os.path.basename(args.in_path))

        def estimator(img):
            return pred0

    elif args.estimator == "oracle":
        if not args.source:
            raise ValueError("--estimator oracle requires --source")
        x_src = read_image(args.source)
        fit_cfg = EstimatorConfig(bounds=_bounds(args), seed=args.seed)

        def estimator(img):
            return fit_params_oracle(x_src, img, flags, fit_cfg)

    else:

        def estimator(img):
            return estimate_blind(img, flags, bounds=_bounds(args))

    if dataset is not None:
        den = empirical_mmse_denoiser(dataset, sched)
    else:
        raise ValueError("--dataset-dir is required (empirical prior images)")

    def regressor(yv, pred):
        return mmse_regressor(yv, estimator, dataset, flags, cfg.mc_samples, rng.child(9), std_floor=cfg.std_floor, prediction=pred)

    out = elad_restore(y, estimator, den, regressor, cfg, sched, rng, flags=flags)
    write_image(out, args.out)
    print(f"wrote restored image {args.out} ({out.height}x{out.width}x{out.channels})")
    if args.raw_out:
        write_image(out, args.raw_out, fmt="raw_f32")
        print(f"wrote raw float copy {args.raw_out}")
    return 0


def _cmd_verify_prop1(args) -> int:
    worst = 0.0
    violations = []
    for c in range(args.channels):
        rng = SeededRng(args.seed, (c,))
        chan = random_channel(rng.child(0), n_x=6, n_y=7, d=3)
        ests = [random_estimator(rng.child(1 + k), chan, n_out=4 + (k % 3)) for k in range(args.estimators)]
        rep = verify_prop1(chan, ests)
        worst = max(worst, rep.max_residual)
        violations.extend(f"channel {c}: {v}" for v in rep.violations)
    print(f"checked {args.channels} channels x {args.estimators} estimators: max residual {worst:.3e}")
    if violations:
        for v in violations:
            print(f"VIOLATION {v}")
        return 2
    print("identity and rankings hold on every channel")
    return 0


def _cmd_verify_bound(args) -> int:
    total = 0
    max_ratio = 0.0
    violations = []
    for c in range(args.channels):
        rng = SeededRng(args.seed, (c,))
        chan = random_channel(rng.child(0), n_x=6, n_y=7, d=3)
        est = random_estimator(rng.child(1), chan, n_out=5)
        g = rng.child(2).generator()
        perts = []
        for _ in range(args.perturbations):
            scale = float(np.exp(g.uniform(np.log(0.01), np.log(1.0))))
            perts.append(g.uniform(-scale, scale, (chan.n_y, chan.x_alphabet.shape[1])))
        rep = verify_bound(chan, est, perts)
        total += rep.checked
        max_ratio = max(max_ratio, rep.max_ratio)
        violations.extend(f"channel {c}: {v}" for v in rep.violations)
    print(f"checked {total} perturbations over {args.channels} channels: tightest |delta|/bound {max_ratio:.3f}")
    if violations:
        for v in violations:
            print(f"VIOLATION {v}")
        return 2
    print("perturbation bound holds everywhere")
    return 0


def _cmd_selftest(args) -> int:
    indices = None
    if args.criteria:
        indices = [int(tok) for tok in args.criteria.split(",") if tok.strip()]
    results = []
    for idx in indices or [i for i, _, _ in acceptance._CRITERIA]:
        r = acceptance.run_criterion(idx, jobs=args.jobs)
        status = "PASS" if r.passed else "FAIL"
        print(f"{status} criterion {r.index:2d}: {r.name} -- {r.detail} [{r.seconds:.1f}s]")
        results.append(r)
    report = acceptance.format_report(results)
    if args.out:
        with open(args.out, "w", encoding="ascii") as fh:
            fh.write(report)
        print(f"report written to {args.out}")
    n_fail = sum(not r.passed for r in results)
    print(f"{len(results) - n_fail}/{len(results)} criteria passed")
    return 2 if n_fail else 0


# ---------------------------------------------------------------------------
# Parser assembly


def _build_parser() -> _Parser:
    p = _Parser(prog="blindkit", description=__doc__, formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("degrade", help="run the degradation chain on one image")
    d.add_argument("--in", dest="in_path", required=True, help="clean input image (pgm/ppm/irtf)")
    _add_param_flags(d)
    d.add_argument("--seed", type=int, default=0, help="noise stream seed")
    d.add_argument("--out", required=True, help="output measurement path")
    _add_chain_flags(d)
    d.set_defaults(func=_cmd_degrade)

    s = sub.add_parser("synth", help="synthesize a mimicking dataset from a KDE model")
    s.add_argument("--clean-dir", required=True, help="directory of clean images")
    s.add_argument("--model", required=True, help="KDE model JSON from kde-fit")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out-dir", required=True)
    _add_chain_flags(s)
    s.set_defaults(func=_cmd_synth)

    kf = sub.add_parser("kde-fit", help="fit a KDE over degradation parameters")
    kf.add_argument("--params", required=True, help="sidecar file: name sigma_k scale sigma_n quality")
    kf.add_argument("--out", required=True, help="output model JSON")
    _add_bounds_flags(kf)
    kf.set_defaults(func=_cmd_kde_fit)

    ks = sub.add_parser("kde-sample", help="draw parameter vectors from a fitted KDE")
    ks.add_argument("--model", required=True)
    ks.add_argument("--n", type=int, required=True, help="number of draws")
    ks.add_argument("--seed", type=int, default=0)
    ks.add_argument("--out", help="optional sidecar output; prints to stdout otherwise")
    ks.set_defaults(func=_cmd_kde_sample)

    e = sub.add_parser("estimate", help="estimate degradation parameters for a measurement")
    e.add_argument("--in", dest="in_path", required=True, help="measurement image")
    e.add_argument("--mode", choices=("blind", "oracle", "external"), default="blind")
    e.add_argument("--source", help="clean source image (oracle mode)")
    e.add_argument("--params", help="sidecar file (external mode)")
    e.add_argument("--name", help="sidecar entry name (default: measurement basename)")
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--grid-resolution", type=int, default=4, help="coarse grid points per free axis")
    e.add_argument("--refine-iters", type=int, default=200, help="simplex refinement iterations")
    e.add_argument("--mc-samples", type=int, default=32, help="Monte Carlo passes per candidate")
    _add_bounds_flags(e)
    _add_chain_flags(e)
    e.set_defaults(func=_cmd_estimate)

    mn = sub.add_parser("mean", help="Monte Carlo expected measurement for fixed parameters")
    mn.add_argument("--in", dest="in_path", required=True)
    _add_param_flags(mn)
    mn.add_argument("--m", type=int, default=64, help="Monte Carlo sample count")
    mn.add_argument("--seed", type=int, default=0)
    mn.add_argument("--out", required=True)
    mn.add_argument("--std-out", help="optional per-pixel std output")
    _add_chain_flags(mn)
    mn.set_defaults(func=_cmd_mean)

    mt = sub.add_parser("metrics", help="score a manifest of items and summarize")
    mt.add_argument("--pairs", required=True, help="CSV manifest: item,x_hat,x_ref,y,sigma_k,scale,sigma_n,quality")
    mt.add_argument("--which", required=True, help=f"comma list from {{{','.join(_METRIC_CHOICES)}}}")
    mt.add_argument("--m", type=int, default=32, help="Monte Carlo passes for consistency metrics")
    mt.add_argument("--seed", type=int, default=0)
    mt.add_argument("--jobs", type=int, default=1, help="worker processes (outputs independent of this)")
    mt.add_argument("--out-prefix", default="metrics", help="output prefix for .csv and .json")
    mt.add_argument("--grid-resolution", type=int, default=3, help="fit grid for proxcmse")
    mt.add_argument("--refine-iters", type=int, default=120)
    mt.add_argument("--mc-samples", type=int, default=32)
    _add_bounds_flags(mt)
    _add_chain_flags(mt)
    mt.set_defaults(func=_cmd_metrics)

    el = sub.add_parser("elad", help="guided diffusion restoration of one measurement")
    el.add_argument("--in", dest="in_path", required=True, help="measurement image")
    el.add_argument(
        "--dataset-dir", required=True, help="directory of prior images at the clean source resolution"
    )
    el.add_argument("--out", required=True, help="restored image output")
    el.add_argument("--raw-out", help="optional raw float32 copy of the output")
    el.add_argument("--config", help="key=value config file (t0, num_steps, eta, lambda, ...)")
    el.add_argument("--estimator", choices=("blind", "oracle", "external"), default="blind")
    el.add_argument("--source", help="clean source for --estimator oracle")
    el.add_argument("--params", help="sidecar for --estimator external")
    el.add_argument("--name", help="sidecar entry name (default: measurement basename)")
    el.add_argument("--seed", type=int, default=0)
    el.add_argument("--schedule-steps", type=int, default=1000, help="diffusion schedule length T")
    el.add_argument("--t0", type=int, help="override: start timestep")
    el.add_argument("--num-steps", type=int, help="override: denoising steps")
    el.add_argument("--eta", type=float, help="override: DDIM noise coefficient")
    el.add_argument("--lambda", type=float, help="override: guidance constant")
    el.add_argument("--mc-samples", type=int, help="override: Monte Carlo passes per step")
    el.add_argument("--clamp", type=float, help="override: gradient clamp magnitude")
    el.add_argument("--cov-weighted", choices=("true", "false"), help="override: whiten residual by per-pixel variance")
    el.add_argument("--std-floor", type=float, help="override: lower bound on std estimates")
    _add_bounds_flags(el)
    _add_chain_flags(el)
    el.set_defaults(func=_cmd_elad)

    v1 = sub.add_parser("verify-prop1", help="check the exact proxy-distortion identity on random channels")
    v1.add_argument("--channels", type=int, default=20)
    v1.add_argument("--estimators", type=int, default=5)
    v1.add_argument("--seed", type=int, default=1)
    v1.set_defaults(func=_cmd_verify_prop1)

    vb = sub.add_parser("verify-bound", help="check the proxy perturbation bound on random channels")
    vb.add_argument("--channels", type=int, default=20)
    vb.add_argument("--perturbations", type=int, default=100)
    vb.add_argument("--seed", type=int, default=1)
    vb.set_defaults(func=_cmd_verify_bound)

    st = sub.add_parser("selftest", help="run the acceptance suite (exit 2 on any failure)")
    st.add_argument("--criteria", help="comma list of criterion indices (default: all)")
    st.add_argument("--jobs", type=int, default=1, help="worker processes (outputs independent of this)")
    st.add_argument("--out", help="write the stable PASS/FAIL report to this file")
    st.set_defaults(func=_cmd_selftest)

    return p


def run(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        _print_config(args)
        return args.func(args)
    except _UsageError as exc:
        print(f"ERROR: {exc}", file=sys.stderr)
        return 1
    except (ValueError, FitError, FormatError, OSError) as exc:
        print(f"ERROR: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
