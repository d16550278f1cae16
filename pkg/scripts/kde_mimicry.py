#!/usr/bin/env python3
"""Dataset mimicry round trip: estimate, fit a KDE, synthesize, re-estimate.

Builds a pretend real-world measurement set with known parameter draws and
estimates its parameters blind, exactly as one would without sources. A
kernel density model fitted to those estimates then drives synthesis of a
fresh degraded dataset, and the same blind estimator is run on the synthetic
set. If the mimicry works, the two estimate distributions agree axis by axis
regardless of any bias in the estimator itself, since both sides are read
with the same instrument.

Example:
    python3 scripts/kde_mimicry.py --train 12 --synth 8
"""

import argparse
import time

import numpy as np

from blindkit.degrade import ChainFlags, ParamBounds, degrade, sample_params
from blindkit.estimator import estimate_blind
from blindkit.kde_synth import kde_fit, kde_sample
from blindkit.suites import synthetic_portrait
from blindkit.tensor_io import SeededRng

AXES = ("sigma_k", "scale", "sigma_n", "quality")
# Keep the pretend real-world set inside a box the desk-scale images can
# actually identify; the default range includes 32x downsampling.
STUDY_BOUNDS = ParamBounds(
    sigma_k=(0.5, 2.5), scale=(1.0, 4.0), sigma_n=(2 / 255, 12 / 255), quality=(40.0, 100.0)
)


def blind_read(y, size, flags):
    return estimate_blind(y, flags, source_size=size, bounds=STUDY_BOUNDS).params


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--train", type=int, default=12, help="size of the pretend real-world set")
    ap.add_argument("--synth", type=int, default=8, help="synthetic measurements to generate and re-estimate")
    ap.add_argument("--size", type=int, default=48, help="clean image side length")
    ap.add_argument("--seed", type=int, default=11, help="base seed")
    ap.add_argument(
        "--jpeg",
        action="store_true",
        help="include the codec stage; its smoothing biases the noise head "
        "downward twice (once per read), which the gap column then shows",
    )
    args = ap.parse_args()
    flags = ChainFlags(enable_jpeg=args.jpeg)

    t_start = time.time()
    rng = SeededRng(args.seed)

    # Stage 1: blind estimates of the real-world stand-in.
    truths, real_est = [], []
    for i in range(args.train):
        case = rng.child(i)
        a = sample_params(case.child(0), STUDY_BOUNDS)
        x = synthetic_portrait(case.child(1), args.size, 3)
        y = degrade(x, a, flags, case.child(2))
        truths.append(a)
        real_est.append(blind_read(y, args.size, flags))
    model = kde_fit(real_est, STUDY_BOUNDS)
    print(f"fitted KDE on {args.train} blind estimates, bandwidths "
          + "[" + ", ".join(f"{b:.4f}" for b in model.bandwidths) + "]")

    # Stage 2: synthesize from the model, read the synthetic set the same way.
    synth_rng = SeededRng(args.seed + 1)
    draws = kde_sample(model, args.synth, synth_rng.child(0))
    synth_est = []
    for j, a in enumerate(draws):
        case = synth_rng.child(1 + j)
        x = synthetic_portrait(case.child(0), args.size, 3)
        y = degrade(x, a, flags, case.child(1))
        synth_est.append(blind_read(y, args.size, flags))

    print(f"\n{'axis':>8} {'truth mean':>11} {'real est':>11} {'synth est':>11} {'mimicry gap':>12}")
    for axis in AXES:
        t_mean = float(np.mean([getattr(a, axis) for a in truths]))
        r_mean = float(np.mean([getattr(a, axis) for a in real_est]))
        s_mean = float(np.mean([getattr(a, axis) for a in synth_est]))
        gap = abs(s_mean - r_mean) / r_mean
        print(f"{axis:>8} {t_mean:>11.4f} {r_mean:>11.4f} {s_mean:>11.4f} {gap:>11.1%}")
    print("\nmimicry gap compares the same blind estimator on both sets, so")
    print("estimator bias cancels; small gaps mean the synthetic set is")
    print("indistinguishable from the real one to this instrument.")
    print(f"wall time {time.time() - t_start:.2f}s")


if __name__ == "__main__":
    main()
