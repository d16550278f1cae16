"""Kernel density mimicry of degradation parameter populations.

Fits a product (diagonal bandwidth) Gaussian KDE over a set of
degradation parameter predictions, normalized per axis to [0, 1] by the
sampling bounds, and draws new parameter vectors from it to synthesize
datasets whose degradations follow the same distribution. Bandwidths use
Scott's rule h_j = sigma_j * n^(-1/8) (d = 4 axes), floored at 1e-3 in
normalized units so a degenerate sample set still yields a proper
density. Draws that land outside [0, 1] are reflected back inside, which
keeps probability mass near hard bounds instead of piling it up on them.

`synth_dataset` walks a directory of clean images, draws one parameter
vector per image, runs the degradation chain, and writes measurements
plus a sidecar and a CSV manifest. Per-image randomness comes from child
streams indexed by position in the sorted listing, so reruns with the
same seed are byte-identical and parallel workers cannot interleave.
"""

from __future__ import annotations

import json
import os
import warnings
from dataclasses import dataclass

import numpy as np

from .degrade import DEFAULT_BOUNDS, ChainFlags, DegradationParams, ParamBounds, degrade, write_sidecar
from .tensor_io import FormatError, SeededRng, read_image, write_image

__all__ = [
    "KdeModel",
    "kde_fit",
    "kde_sample",
    "sample_normalized",
    "synth_dataset",
]

_BW_FLOOR = 1e-3
_AXIS_NAMES = ("sigma_k", "scale", "sigma_n", "quality")


def _bounds_arrays(bounds: ParamBounds) -> tuple[np.ndarray, np.ndarray]:
    d = bounds.as_dict()
    lo = np.array([d[k][0] for k in _AXIS_NAMES], dtype=np.float64)
    hi = np.array([d[k][1] for k in _AXIS_NAMES], dtype=np.float64)
    return lo, hi


@dataclass(frozen=True)
class KdeModel:
    """Product-kernel KDE over normalized degradation parameters.

    `samples` holds the fitted points mapped per axis to [0, 1] by
    `bounds`; `bandwidths` are the per-axis Gaussian kernel widths in the
    same normalized units.
    """

    samples: np.ndarray  # (n, 4) in [0, 1]
    bandwidths: np.ndarray  # (4,) positive
    bounds: ParamBounds

    def __post_init__(self):
        object.__setattr__(self, "samples", np.asarray(self.samples, dtype=np.float64))
        object.__setattr__(self, "bandwidths", np.asarray(self.bandwidths, dtype=np.float64))
        if self.samples.ndim != 2 or self.samples.shape[1] != 4:
            raise ValueError("samples must be (n, 4)")
        if self.samples.shape[0] < 1:
            raise ValueError("KDE needs at least one sample")
        if np.any(self.samples < 0.0) or np.any(self.samples > 1.0):
            raise ValueError("normalized samples must lie within the bounds")
        if self.bandwidths.shape != (4,) or np.any(self.bandwidths <= 0.0):
            raise ValueError("bandwidths must be 4 positive reals")
        self.samples.setflags(write=False)
        self.bandwidths.setflags(write=False)

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]

    def denormalize(self, u: np.ndarray) -> np.ndarray:
        lo, hi = _bounds_arrays(self.bounds)
        return lo + np.asarray(u) * (hi - lo)

    def to_json(self) -> str:
        return json.dumps(
            {
                "samples": self.samples.tolist(),
                "bandwidths": self.bandwidths.tolist(),
                "bounds": {k: list(v) for k, v in self.bounds.as_dict().items()},
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "KdeModel":
        d = json.loads(text)
        b = d["bounds"]
        bounds = ParamBounds(**{k: tuple(b[k]) for k in _AXIS_NAMES})
        return cls(samples=np.array(d["samples"]), bandwidths=np.array(d["bandwidths"]), bounds=bounds)


def kde_fit(params: list[DegradationParams], bounds: ParamBounds = DEFAULT_BOUNDS) -> KdeModel:
    """Fit the per-axis Gaussian KDE; Scott bandwidths floored at 1e-3."""
    if not params:
        raise ValueError("KDE fit needs at least one parameter sample")
    lo, hi = _bounds_arrays(bounds)
    raw = np.array([p.as_tuple() for p in params], dtype=np.float64)
    norm = (raw - lo) / (hi - lo)
    if np.any(norm < -1e-12) or np.any(norm > 1.0 + 1e-12):
        bad = int(np.argmax(np.any((norm < -1e-12) | (norm > 1.0 + 1e-12), axis=1)))
        raise ValueError(f"sample {bad} lies outside the bounds: {params[bad]}")
    norm = np.clip(norm, 0.0, 1.0)
    n = norm.shape[0]
    sig = norm.std(axis=0, ddof=1) if n > 1 else np.zeros(4)
    bw = np.maximum(sig * n ** (-1.0 / 8.0), _BW_FLOOR)
    return KdeModel(samples=norm, bandwidths=bw, bounds=bounds)


def _fold_unit(v: np.ndarray) -> np.ndarray:
    """Reflect values into [0, 1] (triangular fold with period 2)."""
    w = np.mod(np.abs(v), 2.0)
    return np.where(w > 1.0, 2.0 - w, w)


def sample_normalized(model: KdeModel, n: int, rng: SeededRng) -> tuple[np.ndarray, np.ndarray]:
    """Draw (raw, folded) normalized samples; raw may exceed [0, 1].

    Exposing the pre-reflection draws lets callers check the accounting
    identity: exactly the rows with any coordinate outside [0, 1] change
    under folding.
    """
    if n < 1:
        raise ValueError("need n >= 1 draws")
    g = rng.generator()
    idx = g.integers(0, model.n_samples, size=n)
    raw = model.samples[idx] + g.normal(size=(n, 4)) * model.bandwidths[None, :]
    return raw, _fold_unit(raw)


def kde_sample(model: KdeModel, n: int, rng: SeededRng) -> list[DegradationParams]:
    """Draw n parameter vectors: uniform atom, Gaussian jitter, reflect."""
    _, folded = sample_normalized(model, n, rng)
    denorm = model.denormalize(folded)
    return [DegradationParams(*row) for row in denorm]


# ---------------------------------------------------------------------------
# Dataset synthesis


def _list_clean(clean_dir: str) -> list[str]:
    names = sorted(
        f for f in os.listdir(clean_dir) if os.path.isfile(os.path.join(clean_dir, f))
    )
    if not names:
        raise ValueError(f"no files in clean directory {clean_dir}")
    return names


def synth_dataset(
    clean_dir,
    model: KdeModel,
    flags: ChainFlags,
    rng: SeededRng,
    out_dir,
) -> list[tuple[str, DegradationParams, int]]:
    """Degrade every readable image in clean_dir with KDE-drawn params.

    Outputs per image: `<stem>.irtf` measurement (raw float32) in
    out_dir, a `params.txt` sidecar, and `manifest.csv` with columns
    `name,sigma_k,scale,sigma_n,quality,seed` where seed is the child
    stream index. Unreadable files are skipped with a warning and noted
    as comment lines at the end of the manifest. Returns the manifest
    rows.
    """
    clean_dir = str(clean_dir)
    out_dir = str(out_dir)
    names = _list_clean(clean_dir)
    os.makedirs(out_dir, exist_ok=True)
    rows: list[tuple[str, DegradationParams, int]] = []
    skipped: list[str] = []
    for i, name in enumerate(names):
        child = rng.child(i)
        try:
            x = read_image(os.path.join(clean_dir, name))
        except (FormatError, OSError) as exc:
            warnings.warn(f"skipping unreadable image {name}: {exc}", stacklevel=2)
            skipped.append(f"# skipped {name}: {exc}")
            continue
        a = kde_sample(model, 1, child.child(0))[0]
        y = degrade(x, a, flags, child.child(1))
        stem = name.rsplit(".", 1)[0] if "." in name else name
        out_name = stem + ".irtf"
        write_image(y, os.path.join(out_dir, out_name), fmt="raw_f32")
        rows.append((out_name, a, i))
    write_sidecar([(name, a) for name, a, _ in rows], os.path.join(out_dir, "params.txt"))
    lines = ["name,sigma_k,scale,sigma_n,quality,seed\n"]
    for name, a, seed in rows:
        lines.append(f"{name},{a.sigma_k!r},{a.scale!r},{a.sigma_n!r},{a.quality!r},{seed}\n")
    lines.extend(s + "\n" for s in skipped)
    with open(os.path.join(out_dir, "manifest.csv"), "w", encoding="ascii") as fh:
        fh.writelines(lines)
    return rows
