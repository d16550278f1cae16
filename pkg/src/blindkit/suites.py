"""Deterministic synthetic images and desk-scale experiment suites.

Nothing here depends on external data: face-like portraits are composed
from ellipses, blobs, gradients, and low-frequency texture driven by a
SeededRng, which gives the estimation and restoration suites realistic
enough spectra (smooth regions, edges, saturated highlights, dark
features) while staying fully reproducible.
"""

from __future__ import annotations

import numpy as np

from .tensor_io import ImageTensor, SeededRng

__all__ = ["synthetic_portrait", "synthetic_texture"]


def synthetic_portrait(rng: SeededRng, size: int = 32, channels: int = 3) -> ImageTensor:
    """A face-like test image: head ellipse, eyes, mouth, highlight, texture.

    Includes saturated-bright and near-black content on purpose; both ends
    of the dynamic range matter when identifying noise through the clipping
    and quantization stages.
    """
    g = rng.generator()
    h = w = int(size)
    yy, xx = np.mgrid[0:h, 0:w] / max(size - 1, 1)

    theta = g.uniform(0.0, 2.0 * np.pi)
    ramp = np.cos(theta) * xx + np.sin(theta) * yy
    ramp = (ramp - ramp.min()) / max(ramp.max() - ramp.min(), 1e-9)
    lo, hi = g.uniform(0.03, 0.3), g.uniform(0.55, 0.95)
    img = lo + (hi - lo) * ramp

    cx, cy = g.uniform(0.42, 0.58), g.uniform(0.42, 0.58)
    rx, ry = g.uniform(0.22, 0.32), g.uniform(0.28, 0.40)
    d = ((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2
    mask = 1.0 / (1.0 + np.exp((d - 1.0) * 9.0))
    skin = g.uniform(0.55, 0.82)
    img = img * (1.0 - mask) + skin * mask

    for side in (-1.0, 1.0):
        ex = cx + side * rx * g.uniform(0.35, 0.5)
        ey = cy - ry * g.uniform(0.15, 0.3)
        er = g.uniform(0.035, 0.06)
        img -= g.uniform(0.3, 0.5) * np.exp(-(((xx - ex) ** 2 + (yy - ey) ** 2) / er**2))

    mx = cx
    my = cy + ry * g.uniform(0.35, 0.55)
    mw, mh = rx * g.uniform(0.35, 0.6), g.uniform(0.025, 0.05)
    img -= g.uniform(0.15, 0.3) * np.exp(-(((xx - mx) / mw) ** 2 + ((yy - my) / mh) ** 2))

    hx = cx - rx * g.uniform(0.1, 0.4)
    hy = cy - ry * g.uniform(0.0, 0.3)
    img += g.uniform(0.3, 0.5) * np.exp(-(((xx - hx) * 7.0) ** 2 + ((yy - hy) * 7.0) ** 2))

    for _ in range(3):
        fx, fy = g.uniform(1.5, 5.0, size=2)
        px, py = g.uniform(0.0, 2.0 * np.pi, size=2)
        img += g.uniform(0.01, 0.05) * np.sin(2 * np.pi * fx * xx + px) * np.sin(2 * np.pi * fy * yy + py)
    img += g.normal(0.0, 0.012, size=(h, w))
    img = np.clip(img, 0.0, 1.0)

    if channels == 1:
        return ImageTensor(img)
    tint = g.uniform(0.85, 1.0, size=3)
    shift = g.uniform(0.0, 0.04, size=3)
    planes = [np.clip(img * tint[c] + shift[c], 0.0, 1.0) for c in range(3)]
    return ImageTensor(np.stack(planes, axis=2))


def synthetic_texture(rng: SeededRng, size: int = 64, channels: int = 1) -> ImageTensor:
    """Broadband textured image: superposed oriented waves plus grain."""
    g = rng.generator()
    h = w = int(size)
    yy, xx = np.mgrid[0:h, 0:w] / max(size - 1, 1)
    img = np.full((h, w), 0.5)
    for _ in range(8):
        f = g.uniform(1.0, size / 4.0)
        th = g.uniform(0.0, np.pi)
        ph = g.uniform(0.0, 2.0 * np.pi)
        amp = g.uniform(0.02, 0.12) / np.sqrt(max(f, 1.0))
        img += amp * np.sin(2 * np.pi * f * (np.cos(th) * xx + np.sin(th) * yy) + ph)
    img += g.normal(0.0, 0.02, size=(h, w))
    img = np.clip(img, 0.0, 1.0)
    if channels == 1:
        return ImageTensor(img)
    return ImageTensor(np.stack([img] * channels, axis=2))
