"""Image tensors, deterministic RNG streams, and small image file formats.

Images are float tensors of shape (H, W, C) with C in {1, 3} and values
nominally in [0, 1] (intensity units). Three on-disk formats are supported:

* binary PGM (P5) and PPM (P6), 8-bit, for interchange with other tools;
* a raw float32 format for lossless round-trips inside this toolkit:
  ASCII header ``IRTF1\\n<H> <W> <C>\\n`` followed by H*W*C little-endian
  IEEE-754 float32 values, row-major with the channel axis fastest.

All randomness in the toolkit flows through :class:`SeededRng`, a value
object naming a (seed, stream) pair. Identical pairs yield identical
sequences on every platform; distinct streams are statistically
independent. The underlying generator is numpy's Philox4x64-10 keyed via
``SeedSequence(seed, spawn_key=stream)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "FormatError",
    "ImageTensor",
    "SeededRng",
    "gaussian_samples",
    "read_image",
    "write_image",
]


class FormatError(ValueError):
    """Malformed or unsupported image file. Carries the offending byte offset."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte {offset})"
        super().__init__(message)
        self.offset = offset


@dataclass(frozen=True)
class ImageTensor:
    """Immutable (H, W, C) float64 image, C in {1, 3}, all values finite.

    Values are intensities on the [0, 1] scale by convention, but the
    container does not clamp: intermediate results (residuals, diffusion
    states) may leave the range.
    """

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3:
            raise ValueError(f"image must have shape (H, W, C), got {arr.shape}")
        h, w, c = arr.shape
        if h < 1 or w < 1:
            raise ValueError(f"empty image {arr.shape}")
        if c not in (1, 3):
            raise ValueError(f"channel count must be 1 or 3, got {c}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("image contains non-finite values")
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    @classmethod
    def from_array(cls, arr) -> "ImageTensor":
        return cls(np.asarray(arr))

    @classmethod
    def constant(cls, height: int, width: int, channels: int = 1, value: float = 0.0) -> "ImageTensor":
        return cls(np.full((height, width, channels), value, dtype=np.float64))

    def clamped(self, lo: float = 0.0, hi: float = 1.0) -> "ImageTensor":
        return ImageTensor(np.clip(self.data, lo, hi))


@dataclass(frozen=True)
class SeededRng:
    """Named random stream: (seed, stream id path) -> reproducible generator.

    ``generator()`` builds a fresh numpy Generator each call, so a SeededRng
    is a pure value: the same (seed, stream) always reproduces the same
    sequence regardless of what was drawn elsewhere. ``child(i)`` derives an
    independent substream; composite operations give each parallel task its
    own child indexed by task position, which keeps reductions deterministic
    under any worker count.
    """

    seed: int
    stream: tuple[int, ...] = (0,)

    def __post_init__(self):
        if isinstance(self.stream, int):
            object.__setattr__(self, "stream", (self.stream,))
        else:
            object.__setattr__(self, "stream", tuple(int(s) for s in self.stream))

    def child(self, *indices: int) -> "SeededRng":
        return SeededRng(self.seed, self.stream + tuple(int(i) for i in indices))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=self.stream)
        return np.random.Generator(np.random.Philox(ss))


def gaussian_samples(rng: SeededRng, n: int) -> np.ndarray:
    """n iid standard normal draws from the given stream."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    return rng.generator().standard_normal(n)


# ---------------------------------------------------------------------------
# File formats


def _round_half_away(v: np.ndarray) -> np.ndarray:
    # values are nonnegative after clamping, so half-away == floor(v + 0.5)
    return np.floor(v + 0.5)


def _quantize8(img: ImageTensor) -> np.ndarray:
    v = np.clip(img.data, 0.0, 1.0) * 255.0
    return _round_half_away(v).astype(np.uint8)


def _read_pnm(buf: bytes, path: str) -> ImageTensor:
    magic = buf[:2]
    channels = {b"P5": 1, b"P6": 3}[magic]
    pos = 2

    def next_token() -> tuple[bytes, int]:
        nonlocal pos
        while pos < len(buf):
            b = buf[pos : pos + 1]
            if b == b"#":
                while pos < len(buf) and buf[pos : pos + 1] not in (b"\n", b"\r"):
                    pos += 1
            elif b.isspace():
                pos += 1
            else:
                break
        start = pos
        while pos < len(buf) and not buf[pos : pos + 1].isspace() and buf[pos : pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise FormatError(f"{path}: truncated header", offset=pos)
        return buf[start:pos], start

    fields = []
    for _ in range(3):
        tok, start = next_token()
        try:
            fields.append(int(tok))
        except ValueError:
            raise FormatError(f"{path}: expected integer header field, got {tok!r}", offset=start) from None
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise FormatError(f"{path}: bad dimensions {width}x{height}", offset=2)
    if not (1 <= maxval <= 255):
        raise FormatError(f"{path}: unsupported max value {maxval}, need 8-bit", offset=pos - len(str(maxval)))
    if pos >= len(buf) or not buf[pos : pos + 1].isspace():
        raise FormatError(f"{path}: missing whitespace after header", offset=pos)
    pos += 1
    need = width * height * channels
    payload = buf[pos : pos + need]
    if len(payload) < need:
        raise FormatError(f"{path}: payload truncated, expected {need} bytes", offset=pos + len(payload))
    arr = np.frombuffer(payload, dtype=np.uint8).astype(np.float64).reshape(height, width, channels)
    return ImageTensor(arr / float(maxval))


def _read_raw(buf: bytes, path: str) -> ImageTensor:
    nl1 = buf.find(b"\n")
    nl2 = buf.find(b"\n", nl1 + 1)
    if nl1 < 0 or nl2 < 0:
        raise FormatError(f"{path}: truncated raw header", offset=len(buf))
    if buf[:nl1] != b"IRTF1":
        raise FormatError(f"{path}: bad raw magic {buf[:nl1]!r}", offset=0)
    parts = buf[nl1 + 1 : nl2].split()
    if len(parts) != 3:
        raise FormatError(f"{path}: raw header needs '<H> <W> <C>'", offset=nl1 + 1)
    try:
        h, w, c = (int(p) for p in parts)
    except ValueError:
        raise FormatError(f"{path}: non-integer raw dimensions", offset=nl1 + 1) from None
    need = h * w * c * 4
    payload = buf[nl2 + 1 : nl2 + 1 + need]
    if len(payload) < need:
        raise FormatError(f"{path}: payload truncated, expected {need} bytes", offset=nl2 + 1 + len(payload))
    arr = np.frombuffer(payload, dtype="<f4").astype(np.float64).reshape(h, w, c)
    try:
        return ImageTensor(arr)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}", offset=nl2 + 1) from None


def read_image(path) -> ImageTensor:
    """Read a PGM/PPM/raw-float image by sniffing its magic bytes."""
    path = str(path)
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:2] in (b"P5", b"P6"):
        return _read_pnm(buf, path)
    if buf[:6] == b"IRTF1\n":
        return _read_raw(buf, path)
    raise FormatError(f"{path}: unrecognized magic {buf[:6]!r}", offset=0)


def write_image(img: ImageTensor, path, fmt: str | None = None) -> None:
    """Write as 'pgm8', 'ppm8', or 'raw_f32' (inferred from suffix by default).

    8-bit writes clamp to [0, 1] and quantize with round-half-away-from-zero;
    raw_f32 writes the float32 payload untouched, so write-then-read is exact
    for any tensor whose values are float32-representable.
    """
    path = str(path)
    if fmt is None:
        suffix = path.rsplit(".", 1)[-1].lower() if "." in path else ""
        fmt = {"pgm": "pgm8", "ppm": "ppm8", "irtf": "raw_f32", "raw": "raw_f32"}.get(suffix)
        if fmt is None:
            raise ValueError(f"{path}: cannot infer format from suffix, pass fmt")
    if fmt == "pgm8":
        if img.channels != 1:
            raise ValueError("pgm8 requires a single channel")
        body = _quantize8(img)[:, :, 0].tobytes()
        header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
    elif fmt == "ppm8":
        if img.channels != 3:
            raise ValueError("ppm8 requires three channels")
        body = _quantize8(img).tobytes()
        header = f"P6\n{img.width} {img.height}\n255\n".encode("ascii")
    elif fmt == "raw_f32":
        body = np.ascontiguousarray(img.data, dtype="<f4").tobytes()
        header = f"IRTF1\n{img.height} {img.width} {img.channels}\n".encode("ascii")
    else:
        raise ValueError(f"unknown format {fmt!r}")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(body)
