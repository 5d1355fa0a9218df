"""Weight bundles and their on-disk format.

A bundle holds the per-conv-layer parameters of one pretrained trunk plus
the per-channel input means used for preprocessing. Files use a small
custom binary layout (magic ``HDFW``) so the engine has zero external
model-format dependencies; converting real pretrained checkpoints into
this format is external tooling.

File layout, little-endian, no padding between fields::

    "HDFW"                      4 bytes magic
    format version              u32 (currently 1)
    channel means               3 x f32
    entry count                 u32
    per entry:
        name length             u32
        name                    UTF-8 bytes
        kernel dims             4 x u32  (out, in, kh, kw)
        kernel data             prod(dims) x f32
        bias dim                u32
        bias data               dim x f32
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .engine import NetworkSpec, validate_bundle

MAGIC = b"HDFW"
FORMAT_VERSION = 1


class WeightFileError(ValueError):
    """Base class for weight-file problems."""


class BadMagicError(WeightFileError):
    """File does not start with the HDFW magic."""


class TruncatedFileError(WeightFileError):
    """File ends before the declared content (including missing entries)."""


class ShapeError(WeightFileError):
    """Declared dimensions are inconsistent or unsupported."""


@dataclass(frozen=True)
class ConvEntry:
    name: str
    kernel: np.ndarray  # (out, in, 3, 3) float32
    bias: np.ndarray  # (out,) float32


@dataclass(frozen=True)
class WeightBundle:
    """Ordered conv-layer parameters plus preprocessing channel means."""

    entries: tuple[ConvEntry, ...]
    means: np.ndarray  # (3,) float32, pixel-intensity units

    def validate_against(self, spec: NetworkSpec) -> None:
        validate_bundle(spec, self)


def save_weights(bundle: WeightBundle, path: str) -> None:
    """Write a bundle in HDFW format; round-trips bit-identically."""
    means = np.asarray(bundle.means, dtype="<f4")
    if means.shape != (3,):
        raise ShapeError(f"means must be 3 floats, got shape {means.shape}")
    parts = [MAGIC, struct.pack("<I", FORMAT_VERSION), means.tobytes(),
             struct.pack("<I", len(bundle.entries))]
    for entry in bundle.entries:
        kernel = np.ascontiguousarray(entry.kernel, dtype="<f4")
        bias = np.ascontiguousarray(entry.bias, dtype="<f4")
        if kernel.ndim != 4:
            raise ShapeError(f"entry {entry.name!r}: kernel must be 4-D, got {kernel.shape}")
        if bias.ndim != 1 or bias.shape[0] != kernel.shape[0]:
            raise ShapeError(
                f"entry {entry.name!r}: bias shape {bias.shape} does not match "
                f"kernel {kernel.shape}"
            )
        name = entry.name.encode("utf-8")
        parts.append(struct.pack("<I", len(name)))
        parts.append(name)
        parts.append(struct.pack("<4I", *kernel.shape))
        parts.append(kernel.tobytes())
        parts.append(struct.pack("<I", bias.shape[0]))
        parts.append(bias.tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


class _Reader:
    def __init__(self, data: bytes, path: str):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedFileError(
                f"{self.path}: truncated bundle while reading {what} "
                f"(need {n} bytes at offset {self.pos}, have {len(self.data) - self.pos})"
            )
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]

    def f32s(self, count: int, what: str) -> np.ndarray:
        raw = self.take(4 * count, what)
        return np.frombuffer(raw, dtype="<f4").copy()


def load_weights(path: str) -> WeightBundle:
    """Read an HDFW file into a :class:`WeightBundle`.

    Raises:
        BadMagicError: wrong leading magic bytes.
        TruncatedFileError: file shorter than its header declares.
        ShapeError: inconsistent declared dimensions or bad version.
    """
    with open(path, "rb") as fh:
        data = fh.read()
    rd = _Reader(data, path)
    if rd.take(4, "magic") != MAGIC:
        raise BadMagicError(f"{path}: bad magic {data[:4]!r}, expected {MAGIC!r}")
    version = rd.u32("format version")
    if version != FORMAT_VERSION:
        raise ShapeError(f"{path}: unsupported format version {version}")
    means = rd.f32s(3, "channel means")
    count = rd.u32("entry count")
    entries = []
    for i in range(count):
        name_len = rd.u32(f"entry {i} name length")
        name = rd.take(name_len, f"entry {i} name").decode("utf-8")
        dims = struct.unpack("<4I", rd.take(16, f"entry {i} kernel dims"))
        if any(d < 1 for d in dims):
            raise ShapeError(f"{path}: entry {i} ({name}) has zero kernel dim {dims}")
        kernel = rd.f32s(int(np.prod(dims)), f"entry {i} kernel data").reshape(dims)
        bias_dim = rd.u32(f"entry {i} bias dim")
        if bias_dim != dims[0]:
            raise ShapeError(
                f"{path}: entry {i} ({name}) bias dim {bias_dim} != kernel out "
                f"channels {dims[0]}"
            )
        bias = rd.f32s(bias_dim, f"entry {i} bias data")
        entries.append(ConvEntry(name=name, kernel=kernel, bias=bias))
    if rd.pos != len(data):
        raise ShapeError(f"{path}: {len(data) - rd.pos} trailing bytes after last entry")
    return WeightBundle(entries=tuple(entries), means=means)


def random_bundle(spec: NetworkSpec, seed: int = 0, scale: float | None = None,
                  means=(124.0, 117.0, 104.0)) -> WeightBundle:
    """Deterministic random weights for a spec; handy for stubs and tests.

    The default scale keeps activation magnitudes roughly constant from
    layer to layer (He-style 1/sqrt(fan-in)).
    """
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x5EED]))
    entries = []
    for i, layer in enumerate(spec.conv_layers):
        fan_in = layer.in_channels * 9
        s = scale if scale is not None else 1.0 / np.sqrt(fan_in)
        kernel = (rng.standard_normal((layer.out_channels, layer.in_channels, 3, 3)) * s)
        bias = np.zeros(layer.out_channels)
        entries.append(ConvEntry(
            name=f"conv{i}",
            kernel=kernel.astype(np.float32),
            bias=bias.astype(np.float32),
        ))
    return WeightBundle(entries=tuple(entries),
                        means=np.asarray(means, dtype=np.float32))
