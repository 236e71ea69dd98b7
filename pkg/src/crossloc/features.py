"""Dense per-pixel feature maps: extraction, stacking, grid sampling, and the
FMAP binary container.

A feature map is an (H, W, C) float32 array with finite values. The FMAP v1
file layout is a 20-byte header (magic "FMAP", then version, width, height,
channels as little-endian uint32) followed by exactly width*height*channels
IEEE-754 float32 values, little-endian, row-major with channels interleaved.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image

from .errors import FormatError

FMAP_MAGIC = b"FMAP"
FMAP_VERSION = 1
_HEADER = struct.Struct("<4sIIII")

_SMOOTH_RADIUS = 2
_SMOOTH_RANGE_SIGMA = 0.1


@dataclass(frozen=True)
class FeatureMap:
    """Dense (H, W, C) float32 feature raster with finite values."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim == 2:
            arr = arr[:, :, np.newaxis]
        if arr.ndim != 3:
            raise ValueError(f"feature map must be (H, W, C), got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1 or arr.shape[2] < 1:
            raise ValueError(f"feature map dimensions must be positive, got {arr.shape}")
        arr = np.ascontiguousarray(arr, dtype=np.float32)
        if not np.all(np.isfinite(arr)):
            raise ValueError("feature map contains non-finite values")
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


@dataclass(frozen=True)
class GridSpec:
    """Regular pixel grid: samples every `interval` pixels, keeping a border
    of `margin` pixels untouched on each side."""

    interval: int = 16
    margin: int = 8

    def __post_init__(self):
        if self.interval < 1:
            raise ValueError(f"grid interval must be >= 1, got {self.interval}")
        if self.margin < 0:
            raise ValueError(f"grid margin must be >= 0, got {self.margin}")


@dataclass(frozen=True)
class FeatureConfig:
    """What the per-pixel features are and how they are normalized.

    extractors: ("color", "edge") runs the built-in extractors on an RGB
    image; ("external",) means callers supply ready feature maps (e.g. from a
    semantic scorer) and no extraction happens. channel_means/stds, when set,
    hold frozen per-channel standardization statistics that are applied
    identically to ground and satellite maps.
    """

    extractors: tuple[str, ...] = ("color", "edge")
    standardize: bool = True
    channel_means: tuple[float, ...] | None = None
    channel_stds: tuple[float, ...] | None = None

    def __post_init__(self):
        known = {"color", "edge", "external"}
        for name in self.extractors:
            if name not in known:
                raise ValueError(f"unknown extractor '{name}'")
        if "external" in self.extractors and len(self.extractors) != 1:
            raise ValueError("'external' cannot be combined with built-in extractors")
        if (self.channel_means is None) != (self.channel_stds is None):
            raise ValueError("channel means and stds must be set together")

    def to_json(self) -> str:
        payload = {
            "extractors": list(self.extractors),
            "standardize": self.standardize,
            "channel_means": None if self.channel_means is None else list(self.channel_means),
            "channel_stds": None if self.channel_stds is None else list(self.channel_stds),
        }
        return json.dumps(payload, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "FeatureConfig":
        payload = json.loads(text)
        return cls(
            extractors=tuple(payload["extractors"]),
            standardize=bool(payload["standardize"]),
            channel_means=None if payload["channel_means"] is None else tuple(payload["channel_means"]),
            channel_stds=None if payload["channel_stds"] is None else tuple(payload["channel_stds"]),
        )

    def digest(self) -> str:
        return hashlib.sha256(self.to_json().encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# extraction


def _as_rgb01(image) -> np.ndarray:
    arr = np.asarray(image)
    if arr.ndim == 2:
        arr = arr[:, :, np.newaxis]
    if arr.ndim != 3:
        raise ValueError(f"image must be (H, W) or (H, W, C), got shape {arr.shape}")
    if arr.dtype == np.uint8:
        return arr.astype(np.float32) / 255.0
    arr = arr.astype(np.float32)
    if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
        raise ValueError("float images must already be scaled to [0, 1]")
    return arr


def _range_weighted_pass(img: np.ndarray, axis: int) -> np.ndarray:
    """One 1-D pass of the edge-preserving box filter along `axis`.

    Neighbors inside the radius are averaged with weights
    exp(-(neighbor - center)^2 / (2 sigma^2)); borders replicate.
    """
    pad = [(0, 0)] * img.ndim
    pad[axis] = (_SMOOTH_RADIUS, _SMOOTH_RADIUS)
    padded = np.pad(img, pad, mode="edge")
    acc = np.zeros_like(img, dtype=np.float64)
    wsum = np.zeros_like(img, dtype=np.float64)
    n = img.shape[axis]
    inv = 1.0 / (2.0 * _SMOOTH_RANGE_SIGMA**2)
    for off in range(2 * _SMOOTH_RADIUS + 1):
        shifted = np.take(padded, np.arange(off, off + n), axis=axis)
        w = np.exp(-((shifted - img) ** 2) * inv)
        acc += w * shifted
        wsum += w
    return (acc / wsum).astype(np.float32)


def extract_smoothed_color(image) -> FeatureMap:
    """Edge-preserving smoothed color channels, values in [0, 1]."""
    img = _as_rgb01(image)
    out = _range_weighted_pass(img, axis=1)
    out = _range_weighted_pass(out, axis=0)
    return FeatureMap(np.clip(out, 0.0, 1.0))


def extract_edge_magnitude(image) -> FeatureMap:
    """Central-difference gradient magnitude of the gray image, in [0, 1]."""
    img = _as_rgb01(image)
    gray = img.mean(axis=2).astype(np.float64)
    padded = np.pad(gray, 1, mode="edge")
    gx = (padded[1:-1, 2:] - padded[1:-1, :-2]) * 0.5
    gy = (padded[2:, 1:-1] - padded[:-2, 1:-1]) * 0.5
    # gx, gy each lie in [-0.5, 0.5], so the magnitude caps at sqrt(0.5)
    mag = np.hypot(gx, gy) / np.sqrt(0.5)
    return FeatureMap(np.clip(mag, 0.0, 1.0)[:, :, np.newaxis].astype(np.float32))


_EXTRACTOR_FNS = {
    "color": extract_smoothed_color,
    "edge": extract_edge_magnitude,
}


def extract_features(source, config: FeatureConfig) -> FeatureMap:
    """Run the configured extractors, or pass an external map through.

    `source` is an RGB image array for built-in extractors, or a FeatureMap /
    array when the config says "external". Standardization is not applied
    here; it needs dataset-level statistics (see apply_standardization).
    """
    if "external" in config.extractors:
        return source if isinstance(source, FeatureMap) else FeatureMap(source)
    if isinstance(source, FeatureMap):
        raise ValueError("built-in extractors need an image, got a FeatureMap")
    maps = [_EXTRACTOR_FNS[name](source) for name in config.extractors]
    return stack_feature_maps(maps)


# ---------------------------------------------------------------------------
# stacking and standardization


def stack_feature_maps(maps: Sequence[FeatureMap]) -> FeatureMap:
    """Concatenate maps along the channel axis; spatial dims must agree."""
    if not maps:
        raise ValueError("no feature maps to stack")
    h, w = maps[0].height, maps[0].width
    for m in maps[1:]:
        if (m.height, m.width) != (h, w):
            raise ValueError(
                f"feature map size mismatch: {m.height}x{m.width} vs {h}x{w}"
            )
    return FeatureMap(np.concatenate([m.data for m in maps], axis=2))


def channel_stats(maps: Sequence[FeatureMap]) -> tuple[tuple[float, ...], tuple[float, ...]]:
    """Per-channel mean and population std over all pixels of all maps."""
    if not maps:
        raise ValueError("no feature maps")
    channels = maps[0].channels
    for m in maps:
        if m.channels != channels:
            raise ValueError("channel count mismatch across maps")
    flat = np.concatenate([m.data.reshape(-1, channels).astype(np.float64) for m in maps])
    means = flat.mean(axis=0)
    stds = flat.std(axis=0)
    return tuple(float(x) for x in means), tuple(float(x) for x in stds)


def apply_standardization(fmap: FeatureMap, config: FeatureConfig) -> FeatureMap:
    """Apply frozen per-channel statistics; identity when the config has none."""
    if not config.standardize or config.channel_means is None:
        return fmap
    if len(config.channel_means) != fmap.channels:
        raise ValueError(
            f"standardization stats cover {len(config.channel_means)} channels, "
            f"map has {fmap.channels}"
        )
    means = np.asarray(config.channel_means, dtype=np.float32)
    stds = np.maximum(np.asarray(config.channel_stds, dtype=np.float32), 1e-12)
    return FeatureMap((fmap.data - means) / stds)


def fit_standardization(config: FeatureConfig, maps: Sequence[FeatureMap]) -> FeatureConfig:
    """Freeze standardization statistics into the config (no-op when off or
    already frozen)."""
    if not config.standardize or config.channel_means is not None:
        return config
    means, stds = channel_stats(maps)
    return replace(config, channel_means=means, channel_stds=stds)


# ---------------------------------------------------------------------------
# grid sampling


def grid_positions(dim: int, grid: GridSpec) -> np.ndarray:
    """Sample positions along one axis: margin, margin+interval, ... capped at
    min(dim - margin, dim - 1) inclusive."""
    upper = min(dim - grid.margin, dim - 1)
    if upper < grid.margin:
        return np.empty(0, dtype=np.int64)
    return np.arange(grid.margin, upper + 1, grid.interval, dtype=np.int64)


def sample_grid_arrays(fmap: FeatureMap, grid: GridSpec) -> tuple[np.ndarray, np.ndarray]:
    """Grid sample a map. Returns (pixels, vectors): pixels is (n, 2) int64
    (u, v) in row-major order (v outer, u inner), vectors is (n, C) float64."""
    us = grid_positions(fmap.width, grid)
    vs = grid_positions(fmap.height, grid)
    if us.size == 0 or vs.size == 0:
        return np.empty((0, 2), dtype=np.int64), np.empty((0, fmap.channels), dtype=np.float64)
    uu, vv = np.meshgrid(us, vs)
    pixels = np.stack([uu.ravel(), vv.ravel()], axis=1)
    vectors = fmap.data[pixels[:, 1], pixels[:, 0]].astype(np.float64)
    return pixels, vectors


def sample_grid(fmap: FeatureMap, grid: GridSpec) -> list[tuple[tuple[int, int], np.ndarray]]:
    """Grid sample a map as a list of ((u, v), feature vector) tuples."""
    pixels, vectors = sample_grid_arrays(fmap, grid)
    return [((int(u), int(v)), vectors[i]) for i, (u, v) in enumerate(pixels)]


# ---------------------------------------------------------------------------
# FMAP v1 container


def save_feature_map(path, fmap: FeatureMap) -> None:
    header = _HEADER.pack(FMAP_MAGIC, FMAP_VERSION, fmap.width, fmap.height, fmap.channels)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(fmap.data.astype("<f4", copy=False).tobytes())


def feature_map_to_bytes(fmap: FeatureMap) -> bytes:
    return _HEADER.pack(
        FMAP_MAGIC, FMAP_VERSION, fmap.width, fmap.height, fmap.channels
    ) + fmap.data.astype("<f4", copy=False).tobytes()


def feature_map_from_bytes(blob: bytes, source: str = "<bytes>") -> FeatureMap:
    if len(blob) < _HEADER.size:
        raise FormatError(
            f"{source}: file is {len(blob)} bytes, shorter than the {_HEADER.size}-byte header"
        )
    magic, version, width, height, channels = _HEADER.unpack_from(blob, 0)
    if magic != FMAP_MAGIC:
        raise FormatError(
            f"{source}: bad magic {magic!r} at offset 0, expected {FMAP_MAGIC!r}"
        )
    if version != FMAP_VERSION:
        raise FormatError(
            f"{source}: unsupported version {version} at offset 4, expected {FMAP_VERSION}"
        )
    if width < 1 or height < 1 or channels < 1:
        raise FormatError(
            f"{source}: dimensions {width}x{height}x{channels} must all be >= 1"
        )
    expected = width * height * channels * 4
    actual = len(blob) - _HEADER.size
    if actual != expected:
        raise FormatError(
            f"{source}: payload is {actual} bytes, expected {expected} "
            f"({width}x{height}x{channels} float32)"
        )
    data = np.frombuffer(blob, dtype="<f4", offset=_HEADER.size).reshape(height, width, channels)
    return FeatureMap(np.array(data))


def load_feature_map(path) -> FeatureMap:
    return feature_map_from_bytes(Path(path).read_bytes(), source=str(path))


def load_image(path) -> np.ndarray:
    """Read a PNG or binary PPM image as an (H, W, 3) uint8 array."""
    try:
        with Image.open(path) as img:
            return np.asarray(img.convert("RGB"))
    except (OSError, SyntaxError) as exc:
        raise FormatError(f"{path}: cannot decode image: {exc}") from exc
