"""The ground-to-satellite feature dictionary.

Each database image contributes grid-sampled ground feature vectors; every
sample with a usable depth is back-projected to the ground plane, mapped into
the satellite raster, and paired with the satellite feature at that pixel
(nearest-pixel lookup). Samples are dropped when the depth is non-positive or
non-finite, the planar range exceeds max_range, or the projection leaves the
satellite bounds.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import FormatError
from .features import (
    FeatureConfig,
    FeatureMap,
    GridSpec,
    apply_standardization,
    extract_features,
    feature_map_from_bytes,
    feature_map_to_bytes,
    fit_standardization,
    sample_grid_arrays,
)
from .geometry import (
    CameraIntrinsics,
    Pose2D,
    SatGeoref,
    pixel_depth_to_world_batch,
    world_to_sat_pixel_batch,
)
from .neighbors import NeighborIndex

_DICT_MAGIC = b"CVD1"
DEFAULT_MAX_RANGE = 50.0


@dataclass(frozen=True)
class DictEntry:
    id: int
    ground_feat: np.ndarray  # float32
    sat_feat: np.ndarray     # float32
    location: tuple[float, float]
    source_image: int


def as_depth_array(depth) -> np.ndarray:
    """Coerce a depth source (FeatureMap with one channel, or 2-D array) to a
    float64 (H, W) array. Non-finite or non-positive entries mean "no depth"
    and are filtered by callers."""
    if isinstance(depth, FeatureMap):
        if depth.channels != 1:
            raise ValueError(f"depth map must have 1 channel, got {depth.channels}")
        return depth.data[:, :, 0].astype(np.float64)
    arr = np.asarray(depth, dtype=np.float64)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    if arr.ndim != 2:
        raise ValueError(f"depth must be 2-D, got shape {arr.shape}")
    return arr


class Dictionary:
    """Paired ground/satellite feature vectors plus retrieval indexes.

    Vectors are stored float32 (the serialized precision); the k-d trees are
    built over float64 copies and rebuilt deterministically on load.
    """

    def __init__(
        self,
        ids: np.ndarray,
        source_images: np.ndarray,
        locations: np.ndarray,
        ground_feats: np.ndarray,
        sat_feats: np.ndarray,
        sat_map: FeatureMap,
        georef: SatGeoref,
        feature_config: FeatureConfig,
        grid: GridSpec,
        max_range: float,
    ):
        self.ids = np.asarray(ids, dtype=np.int64)
        self.source_images = np.asarray(source_images, dtype=np.int64)
        self.locations = np.asarray(locations, dtype=np.float64)
        self.ground_feats = np.ascontiguousarray(ground_feats, dtype=np.float32)
        self.sat_feats = np.ascontiguousarray(sat_feats, dtype=np.float32)
        self.sat_map = sat_map
        self.georef = georef
        self.feature_config = feature_config
        self.grid = grid
        self.max_range = float(max_range)
        if self.ids.shape[0] == 0:
            raise ValueError("empty dictionary")
        self.ground_index = NeighborIndex(self.ids, self.ground_feats.astype(np.float64))
        self.sat_index = NeighborIndex(self.ids, self.sat_feats.astype(np.float64))

    def __len__(self) -> int:
        return self.ids.shape[0]

    @property
    def ground_dim(self) -> int:
        return self.ground_feats.shape[1]

    @property
    def sat_dim(self) -> int:
        return self.sat_feats.shape[1]

    def ground_matrix(self) -> np.ndarray:
        return self.ground_feats.astype(np.float64)

    def sat_matrix(self) -> np.ndarray:
        return self.sat_feats.astype(np.float64)

    @property
    def entries(self) -> list[DictEntry]:
        return [
            DictEntry(
                id=int(self.ids[i]),
                ground_feat=self.ground_feats[i],
                sat_feat=self.sat_feats[i],
                location=(float(self.locations[i, 0]), float(self.locations[i, 1])),
                source_image=int(self.source_images[i]),
            )
            for i in range(len(self))
        ]


def build_dictionary(
    db: Sequence[tuple],
    sat,
    georef: SatGeoref,
    cam: CameraIntrinsics,
    grid: GridSpec = GridSpec(),
    feature_config: FeatureConfig = FeatureConfig(),
    max_range: float = DEFAULT_MAX_RANGE,
    image_ids: Sequence[int] | None = None,
) -> Dictionary:
    """Build the dictionary from (ground, depth, pose) database triples.

    `ground` may be an RGB image (built-in extractors) or a ready FeatureMap
    (external extractor config); `sat` likewise. When standardization is on
    and not yet frozen, per-channel statistics are fitted jointly over all
    database ground maps plus the satellite map and applied to both views.
    """
    db = list(db)
    if not db:
        raise ValueError("empty dictionary")
    if max_range <= 0:
        raise ValueError(f"max_range must be positive, got {max_range}")
    if image_ids is None:
        image_ids = list(range(len(db)))
    elif len(image_ids) != len(db):
        raise ValueError("image_ids and db must have equal length")

    ground_maps = [extract_features(item[0], feature_config) for item in db]
    sat_map = extract_features(sat, feature_config)
    if (sat_map.width, sat_map.height) != (georef.image_w, georef.image_h):
        raise ValueError(
            f"satellite map is {sat_map.width}x{sat_map.height}, georef says "
            f"{georef.image_w}x{georef.image_h}"
        )
    for gmap in ground_maps:
        if (gmap.width, gmap.height) != (cam.image_w, cam.image_h):
            raise ValueError(
                f"ground map is {gmap.width}x{gmap.height}, camera says "
                f"{cam.image_w}x{cam.image_h}"
            )
    if feature_config.standardize:
        if ground_maps[0].channels != sat_map.channels:
            raise ValueError(
                "standardization needs equal ground/satellite channel counts, got "
                f"{ground_maps[0].channels} vs {sat_map.channels}"
            )
        feature_config = fit_standardization(feature_config, ground_maps + [sat_map])
        ground_maps = [apply_standardization(g, feature_config) for g in ground_maps]
        sat_map = apply_standardization(sat_map, feature_config)

    ground_rows, sat_rows, loc_rows, source_rows = [], [], [], []
    for img_pos, (item, gmap) in enumerate(zip(db, ground_maps)):
        _, depth_src, pose = item[0], item[1], item[2]
        if not isinstance(pose, Pose2D):
            raise ValueError("database poses must be Pose2D")
        depth = as_depth_array(depth_src)
        if depth.shape != (gmap.height, gmap.width):
            raise ValueError(
                f"depth shape {depth.shape} does not match ground map "
                f"{gmap.height}x{gmap.width}"
            )
        pixels, _ = sample_grid_arrays(gmap, grid)
        if pixels.shape[0] == 0:
            continue
        depths = depth[pixels[:, 1], pixels[:, 0]]
        keep = np.isfinite(depths) & (depths > 0.0)
        pixels, depths = pixels[keep], depths[keep]
        if pixels.shape[0] == 0:
            continue
        # planar camera-to-point range; rotation preserves it, so it can be
        # checked before the world transform
        y_veh = -((pixels[:, 0] - cam.cx) / cam.fx * depths)
        keep = np.hypot(depths, y_veh) <= max_range
        pixels, depths = pixels[keep], depths[keep]
        if pixels.shape[0] == 0:
            continue
        world = pixel_depth_to_world_batch(pixels, depths, cam, pose)
        uv, inb = world_to_sat_pixel_batch(world, georef)
        pixels, world, uv = pixels[inb], world[inb], uv[inb]
        if pixels.shape[0] == 0:
            continue
        iu = np.floor(uv[:, 0]).astype(np.int64)
        iv = np.floor(uv[:, 1]).astype(np.int64)
        ground_rows.append(gmap.data[pixels[:, 1], pixels[:, 0]])
        sat_rows.append(sat_map.data[iv, iu])
        loc_rows.append(world)
        source_rows.append(np.full(pixels.shape[0], image_ids[img_pos], dtype=np.int64))

    if not ground_rows:
        raise ValueError("empty dictionary")
    ground_feats = np.concatenate(ground_rows)
    sat_feats = np.concatenate(sat_rows)
    locations = np.concatenate(loc_rows)
    sources = np.concatenate(source_rows)
    ids = np.arange(ground_feats.shape[0], dtype=np.int64)
    return Dictionary(
        ids=ids,
        source_images=sources,
        locations=locations,
        ground_feats=ground_feats,
        sat_feats=sat_feats,
        sat_map=sat_map,
        georef=georef,
        feature_config=feature_config,
        grid=grid,
        max_range=max_range,
    )


# ---------------------------------------------------------------------------
# serialization


def save_dictionary(path, dictionary: Dictionary) -> None:
    meta = {
        "format": "crossloc-dictionary",
        "version": 1,
        "feature_config": json.loads(dictionary.feature_config.to_json()),
        "grid": {"interval": dictionary.grid.interval, "margin": dictionary.grid.margin},
        "max_range": dictionary.max_range,
        "georef": {
            "origin_x": dictionary.georef.origin_x,
            "origin_y": dictionary.georef.origin_y,
            "meters_per_pixel": dictionary.georef.meters_per_pixel,
            "image_w": dictionary.georef.image_w,
            "image_h": dictionary.georef.image_h,
        },
    }
    meta_bytes = json.dumps(meta, sort_keys=True).encode("utf-8")
    n = len(dictionary)
    record = np.dtype(
        [
            ("id", "<u4"),
            ("source", "<u4"),
            ("x", "<f8"),
            ("y", "<f8"),
            ("g", "<f4", (dictionary.ground_dim,)),
            ("s", "<f4", (dictionary.sat_dim,)),
        ]
    )
    table = np.empty(n, dtype=record)
    table["id"] = dictionary.ids
    table["source"] = dictionary.source_images
    table["x"] = dictionary.locations[:, 0]
    table["y"] = dictionary.locations[:, 1]
    table["g"] = dictionary.ground_feats
    table["s"] = dictionary.sat_feats
    with open(path, "wb") as fh:
        fh.write(_DICT_MAGIC)
        fh.write(struct.pack("<I", len(meta_bytes)))
        fh.write(meta_bytes)
        fh.write(struct.pack("<III", n, dictionary.ground_dim, dictionary.sat_dim))
        fh.write(table.tobytes())
        fh.write(feature_map_to_bytes(dictionary.sat_map))


def load_dictionary(path) -> Dictionary:
    blob = Path(path).read_bytes()
    if len(blob) < 8 or blob[:4] != _DICT_MAGIC:
        raise FormatError(f"{path}: bad magic at offset 0, expected {_DICT_MAGIC!r}")
    (meta_len,) = struct.unpack_from("<I", blob, 4)
    offset = 8
    if len(blob) < offset + meta_len + 12:
        raise FormatError(f"{path}: truncated header (need {meta_len} metadata bytes)")
    try:
        meta = json.loads(blob[offset : offset + meta_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: bad metadata block: {exc}") from exc
    if meta.get("format") != "crossloc-dictionary" or meta.get("version") != 1:
        raise FormatError(f"{path}: unsupported dictionary format/version")
    offset += meta_len
    n, gdim, sdim = struct.unpack_from("<III", blob, offset)
    offset += 12
    record = np.dtype(
        [
            ("id", "<u4"),
            ("source", "<u4"),
            ("x", "<f8"),
            ("y", "<f8"),
            ("g", "<f4", (gdim,)),
            ("s", "<f4", (sdim,)),
        ]
    )
    table_bytes = n * record.itemsize
    if len(blob) < offset + table_bytes:
        raise FormatError(
            f"{path}: entry table is {len(blob) - offset} bytes, expected {table_bytes}"
        )
    table = np.frombuffer(blob, dtype=record, count=n, offset=offset)
    offset += table_bytes
    sat_map = feature_map_from_bytes(blob[offset:], source=f"{path}[sat_map]")

    cfg = FeatureConfig.from_json(json.dumps(meta["feature_config"]))
    georef = SatGeoref(**meta["georef"])
    grid = GridSpec(**meta["grid"])
    locations = np.stack([table["x"], table["y"]], axis=1)
    return Dictionary(
        ids=table["id"].astype(np.int64),
        source_images=table["source"].astype(np.int64),
        locations=locations,
        ground_feats=np.array(table["g"], dtype=np.float32).reshape(n, gdim),
        sat_feats=np.array(table["s"], dtype=np.float32).reshape(n, sdim),
        sat_map=sat_map,
        georef=georef,
        feature_config=cfg,
        grid=grid,
        max_range=float(meta["max_range"]),
    )
