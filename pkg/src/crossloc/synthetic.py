"""Seeded synthetic world for end-to-end pipeline experiments.

The world is a smooth multi-channel scalar field over a square region, built
from seeded Gaussian blobs. The satellite map rasterizes the field at pixel
centers. Ground observations are generated by the same camera model the
pipeline inverts: each pixel below the horizon images the ground plane at an
exact depth, that depth is projected through the true pose into the satellite
raster, and the ground feature is `mixing @ raster_value + noise`. Because
generation samples the rasterized map (not the continuous field), a noiseless
identity-mixing world yields ground vectors bitwise equal to their satellite
counterparts.

Per-image camera height offsets (height_jitter) keep depth maps from being
shared across images; without them every database-pose candidate would
re-project query samples onto exactly the dictionary's satellite pixels and
scores would snap to database poses. Depth maps are stored in float32 and the
generator projects through the float32 values, so file round-trips reproduce
the in-memory world exactly.

The vehicle drives a circle; the database pass samples it at db_spacing,
queries perturb database poses laterally and in heading, and outside-path
queries are placed well off the circle for negative-query evaluation.

The last feature channel is a nuisance: its blobs have small amplitude and
its ground-side noise is inflated, so a learned projection can improve
retrieval by downweighting it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .evaluation import QueryTruth, save_truth_csv
from .features import FeatureMap, save_feature_map
from .geometry import (
    CameraIntrinsics,
    Pose2D,
    SatGeoref,
    save_georef,
    save_intrinsics,
    save_poses_csv,
    wrap_angle,
)
from .localization import QueryObservation

_BLOB_SIGMA_RANGE = (5.0, 16.0)
_BLOB_AMP_RANGE = (0.4, 1.0)
_NUISANCE_AMP_SCALE = 0.08
_NUISANCE_NOISE_SCALE = 5.0
_OUTSIDE_OFFSET_RANGE = (20.0, 35.0)
_MIN_CAM_HEIGHT = 0.1


def default_camera() -> CameraIntrinsics:
    return CameraIntrinsics(
        fx=64.0, fy=64.0, cx=64.0, cy=48.0, height=1.6, image_w=128, image_h=96
    )


@dataclass(frozen=True)
class WorldParams:
    extent: float = 200.0
    meters_per_pixel: float = 0.5
    channels: int = 6
    blobs_per_channel: int = 120
    path_radius: float = 45.0
    db_spacing: float = 10.0
    n_queries: int = 30
    n_outside: int = 15
    noise: float = 0.05
    mixing: str = "random"
    query_lateral: float = 1.0
    query_heading_deg: float = 5.0
    height_jitter: float = 0.15
    cam: CameraIntrinsics = field(default_factory=default_camera)
    seed: int = 0

    def __post_init__(self):
        if self.extent <= 0 or self.meters_per_pixel <= 0:
            raise ValueError("extent and meters_per_pixel must be positive")
        if self.channels < 1 or self.blobs_per_channel < 1:
            raise ValueError("channels and blobs_per_channel must be >= 1")
        if self.path_radius <= 0 or self.db_spacing <= 0:
            raise ValueError("path_radius and db_spacing must be positive")
        if self.path_radius + _OUTSIDE_OFFSET_RANGE[1] >= self.extent / 2:
            raise ValueError(
                "path_radius leaves no room for outside-path queries within the map"
            )
        if self.n_queries < 0 or self.n_outside < 0:
            raise ValueError("query counts must be >= 0")
        if self.noise < 0 or self.query_lateral < 0 or self.height_jitter < 0:
            raise ValueError("noise and perturbation scales must be >= 0")
        if self.query_heading_deg < 0:
            raise ValueError("query_heading_deg must be >= 0")
        if self.mixing not in ("identity", "random"):
            raise ValueError(f"mixing must be 'identity' or 'random', got {self.mixing!r}")


@dataclass(frozen=True)
class BlobField:
    """Sum-of-Gaussians field, one blob set per channel.

    Amplitudes are signed, so dense blob sets produce a zero-mean field that
    varies everywhere instead of flat background with isolated bumps.
    """

    centers: np.ndarray
    sigmas: np.ndarray
    amps: np.ndarray

    def values(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        n_channels, n_blobs = self.centers.shape[0], self.centers.shape[1]
        cx = self.centers[..., 0].reshape(-1, 1)
        cy = self.centers[..., 1].reshape(-1, 1)
        inv_two_s2 = (1.0 / (2.0 * self.sigmas**2)).reshape(-1, 1)
        amp = self.amps.reshape(-1, 1)
        out = np.empty((pts.shape[0], n_channels))
        # chunked so the (channels * blobs, points) temporary stays small
        for start in range(0, pts.shape[0], 4096):
            px = pts[start : start + 4096, 0][None, :]
            py = pts[start : start + 4096, 1][None, :]
            d2 = (px - cx) ** 2 + (py - cy) ** 2
            weights = amp * np.exp(-d2 * inv_two_s2)
            out[start : start + 4096] = (
                weights.reshape(n_channels, n_blobs, -1).sum(axis=1).T
            )
        return out


@dataclass(frozen=True)
class SyntheticSample:
    """One rendered observation with its true pose."""

    sample_id: str
    pose: Pose2D
    ground: FeatureMap
    depth: np.ndarray
    inside: bool


@dataclass(frozen=True)
class SyntheticWorld:
    params: WorldParams
    georef: SatGeoref
    sat_map: FeatureMap
    field: BlobField
    mixing: np.ndarray
    db: list[SyntheticSample]
    queries: list[SyntheticSample]
    outside: list[SyntheticSample]

    @property
    def db_poses(self) -> list[Pose2D]:
        return [s.pose for s in self.db]

    @property
    def db_ids(self) -> list[int]:
        return [int(s.sample_id) for s in self.db]

    def db_triples(self):
        """(ground, depth, pose) rows in the order build_dictionary expects."""
        return [(s.ground, s.depth, s.pose) for s in self.db]

    def observations(self) -> list[QueryObservation]:
        return [
            QueryObservation(s.ground, s.depth, self.params.cam, query_id=s.sample_id)
            for s in self.queries + self.outside
        ]

    def truths(self) -> list[QueryTruth]:
        return [
            QueryTruth(s.sample_id, s.pose, s.inside)
            for s in self.queries + self.outside
        ]


def _circle_poses(center: float, radius: float, spacing: float) -> list[Pose2D]:
    n = max(2, round(2.0 * math.pi * radius / spacing))
    poses = []
    for k in range(n):
        angle = 2.0 * math.pi * k / n
        poses.append(
            Pose2D(
                center + radius * math.cos(angle),
                center + radius * math.sin(angle),
                wrap_angle(angle + math.pi / 2.0),
            )
        )
    return poses


def _render_satellite(field: BlobField, georef: SatGeoref) -> FeatureMap:
    u = (np.arange(georef.image_w) + 0.5) * georef.meters_per_pixel + georef.origin_x
    v = georef.origin_y - (np.arange(georef.image_h) + 0.5) * georef.meters_per_pixel
    xx, yy = np.meshgrid(u, v)
    pts = np.stack([xx.ravel(), yy.ravel()], axis=1)
    vals = field.values(pts).reshape(georef.image_h, georef.image_w, -1)
    return FeatureMap(vals.astype(np.float32))


def _render_ground(
    sat: np.ndarray,
    georef: SatGeoref,
    cam: CameraIntrinsics,
    pose: Pose2D,
    cam_height: float,
    mixing: np.ndarray,
    channel_noise: np.ndarray,
    noise_img: np.ndarray,
) -> tuple[FeatureMap, np.ndarray]:
    h, w, c = cam.image_h, cam.image_w, sat.shape[2]
    rows = np.arange(h, dtype=np.float64)
    row_depth = np.zeros(h)
    below = rows > cam.cy
    row_depth[below] = cam_height * cam.fy / (rows[below] - cam.cy)
    depth32 = np.broadcast_to(row_depth[:, None], (h, w)).astype(np.float32)
    # project through the float32 depths so stored files reproduce this world
    dd = depth32.astype(np.float64)

    uu = np.broadcast_to(np.arange(w, dtype=np.float64)[None, :], (h, w))
    y_veh = -((uu - cam.cx) / cam.fx) * dd
    cos_t, sin_t = math.cos(pose.theta), math.sin(pose.theta)
    wx = pose.x + cos_t * dd - sin_t * y_veh
    wy = pose.y + sin_t * dd + cos_t * y_veh
    pu = (wx - georef.origin_x) / georef.meters_per_pixel
    pv = (georef.origin_y - wy) / georef.meters_per_pixel
    inb = (
        (dd > 0.0)
        & (pu >= 0.0)
        & (pu < georef.image_w)
        & (pv >= 0.0)
        & (pv < georef.image_h)
    )

    feats = np.zeros((h, w, c))
    iu = np.floor(pu[inb]).astype(np.int64)
    iv = np.floor(pv[inb]).astype(np.int64)
    vals = sat[iv, iu].astype(np.float64) @ mixing.T
    vals += noise_img[inb] * channel_noise[None, :]
    feats[inb] = vals
    return FeatureMap(feats.astype(np.float32)), depth32


def generate_world(params: WorldParams) -> SyntheticWorld:
    """Deterministic world, database pass, query pass, and outside-path set."""
    rng = np.random.default_rng(params.seed)
    c, b = params.channels, params.blobs_per_channel

    centers = rng.uniform(0.0, params.extent, size=(c, b, 2))
    sigmas = rng.uniform(*_BLOB_SIGMA_RANGE, size=(c, b))
    amps = rng.uniform(*_BLOB_AMP_RANGE, size=(c, b))
    amps *= rng.choice([-1.0, 1.0], size=(c, b))
    if c >= 2:
        amps[-1] *= _NUISANCE_AMP_SCALE
    field = BlobField(centers, sigmas, amps)

    mixing = np.eye(c)
    mix_draw = rng.standard_normal((c, c))
    if params.mixing == "random":
        mixing = np.eye(c) + 0.25 * mix_draw

    channel_noise = np.full(c, params.noise)
    if c >= 2:
        channel_noise[-1] *= _NUISANCE_NOISE_SCALE

    side = round(params.extent / params.meters_per_pixel)
    georef = SatGeoref(0.0, params.extent, params.meters_per_pixel, side, side)
    sat_map = _render_satellite(field, georef)

    center = params.extent / 2.0
    db_poses = _circle_poses(center, params.path_radius, params.db_spacing)
    n_db = len(db_poses)
    cam = params.cam

    db_heights = np.maximum(
        _MIN_CAM_HEIGHT,
        cam.height + params.height_jitter * rng.standard_normal(n_db),
    )
    query_base = rng.integers(0, n_db, size=params.n_queries)
    lateral = rng.uniform(-1.0, 1.0, size=params.n_queries) * params.query_lateral
    dtheta = rng.uniform(-1.0, 1.0, size=params.n_queries) * math.radians(
        params.query_heading_deg
    )
    query_heights = np.maximum(
        _MIN_CAM_HEIGHT,
        cam.height + params.height_jitter * rng.standard_normal(params.n_queries),
    )
    out_angles = rng.uniform(0.0, 2.0 * math.pi, size=params.n_outside)
    out_radii = params.path_radius + rng.uniform(
        *_OUTSIDE_OFFSET_RANGE, size=params.n_outside
    )
    out_headings = rng.uniform(-math.pi, math.pi, size=params.n_outside)
    out_heights = np.maximum(
        _MIN_CAM_HEIGHT,
        cam.height + params.height_jitter * rng.standard_normal(params.n_outside),
    )

    def render(pose, height):
        noise_img = rng.standard_normal((cam.image_h, cam.image_w, c))
        return _render_ground(
            sat_map.data, georef, cam, pose, float(height), mixing, channel_noise, noise_img
        )

    db = []
    for i, pose in enumerate(db_poses):
        ground, depth = render(pose, db_heights[i])
        db.append(SyntheticSample(str(i), pose, ground, depth, True))

    queries = []
    for j in range(params.n_queries):
        base = db_poses[query_base[j]]
        nx, ny = -math.sin(base.theta), math.cos(base.theta)
        pose = Pose2D(
            base.x + lateral[j] * nx,
            base.y + lateral[j] * ny,
            wrap_angle(base.theta + dtheta[j]),
        )
        ground, depth = render(pose, query_heights[j])
        queries.append(SyntheticSample(f"q_{j:03d}", pose, ground, depth, True))

    outside = []
    for j in range(params.n_outside):
        pose = Pose2D(
            center + out_radii[j] * math.cos(out_angles[j]),
            center + out_radii[j] * math.sin(out_angles[j]),
            wrap_angle(out_headings[j]),
        )
        ground, depth = render(pose, out_heights[j])
        outside.append(SyntheticSample(f"o_{j:03d}", pose, ground, depth, False))

    return SyntheticWorld(
        params=params,
        georef=georef,
        sat_map=sat_map,
        field=field,
        mixing=mixing,
        db=db,
        queries=queries,
        outside=outside,
    )


def write_dataset(world: SyntheticWorld, out_dir) -> None:
    """Lay the world out as the files the CLI commands consume.

    out_dir/
      sat.fmap, georef.txt
      db/poses.csv, db/intrinsics.txt, db/<id>.fmap, db/<id>.depth.fmap
      queries/truth.csv, queries/intrinsics.txt,
      queries/<id>.fmap, queries/<id>.depth.fmap
    """
    root = Path(out_dir)
    db_dir = root / "db"
    q_dir = root / "queries"
    db_dir.mkdir(parents=True, exist_ok=True)
    q_dir.mkdir(parents=True, exist_ok=True)

    save_feature_map(root / "sat.fmap", world.sat_map)
    save_georef(root / "georef.txt", world.georef)
    save_intrinsics(db_dir / "intrinsics.txt", world.params.cam)
    save_intrinsics(q_dir / "intrinsics.txt", world.params.cam)

    save_poses_csv(
        db_dir / "poses.csv", world.db_poses, [s.sample_id for s in world.db]
    )
    for s in world.db:
        save_feature_map(db_dir / f"{s.sample_id}.fmap", s.ground)
        save_feature_map(db_dir / f"{s.sample_id}.depth.fmap", FeatureMap(s.depth))

    save_truth_csv(q_dir / "truth.csv", world.truths())
    for s in world.queries + world.outside:
        save_feature_map(q_dir / f"{s.sample_id}.fmap", s.ground)
        save_feature_map(q_dir / f"{s.sample_id}.depth.fmap", FeatureMap(s.depth))
