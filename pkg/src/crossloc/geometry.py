"""Planar poses, path interpolation, and the camera-to-satellite projection
chain.

Coordinate conventions used throughout the package:

* world: x east, y north, meters; heading theta measured counter-clockwise
  from +x and wrapped to (-pi, pi].
* vehicle: x forward, y left; the camera looks along vehicle +x with zero
  pitch and roll.
* camera: z forward along the optical axis, x right, y down. "Depth" is the
  z (optical-axis) distance, not the ray length.
* satellite raster: north-up; u grows east, v grows south. Pixel (i, j)
  covers the continuous square [i, i+1) x [j, j+1), so its center maps back
  to world coordinates at origin + (i + 0.5) * meters_per_pixel.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import FormatError

_TAU = 2.0 * math.pi


def wrap_angle(theta):
    """Wrap an angle (scalar or array) to (-pi, pi]."""
    return np.pi - np.remainder(np.pi - np.asarray(theta, dtype=np.float64), _TAU)


@dataclass(frozen=True)
class Pose2D:
    """World-frame planar pose. theta is wrapped to (-pi, pi] on construction."""

    x: float
    y: float
    theta: float

    def __post_init__(self):
        for name in ("x", "y", "theta"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"Pose2D.{name} must be finite")
        object.__setattr__(self, "theta", float(wrap_angle(self.theta)))

    @property
    def xy(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=np.float64)


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics plus mounting height above the ground plane."""

    fx: float
    fy: float
    cx: float
    cy: float
    height: float
    image_w: int
    image_h: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if self.height <= 0:
            raise ValueError("camera height must be positive")
        if self.image_w < 1 or self.image_h < 1:
            raise ValueError("image dimensions must be at least 1")


@dataclass(frozen=True)
class SatGeoref:
    """Georeference of a north-up satellite raster.

    origin_x/origin_y are the world coordinates of the top-left corner of
    pixel (0, 0); v grows south, so world y decreases with v.
    """

    origin_x: float
    origin_y: float
    meters_per_pixel: float
    image_w: int
    image_h: int

    def __post_init__(self):
        if self.meters_per_pixel <= 0:
            raise ValueError("meters_per_pixel must be positive")
        if self.image_w < 1 or self.image_h < 1:
            raise ValueError("satellite dimensions must be at least 1")


@dataclass(frozen=True)
class PathSample:
    """A pose along the interpolated path.

    source_image is the database image id when the sample is an original
    database pose, or None for an interpolated sample.
    """

    pose: Pose2D
    source_image: int | None = None

    @property
    def is_interpolated(self) -> bool:
        return self.source_image is None


def delta_location(a: Pose2D, b: Pose2D) -> float:
    """Euclidean distance between pose positions; heading does not enter."""
    return math.hypot(a.x - b.x, a.y - b.y)


def interpolate_path(
    db_poses: Sequence[Pose2D],
    spacing: float,
    ids: Sequence[int] | None = None,
) -> list[PathSample]:
    """Resample a pose sequence so consecutive samples are at most `spacing`
    apart.

    Every input pose appears exactly once (tagged with its image id); extra
    samples are inserted along each segment at equal fractions. Headings are
    interpolated along the shorter arc.
    """
    if len(db_poses) < 2:
        raise ValueError("path too short")
    if spacing <= 0:
        raise ValueError(f"spacing must be positive, got {spacing}")
    if ids is None:
        ids = list(range(len(db_poses)))
    elif len(ids) != len(db_poses):
        raise ValueError("ids and db_poses must have equal length")

    samples: list[PathSample] = []
    for seg in range(len(db_poses) - 1):
        a, b = db_poses[seg], db_poses[seg + 1]
        samples.append(PathSample(a, source_image=int(ids[seg])))
        length = delta_location(a, b)
        n_intervals = max(1, math.ceil(length / spacing))
        turn = float(wrap_angle(b.theta - a.theta))
        for j in range(1, n_intervals):
            t = j / n_intervals
            samples.append(
                PathSample(
                    Pose2D(
                        a.x + t * (b.x - a.x),
                        a.y + t * (b.y - a.y),
                        a.theta + t * turn,
                    )
                )
            )
    samples.append(PathSample(db_poses[-1], source_image=int(ids[-1])))
    return samples


def pixel_depth_to_world(
    pixel: tuple[float, float],
    depth: float,
    cam: CameraIntrinsics,
    pose: Pose2D,
) -> tuple[float, float]:
    """Back-project an image pixel with known z-depth to world x/y.

    The vertical camera coordinate is dropped: only the ground-plane location
    of the observed point is returned.
    """
    u, v = pixel
    if not (0 <= u < cam.image_w and 0 <= v < cam.image_h):
        raise ValueError(f"pixel {pixel} outside image {cam.image_w}x{cam.image_h}")
    if not (math.isfinite(depth) and depth > 0):
        raise ValueError(f"non-positive depth {depth}")
    x_cam = (u - cam.cx) / cam.fx * depth
    # camera z -> vehicle forward, camera x (right) -> vehicle -y (left is +y)
    x_veh = depth
    y_veh = -x_cam
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    return (pose.x + c * x_veh - s * y_veh, pose.y + s * x_veh + c * y_veh)


def pixel_depth_to_world_batch(
    pixels: np.ndarray,
    depths: np.ndarray,
    cam: CameraIntrinsics,
    pose: Pose2D,
) -> np.ndarray:
    """Vectorized pixel_depth_to_world over (n, 2) pixels and (n,) depths.

    Depth validity is the caller's concern; rows are transformed as given.
    """
    u = np.asarray(pixels, dtype=np.float64)[:, 0]
    z = np.asarray(depths, dtype=np.float64)
    x_veh = z
    y_veh = -((u - cam.cx) / cam.fx * z)
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    out = np.empty((u.shape[0], 2), dtype=np.float64)
    out[:, 0] = pose.x + c * x_veh - s * y_veh
    out[:, 1] = pose.y + s * x_veh + c * y_veh
    return out


def world_to_sat_pixel(
    point: tuple[float, float], georef: SatGeoref
) -> tuple[float, float] | None:
    """Map a world point to continuous satellite pixel coordinates.

    Returns None when the point falls outside the raster; out of bounds is a
    normal outcome, not an error.
    """
    u = (point[0] - georef.origin_x) / georef.meters_per_pixel
    v = (georef.origin_y - point[1]) / georef.meters_per_pixel
    if 0.0 <= u < georef.image_w and 0.0 <= v < georef.image_h:
        return (u, v)
    return None


def world_to_sat_pixel_batch(
    points: np.ndarray, georef: SatGeoref
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized world_to_sat_pixel.

    Returns (uv, valid): uv is (n, 2) continuous pixel coordinates (rows with
    valid=False are undefined), valid marks in-bounds points.
    """
    pts = np.asarray(points, dtype=np.float64)
    uv = np.empty_like(pts)
    uv[:, 0] = (pts[:, 0] - georef.origin_x) / georef.meters_per_pixel
    uv[:, 1] = (georef.origin_y - pts[:, 1]) / georef.meters_per_pixel
    valid = (
        (uv[:, 0] >= 0.0)
        & (uv[:, 0] < georef.image_w)
        & (uv[:, 1] >= 0.0)
        & (uv[:, 1] < georef.image_h)
    )
    return uv, valid


def sat_pixel_center_to_world(iu: int, iv: int, georef: SatGeoref) -> tuple[float, float]:
    """World coordinates of the center of integer satellite pixel (iu, iv)."""
    return (
        georef.origin_x + (iu + 0.5) * georef.meters_per_pixel,
        georef.origin_y - (iv + 0.5) * georef.meters_per_pixel,
    )


# ---------------------------------------------------------------------------
# file formats: pose CSV (id,x,y,theta) and key=value georef / intrinsics


def save_poses_csv(path, poses: Sequence[Pose2D], ids: Sequence | None = None) -> None:
    if ids is None:
        ids = list(range(len(poses)))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "x", "y", "theta"])
        for i, p in zip(ids, poses):
            writer.writerow([i, repr(p.x), repr(p.y), repr(p.theta)])


def load_poses_csv(path) -> tuple[list, list[Pose2D]]:
    """Read a pose table. Returns (ids, poses); a header row is optional."""
    ids, poses = [], []
    with open(path, newline="") as fh:
        for row_num, row in enumerate(csv.reader(fh)):
            if not row or row[0].startswith("#"):
                continue
            if len(row) != 4:
                raise FormatError(f"{path}: row {row_num} has {len(row)} fields, expected 4")
            if row_num == 0 and row[0].strip().lower() == "id":
                continue
            try:
                pose = Pose2D(float(row[1]), float(row[2]), float(row[3]))
            except ValueError as exc:
                raise FormatError(f"{path}: row {row_num}: {exc}") from exc
            ids.append(row[0].strip())
            poses.append(pose)
    if not poses:
        raise FormatError(f"{path}: no pose rows")
    return ids, poses


def _parse_kv_file(path) -> dict[str, str]:
    out: dict[str, str] = {}
    for line_num, line in enumerate(Path(path).read_text().splitlines()):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise FormatError(f"{path}: line {line_num + 1}: expected key=value")
        key, _, value = stripped.partition("=")
        out[key.strip()] = value.strip()
    return out


def _kv_fields(path, fields: Iterable[tuple[str, type]]) -> dict:
    raw = _parse_kv_file(path)
    parsed = {}
    for key, typ in fields:
        if key not in raw:
            raise FormatError(f"{path}: missing key '{key}'")
        try:
            parsed[key] = typ(raw[key])
        except ValueError as exc:
            raise FormatError(f"{path}: key '{key}': {exc}") from exc
    expected = {key for key, _ in fields}
    unknown = set(raw) - expected
    if unknown:
        raise FormatError(f"{path}: unknown keys {sorted(unknown)}")
    return parsed


_GEOREF_FIELDS = [
    ("origin_x", float),
    ("origin_y", float),
    ("meters_per_pixel", float),
    ("image_w", int),
    ("image_h", int),
]

_INTRINSICS_FIELDS = [
    ("fx", float),
    ("fy", float),
    ("cx", float),
    ("cy", float),
    ("height", float),
    ("image_w", int),
    ("image_h", int),
]


def load_georef(path) -> SatGeoref:
    return SatGeoref(**_kv_fields(path, _GEOREF_FIELDS))


def save_georef(path, georef: SatGeoref) -> None:
    lines = [f"{key}={getattr(georef, key)!r}" if isinstance(getattr(georef, key), float)
             else f"{key}={getattr(georef, key)}" for key, _ in _GEOREF_FIELDS]
    Path(path).write_text("\n".join(lines) + "\n")


def load_intrinsics(path) -> CameraIntrinsics:
    return CameraIntrinsics(**_kv_fields(path, _INTRINSICS_FIELDS))


def save_intrinsics(path, cam: CameraIntrinsics) -> None:
    lines = [f"{key}={getattr(cam, key)!r}" if isinstance(getattr(cam, key), float)
             else f"{key}={getattr(cam, key)}" for key, _ in _INTRINSICS_FIELDS]
    Path(path).write_text("\n".join(lines) + "\n")
