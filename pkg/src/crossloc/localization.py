"""Query localization along a known path by ground/satellite co-occurrence.

For a query observation and each candidate pose along the interpolated path,
grid samples of the query's feature map are back-projected through the
candidate pose and paired with satellite features. Each pair is scored by
retrieving the M nearest dictionary entries of the projected ground vector
(in the projected ground index) and of the projected satellite vector (in the
projected satellite index); entries retrieved on both sides contribute the
inverse product of their two retrieval distances, with every distance floored
at 1e-6. Candidate scores are normalized into a posterior and the estimate is
the posterior-weighted average of the top three candidates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dictionary import Dictionary, as_depth_array
from .features import (
    FeatureMap,
    GridSpec,
    apply_standardization,
    extract_features,
    sample_grid_arrays,
)
from .geometry import (
    CameraIntrinsics,
    PathSample,
    Pose2D,
    interpolate_path,
)
from .learning import Projection
from .neighbors import NeighborIndex, batch_knn, knn

DISTANCE_FLOOR = 1e-6
_GO_FLOOR = 1e-12
TOP_K = 3


@dataclass(frozen=True)
class QueryObservation:
    """One query: a ground image (or precomputed feature map), its aligned
    depth map, and the camera intrinsics."""

    ground: object
    depth: object
    cam: CameraIntrinsics
    query_id: str = ""


@dataclass(frozen=True)
class Candidate:
    pose: Pose2D
    source_image: int | None
    pair_count: int
    raw_score: float
    posterior: float
    pairs: list | None = None


@dataclass(frozen=True)
class LocalizationResult:
    query_id: str
    estimate: Pose2D
    candidates: list[Candidate]
    confidence: float
    inlier: bool
    top_indices: np.ndarray

    @property
    def posterior(self) -> np.ndarray:
        return np.array([c.posterior for c in self.candidates])

    @property
    def raw_scores(self) -> np.ndarray:
        return np.array([c.raw_score for c in self.candidates])


def generate_candidates(
    db_poses: Sequence[Pose2D], spacing: float, ids: Sequence[int] | None = None
) -> list[PathSample]:
    """Candidate poses: every database pose plus interpolants <= spacing apart."""
    return interpolate_path(db_poses, spacing, ids=ids)


def prepare_query_map(obs: QueryObservation, dictionary: Dictionary) -> FeatureMap:
    """Extract/standardize the query's features exactly as the dictionary did."""
    fmap = extract_features(obs.ground, dictionary.feature_config)
    fmap = apply_standardization(fmap, dictionary.feature_config)
    if fmap.channels != dictionary.ground_dim:
        raise ValueError(
            f"query features have {fmap.channels} channels, dictionary ground "
            f"vectors have {dictionary.ground_dim}"
        )
    if (fmap.width, fmap.height) != (obs.cam.image_w, obs.cam.image_h):
        raise ValueError(
            f"query map is {fmap.width}x{fmap.height}, camera says "
            f"{obs.cam.image_w}x{obs.cam.image_h}"
        )
    return fmap


def score_from_hits(ground_hits, sat_hits, floor: float = DISTANCE_FLOOR) -> float:
    """Co-occurrence score of two retrieval lists.

    Sums 1 / (d_ground * d_sat) over entry ids present in both lists, each
    distance floored. Ids are unique within a list, so the intersection is a
    set of (hit, hit) pairs.
    """
    ground_map = {}
    for hit in ground_hits:
        entry_id, dist = (hit.id, hit.distance) if hasattr(hit, "id") else hit
        ground_map[int(entry_id)] = max(float(dist), floor)
    total = 0.0
    for hit in sat_hits:
        entry_id, dist = (hit.id, hit.distance) if hasattr(hit, "id") else hit
        gd = ground_map.get(int(entry_id))
        if gd is not None:
            total += 1.0 / (gd * max(float(dist), floor))
    return total


def cooccurrence_score(
    g, s, dictionary: Dictionary, w_ground: Projection, w_sat: Projection, m: int
) -> float:
    """Score one (ground vector, satellite vector) pair against the dictionary.

    Builds the projected indexes on the fly; use Localizer for repeated
    scoring against the same dictionary/projections.
    """
    pg = NeighborIndex(dictionary.ids, w_ground.apply(dictionary.ground_matrix()))
    ps = NeighborIndex(dictionary.ids, w_sat.apply(dictionary.sat_matrix()))
    g_hits = knn(pg, w_ground.apply(np.asarray(g, dtype=np.float64)), m)
    s_hits = knn(ps, w_sat.apply(np.asarray(s, dtype=np.float64)), m)
    return score_from_hits(g_hits, s_hits)


def posterior_over_candidates(raw_scores) -> np.ndarray:
    """Normalize non-negative scores to a distribution; all-zero scores fall
    back to uniform."""
    arr = np.asarray(raw_scores, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("raw_scores must be a non-empty 1-D array")
    if not np.all(np.isfinite(arr)) or np.any(arr < 0.0):
        raise ValueError("raw_scores must be finite and non-negative")
    total = arr.sum()
    if total <= 0.0:
        return np.full(arr.size, 1.0 / arr.size)
    return arr / total


def _top_indices(posterior: np.ndarray, k: int = TOP_K) -> np.ndarray:
    # stable sort on the negated posterior keeps lower path indices first
    # among ties
    return np.argsort(-posterior, kind="stable")[: min(k, posterior.size)]


def _weighted_pose(
    poses: Sequence[Pose2D], weights: np.ndarray
) -> Pose2D:
    w = np.asarray(weights, dtype=np.float64)
    total = w.sum()
    if total <= 0.0:
        w = np.full(w.size, 1.0 / w.size)
    else:
        w = w / total
    x = sum(wi * p.x for wi, p in zip(w, poses))
    y = sum(wi * p.y for wi, p in zip(w, poses))
    sin_sum = sum(wi * math.sin(p.theta) for wi, p in zip(w, poses))
    cos_sum = sum(wi * math.cos(p.theta) for wi, p in zip(w, poses))
    if sin_sum == 0.0 and cos_sum == 0.0:
        theta = poses[0].theta
    else:
        theta = math.atan2(sin_sum, cos_sum)
    return Pose2D(x, y, theta)


def estimate_location(posterior, candidates: Sequence) -> Pose2D:
    """Posterior-weighted average of the top three candidates (weights
    renormalized over the three; heading via weighted circular mean)."""
    post = np.asarray(posterior, dtype=np.float64)
    if post.size != len(candidates):
        raise ValueError("posterior and candidates must have equal length")
    top = _top_indices(post)
    poses = [c.pose if hasattr(c, "pose") else c for c in (candidates[i] for i in top)]
    return _weighted_pose(poses, post[top])


def classify_query(confidence: float, threshold: float) -> bool:
    return confidence >= threshold


def project_query_pairs(
    obs: QueryObservation,
    pose: Pose2D,
    dictionary: Dictionary,
    grid: GridSpec | None = None,
) -> list[tuple[np.ndarray, np.ndarray]]:
    """(ground vector, satellite vector) pairs for one candidate pose.

    Grid samples with invalid depth, excessive planar range, or an
    out-of-bounds satellite projection are dropped; zero surviving pairs is a
    normal outcome (the candidate scores 0).
    """
    grid = grid if grid is not None else dictionary.grid
    gmap = prepare_query_map(obs, dictionary)
    pixels, gvecs, depths = _query_samples(gmap, obs, dictionary, grid)
    sel, svecs = _sat_vectors_for_pose(
        pose, pixels, depths, obs.cam, dictionary
    )
    return [(gvecs[i], svecs[j]) for j, i in enumerate(sel)]


def _query_samples(gmap, obs, dictionary, grid):
    """Grid samples surviving the pose-independent filters (depth validity
    and planar range)."""
    pixels, gvecs = sample_grid_arrays(gmap, grid)
    depth = as_depth_array(obs.depth)
    if depth.shape != (gmap.height, gmap.width):
        raise ValueError(
            f"depth shape {depth.shape} does not match query map "
            f"{gmap.height}x{gmap.width}"
        )
    if pixels.shape[0] == 0:
        return pixels, gvecs, np.empty(0)
    depths = depth[pixels[:, 1], pixels[:, 0]]
    keep = np.isfinite(depths) & (depths > 0.0)
    pixels, gvecs, depths = pixels[keep], gvecs[keep], depths[keep]
    if pixels.shape[0]:
        y_veh = -((pixels[:, 0] - obs.cam.cx) / obs.cam.fx * depths)
        keep = np.hypot(depths, y_veh) <= dictionary.max_range
        pixels, gvecs, depths = pixels[keep], gvecs[keep], depths[keep]
    return pixels, gvecs, depths


def _sat_vectors_for_pose(pose, pixels, depths, cam, dictionary):
    """Satellite vectors for samples that project inside the raster at this
    pose. Returns (sample indices, vectors)."""
    if pixels.shape[0] == 0:
        return np.empty(0, dtype=np.int64), np.empty((0, dictionary.sat_dim))
    from .geometry import pixel_depth_to_world_batch, world_to_sat_pixel_batch

    world = pixel_depth_to_world_batch(pixels, depths, cam, pose)
    uv, inb = world_to_sat_pixel_batch(world, dictionary.georef)
    sel = np.nonzero(inb)[0]
    iu = np.floor(uv[sel, 0]).astype(np.int64)
    iv = np.floor(uv[sel, 1]).astype(np.int64)
    return sel, dictionary.sat_map.data[iv, iu].astype(np.float64)


class Localizer:
    """Reusable localization engine: projected indexes and candidates are
    built once, then shared across queries."""

    def __init__(
        self,
        dictionary: Dictionary,
        db_poses: Sequence[Pose2D],
        w_ground: Projection | None = None,
        w_sat: Projection | None = None,
        db_ids: Sequence[int] | None = None,
        candidate_spacing: float = 1.0,
        knn_m: int = 10,
        check_budget: int | None = None,
        inlier_threshold: float = 0.0,
        grid: GridSpec | None = None,
    ):
        self.dictionary = dictionary
        self.w_ground = w_ground if w_ground is not None else Projection.identity(dictionary.ground_dim)
        self.w_sat = w_sat if w_sat is not None else Projection.identity(dictionary.sat_dim)
        for name, proj, dim in (
            ("w_ground", self.w_ground, dictionary.ground_dim),
            ("w_sat", self.w_sat, dictionary.sat_dim),
        ):
            if proj.in_dim != dim:
                raise ValueError(
                    f"{name} expects {proj.in_dim}-dim features, dictionary has {dim}"
                )
            digest = dictionary.feature_config.digest()
            if proj.config_digest and proj.config_digest != digest:
                raise ValueError(
                    f"{name} was trained against a different feature configuration "
                    f"({proj.config_digest[:12]}... vs {digest[:12]}...)"
                )
        self.db_poses = list(db_poses)
        self.candidates = generate_candidates(self.db_poses, candidate_spacing, ids=db_ids)
        self.knn_m = int(knn_m)
        if self.knn_m < 1:
            raise ValueError("knn_m must be >= 1")
        self.check_budget = check_budget
        self.inlier_threshold = float(inlier_threshold)
        self.grid = grid if grid is not None else dictionary.grid
        self._pg_index = NeighborIndex(
            dictionary.ids, self.w_ground.apply(dictionary.ground_matrix())
        )
        self._ps_index = NeighborIndex(
            dictionary.ids, self.w_sat.apply(dictionary.sat_matrix())
        )
        self._m_eff = min(self.knn_m, len(dictionary))
        self._cand_xy = np.array([[c.pose.x, c.pose.y] for c in self.candidates])
        self._cand_cos = np.array([math.cos(c.pose.theta) for c in self.candidates])
        self._cand_sin = np.array([math.sin(c.pose.theta) for c in self.candidates])
        # satellite retrieval depends only on the pixel, so rows are memoized
        # across queries; values are (ids, floored inverse distances)
        self._sat_cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    def _retrieve(self, index: NeighborIndex, queries: np.ndarray):
        if queries.shape[0] == 0:
            return (
                np.empty((0, self._m_eff), dtype=np.int64),
                np.empty((0, self._m_eff)),
            )
        if self.check_budget is None:
            return batch_knn(index, queries, self._m_eff)
        ids = np.empty((queries.shape[0], self._m_eff), dtype=np.int64)
        dists = np.empty((queries.shape[0], self._m_eff))
        for row in range(queries.shape[0]):
            hits = index.query(queries[row], self._m_eff, check_budget=self.check_budget)
            ids[row] = [h.id for h in hits]
            dists[row] = [h.distance for h in hits]
        return ids, dists

    def _sat_rows(self, unique_keys: np.ndarray):
        """Retrieval rows for unique satellite pixel keys, via the memo.

        Each row is a pure function of the pixel's feature vector, so cached
        and freshly computed rows are interchangeable.
        """
        cache = self._sat_cache
        key_list = unique_keys.tolist()
        missing = [k for k in key_list if k not in cache]
        if missing:
            width = self.dictionary.georef.image_w
            marr = np.asarray(missing, dtype=np.int64)
            svecs = self.dictionary.sat_map.data[marr // width, marr % width].astype(
                np.float64
            )
            ids, dists = self._retrieve(self._ps_index, self.w_sat.apply(svecs))
            inv = 1.0 / np.maximum(dists, DISTANCE_FLOOR)
            # single update keeps concurrent localize() calls consistent
            cache.update(
                (k, (ids[i], inv[i])) for i, k in enumerate(missing)
            )
        s_ids = np.stack([cache[k][0] for k in key_list])
        s_inv = np.stack([cache[k][1] for k in key_list])
        return s_ids, s_inv

    def localize(self, obs: QueryObservation) -> LocalizationResult:
        gmap = prepare_query_map(obs, self.dictionary)
        pixels, gvecs, depths = _query_samples(gmap, obs, self.dictionary, self.grid)
        n_cand = len(self.candidates)
        raw = np.zeros(n_cand)
        pair_counts = np.zeros(n_cand, dtype=np.int64)
        if pixels.shape[0]:
            g_ids, g_dists = self._retrieve(self._pg_index, self.w_ground.apply(gvecs))
            g_inv = 1.0 / np.maximum(g_dists, DISTANCE_FLOOR)

            georef = self.dictionary.georef
            cam = obs.cam
            x_veh = depths
            y_veh = -((pixels[:, 0] - cam.cx) / cam.fx * depths)
            wx = (
                self._cand_xy[:, 0:1]
                + self._cand_cos[:, None] * x_veh[None, :]
                - self._cand_sin[:, None] * y_veh[None, :]
            )
            wy = (
                self._cand_xy[:, 1:2]
                + self._cand_sin[:, None] * x_veh[None, :]
                + self._cand_cos[:, None] * y_veh[None, :]
            )
            pu = (wx - georef.origin_x) / georef.meters_per_pixel
            pv = (georef.origin_y - wy) / georef.meters_per_pixel
            inb = (pu >= 0.0) & (pu < georef.image_w) & (pv >= 0.0) & (pv < georef.image_h)

            cand_idx, samp_idx = np.nonzero(inb)
            if cand_idx.size:
                iu = np.floor(pu[cand_idx, samp_idx]).astype(np.int64)
                iv = np.floor(pv[cand_idx, samp_idx]).astype(np.int64)
                pixel_key = iv * georef.image_w + iu
                unique_keys, inverse = np.unique(pixel_key, return_inverse=True)
                s_ids_u, s_inv_u = self._sat_rows(unique_keys)

                gi = g_ids[samp_idx]
                ginv = g_inv[samp_idx]
                si = s_ids_u[inverse]
                sinv = s_inv_u[inverse]
                match = gi[:, :, None] == si[:, None, :]
                contrib = (ginv[:, :, None] * sinv[:, None, :] * match).sum(axis=(1, 2))
                raw = np.bincount(cand_idx, weights=contrib, minlength=n_cand)
                pair_counts = np.bincount(cand_idx, minlength=n_cand)

        posterior = posterior_over_candidates(raw)
        top = _top_indices(posterior)
        poses = [self.candidates[i].pose for i in top]
        estimate = _weighted_pose(poses, posterior[top])
        per_pair = np.divide(
            raw, pair_counts, out=np.zeros_like(raw), where=pair_counts > 0
        )
        confidence = float(per_pair[top].mean())
        inlier = classify_query(confidence, self.inlier_threshold)
        candidates = [
            Candidate(
                pose=c.pose,
                source_image=c.source_image,
                pair_count=int(pair_counts[i]),
                raw_score=float(raw[i]),
                posterior=float(posterior[i]),
            )
            for i, c in enumerate(self.candidates)
        ]
        return LocalizationResult(
            query_id=obs.query_id,
            estimate=estimate,
            candidates=candidates,
            confidence=confidence,
            inlier=inlier,
            top_indices=top,
        )

    def localize_many(self, observations, threads: int = 1) -> list[LocalizationResult]:
        observations = list(observations)
        if threads <= 1 or len(observations) <= 1:
            return [self.localize(obs) for obs in observations]
        from concurrent.futures import ThreadPoolExecutor

        # results are collected by input position, so threading cannot
        # reorder anything
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(self.localize, observations))


def localize_query(
    obs: QueryObservation,
    dictionary: Dictionary,
    db_poses: Sequence[Pose2D],
    w_ground: Projection | None = None,
    w_sat: Projection | None = None,
    candidate_spacing: float = 1.0,
    knn_m: int = 10,
    inlier_threshold: float = 0.0,
) -> LocalizationResult:
    """One-shot convenience wrapper around Localizer."""
    engine = Localizer(
        dictionary,
        db_poses,
        w_ground=w_ground,
        w_sat=w_sat,
        candidate_spacing=candidate_spacing,
        knn_m=knn_m,
        inlier_threshold=inlier_threshold,
    )
    return engine.localize(obs)


def localize_ground_only(
    obs: QueryObservation,
    dictionary: Dictionary,
    db_poses: Sequence[Pose2D],
    w_ground: Projection | None = None,
    db_ids: Sequence[int] | None = None,
    inlier_threshold: float = 0.0,
) -> LocalizationResult:
    """Whole-image retrieval ablation: no satellite side, no path candidates.

    Each database image is summarized by the mean of its projected dictionary
    ground vectors; the query by the mean of its projected valid grid samples.
    The estimate is the inverse-distance-weighted average of the top three
    database image poses.
    """
    w_ground = w_ground if w_ground is not None else Projection.identity(dictionary.ground_dim)
    if db_ids is None:
        db_ids = list(range(len(db_poses)))
    pose_by_id = {int(i): p for i, p in zip(db_ids, db_poses)}

    gmap = prepare_query_map(obs, dictionary)
    pixels, gvecs, _ = _query_samples(gmap, obs, dictionary, dictionary.grid)
    if pixels.shape[0] == 0:
        raise ValueError("query has no usable grid samples")
    qdesc = w_ground.apply(gvecs).mean(axis=0)

    img_ids = np.unique(dictionary.source_images)
    missing = [int(i) for i in img_ids if int(i) not in pose_by_id]
    if missing:
        raise ValueError(f"db_poses missing image ids {missing}")
    projected = w_ground.apply(dictionary.ground_matrix())
    descs = np.stack(
        [projected[dictionary.source_images == i].mean(axis=0) for i in img_ids]
    )
    counts = np.array([(dictionary.source_images == i).sum() for i in img_ids])
    diffs = descs - qdesc
    dists = np.sqrt((diffs * diffs).sum(axis=1))
    inv = 1.0 / np.maximum(dists, _GO_FLOOR)
    posterior = inv / inv.sum()

    order = np.lexsort((img_ids, dists))[: min(TOP_K, img_ids.size)]
    top_poses = [pose_by_id[int(img_ids[i])] for i in order]
    estimate = _weighted_pose(top_poses, inv[order])
    confidence = float(1.0 / max(dists[order].mean(), _GO_FLOOR))

    candidates = [
        Candidate(
            pose=pose_by_id[int(img_ids[i])],
            source_image=int(img_ids[i]),
            pair_count=int(counts[i]),
            raw_score=float(inv[i]),
            posterior=float(posterior[i]),
        )
        for i in range(img_ids.size)
    ]
    return LocalizationResult(
        query_id=obs.query_id,
        estimate=estimate,
        candidates=candidates,
        confidence=confidence,
        inlier=classify_query(confidence, inlier_threshold),
        top_indices=order,
    )
