import math

import numpy as np
import pytest

from crossloc.dictionary import Dictionary
from crossloc.features import FeatureConfig, FeatureMap, GridSpec
from crossloc.geometry import CameraIntrinsics, Pose2D, SatGeoref, delta_location
from crossloc.learning import Projection
from crossloc.localization import (
    DISTANCE_FLOOR,
    Localizer,
    QueryObservation,
    classify_query,
    cooccurrence_score,
    estimate_location,
    generate_candidates,
    localize_ground_only,
    localize_query,
    posterior_over_candidates,
    prepare_query_map,
    project_query_pairs,
    score_from_hits,
)
from crossloc.neighbors import NeighborHit, NeighborIndex, knn

EXTERNAL = FeatureConfig(extractors=("external",), standardize=False)


class TestScoreFromHits:
    def test_hand_case(self):
        ground = [(1, 0.5), (2, 1.0), (3, 2.0)]
        sat = [(2, 0.2), (3, 0.4), (5, 1.0)]
        # shared ids 2 and 3: 1/(1.0*0.2) + 1/(2.0*0.4) = 5 + 1.25
        assert score_from_hits(ground, sat) == 6.25

    def test_disjoint_is_zero(self):
        assert score_from_hits([(1, 0.5)], [(2, 0.5)]) == 0.0

    def test_double_exact_hits_floor(self):
        assert score_from_hits([(7, 0.0)], [(7, 0.0)]) == pytest.approx(1e12)

    def test_one_sided_floor(self):
        assert score_from_hits([(7, 0.0)], [(7, 2.0)]) == pytest.approx(1.0 / (DISTANCE_FLOOR * 2.0))

    def test_accepts_neighbor_hits(self):
        ground = [NeighborHit(id=1, distance=0.5), NeighborHit(id=2, distance=1.0)]
        sat = [NeighborHit(id=2, distance=0.2)]
        assert score_from_hits(ground, sat) == pytest.approx(5.0)

    def test_order_invariant(self, rng):
        ground = [(i, float(d)) for i, d in zip(range(8), rng.uniform(0.1, 2.0, 8))]
        sat = [(i, float(d)) for i, d in zip(range(4, 12), rng.uniform(0.1, 2.0, 8))]
        base = score_from_hits(ground, sat)
        perm = rng.permutation(8)
        shuffled = score_from_hits([ground[i] for i in perm], [sat[i] for i in perm])
        assert shuffled == pytest.approx(base, rel=1e-12)

    def test_larger_distance_scores_less(self):
        near = score_from_hits([(1, 0.5)], [(1, 0.5)])
        far = score_from_hits([(1, 0.5)], [(1, 0.6)])
        assert far < near


class TestPosterior:
    def test_normalization(self):
        assert posterior_over_candidates([2.0, 3.0, 5.0]).tolist() == [0.2, 0.3, 0.5]

    def test_single_candidate(self):
        assert posterior_over_candidates([7.0]).tolist() == [1.0]

    def test_all_zero_falls_back_to_uniform(self):
        post = posterior_over_candidates(np.zeros(4))
        assert post.tolist() == [0.25, 0.25, 0.25, 0.25]

    def test_sums_to_one(self, rng):
        for _ in range(50):
            post = posterior_over_candidates(rng.uniform(0, 100, rng.integers(1, 40)))
            assert abs(post.sum() - 1.0) <= 1e-12

    def test_validation(self):
        with pytest.raises(ValueError):
            posterior_over_candidates([])
        with pytest.raises(ValueError):
            posterior_over_candidates([[1.0, 2.0]])
        with pytest.raises(ValueError):
            posterior_over_candidates([1.0, -0.5])
        with pytest.raises(ValueError):
            posterior_over_candidates([1.0, np.nan])


class TestEstimateLocation:
    def test_weighted_average(self):
        poses = [Pose2D(0, 0, 0), Pose2D(1, 0, 0), Pose2D(2, 0, 0)]
        est = estimate_location([0.5, 0.3, 0.2], poses)
        assert est.x == pytest.approx(0.7)
        assert est.y == 0.0
        assert est.theta == 0.0

    def test_renormalizes_over_top_three(self):
        poses = [Pose2D(x, 0, 0) for x in (0.0, 1.0, 2.0, 50.0)]
        # the fourth candidate is below the top three and must not contribute
        est = estimate_location([0.4, 0.3, 0.2, 0.1], poses)
        expected = (0.4 * 0.0 + 0.3 * 1.0 + 0.2 * 2.0) / 0.9
        assert est.x == pytest.approx(expected)

    def test_dominant_candidate(self):
        poses = [Pose2D(5, -3, 1.0), Pose2D(0, 0, 0), Pose2D(9, 9, 2.0)]
        est = estimate_location([1.0, 0.0, 0.0], poses)
        assert (est.x, est.y, est.theta) == (5.0, -3.0, 1.0)

    def test_two_candidates(self):
        est = estimate_location([0.5, 0.5], [Pose2D(0, 0, 0), Pose2D(4, 2, 0)])
        assert (est.x, est.y) == (2.0, 1.0)

    def test_tie_prefers_lower_path_index(self):
        poses = [Pose2D(x, 0, 0) for x in (0.0, 10.0, 20.0, 30.0)]
        est = estimate_location([0.25, 0.25, 0.25, 0.25], poses)
        assert est.x == pytest.approx(10.0)  # mean of the first three

    def test_heading_circular_mean(self):
        poses = [Pose2D(0, 0, 3.0), Pose2D(0, 0, -3.0)]
        est = estimate_location([0.5, 0.5], poses)
        assert est.theta == pytest.approx(math.pi)

    def test_translation_equivariance(self, rng):
        poses = [Pose2D(x, y, t) for x, y, t in rng.uniform(-5, 5, (6, 3))]
        post = rng.uniform(0, 1, 6)
        base = estimate_location(post, poses)
        moved = estimate_location(post, [Pose2D(p.x + 3, p.y - 2, p.theta) for p in poses])
        assert (moved.x, moved.y) == pytest.approx((base.x + 3, base.y - 2))
        assert moved.theta == base.theta

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            estimate_location([1.0], [Pose2D(0, 0, 0), Pose2D(1, 0, 0)])


class TestClassifyQuery:
    def test_threshold_inclusive(self):
        assert classify_query(0.5, 0.5)
        assert classify_query(0.6, 0.5)
        assert not classify_query(0.49, 0.5)


class TestGenerateCandidates:
    def test_includes_db_poses_and_interpolants(self):
        poses = [Pose2D(0, 0, 0), Pose2D(10, 0, 0)]
        cands = generate_candidates(poses, 5.0, ids=[3, 4])
        assert len(cands) == 3
        assert cands[0].source_image == 3
        assert cands[1].source_image is None
        assert cands[1].is_interpolated


def _constant_query(vec, cam, depth_value=5.0):
    data = np.broadcast_to(
        np.asarray(vec, dtype=np.float32), (cam.image_h, cam.image_w, len(vec))
    ).copy()
    depth = np.full((cam.image_h, cam.image_w), depth_value)
    return QueryObservation(FeatureMap(data), depth, cam)


def _manual_dictionary(rng, n_images=3, per_image=2, dim=2):
    """Dictionary assembled directly from arrays, for ground-only tests."""
    n = n_images * per_image
    ground = rng.uniform(-1, 1, (n, dim)).astype(np.float32)
    return Dictionary(
        ids=np.arange(n),
        source_images=np.repeat(np.arange(n_images), per_image),
        locations=np.tile(np.array([[2.0, 2.0]]), (n, 1)),
        ground_feats=ground,
        sat_feats=rng.uniform(-1, 1, (n, dim)).astype(np.float32),
        sat_map=FeatureMap(rng.uniform(-1, 1, (4, 4, dim)).astype(np.float32)),
        georef=SatGeoref(origin_x=0.0, origin_y=4.0, meters_per_pixel=1.0, image_w=4, image_h=4),
        feature_config=EXTERNAL,
        grid=GridSpec(interval=4, margin=2),
        max_range=50.0,
    )


TINY_CAM = CameraIntrinsics(fx=8.0, fy=8.0, cx=8.0, cy=6.0, height=1.0, image_w=16, image_h=12)


def _rebuild(d):
    """Fresh Dictionary over (possibly mutated) arrays so indexes match."""
    return Dictionary(
        ids=d.ids, source_images=d.source_images, locations=d.locations,
        ground_feats=d.ground_feats, sat_feats=d.sat_feats, sat_map=d.sat_map,
        georef=d.georef, feature_config=d.feature_config, grid=d.grid,
        max_range=d.max_range,
    )


class TestGroundOnly:
    def test_exact_descriptor_match_wins(self, rng):
        d = _manual_dictionary(rng)
        # image 1's entries are all the same vector, so its descriptor equals
        # it exactly in any precision and the query matches at distance zero
        v = np.array([0.25, -0.5], dtype=np.float32)
        d.ground_feats[d.source_images == 1] = v
        d2 = _rebuild(d)
        db_poses = [Pose2D(0, 0, 0), Pose2D(10, 0, 1.0), Pose2D(20, 0, 0)]
        obs = _constant_query(v, TINY_CAM)
        result = localize_ground_only(obs, d2, db_poses)
        assert result.top_indices[0] == 1
        assert int(np.argmax(result.posterior)) == 1
        assert result.candidates[1].raw_score == pytest.approx(1e12)
        assert (result.estimate.x, result.estimate.y) == pytest.approx((10.0, 0.0), abs=1e-9)
        assert result.estimate.theta == pytest.approx(1.0, abs=1e-9)
        # confidence is the inverse of the mean top-three descriptor distance
        descs = np.stack(
            [d2.ground_matrix()[d2.source_images == i].mean(axis=0) for i in range(3)]
        )
        dists = np.sqrt(((descs - v.astype(np.float64)) ** 2).sum(axis=1))
        assert result.confidence == pytest.approx(1.0 / np.sort(dists).mean(), rel=1e-9)

    def test_equidistant_images_average(self, rng):
        d = _manual_dictionary(rng, n_images=3)
        # descriptors on an equilateral triangle around the origin; the origin
        # query is (nearly) equidistant, so the estimate is the pose centroid
        tri = np.array(
            [[1.0, 0.0], [-0.5, np.sqrt(3) / 2], [-0.5, -np.sqrt(3) / 2]],
            dtype=np.float32,
        )
        d.ground_feats[:] = np.repeat(tri, 2, axis=0)
        d2 = _rebuild(d)
        obs = _constant_query([0.0, 0.0], TINY_CAM)
        db_poses = [Pose2D(0, 0, 0), Pose2D(6, 0, 0), Pose2D(0, 6, 0)]
        result = localize_ground_only(obs, d2, db_poses)
        assert result.estimate.x == pytest.approx(2.0, abs=1e-5)
        assert result.estimate.y == pytest.approx(2.0, abs=1e-5)
        post = result.posterior
        assert np.allclose(post, post[0], rtol=1e-6)

    def test_missing_pose_rejected(self, rng):
        d = _manual_dictionary(rng, n_images=3)
        obs = _constant_query([0.1, 0.1], TINY_CAM)
        with pytest.raises(ValueError, match=r"missing image ids \[2\]"):
            localize_ground_only(obs, d, [Pose2D(0, 0, 0), Pose2D(1, 0, 0)], db_ids=[0, 1])

    def test_no_valid_samples_rejected(self, rng):
        d = _manual_dictionary(rng)
        obs = QueryObservation(
            FeatureMap(np.zeros((12, 16, 2), dtype=np.float32)),
            np.full((12, 16), np.nan),
            TINY_CAM,
        )
        with pytest.raises(ValueError, match="no usable grid samples"):
            localize_ground_only(obs, d, [Pose2D(0, 0, 0)] * 3)

    def test_posterior_sums_to_one(self, rng):
        d = _manual_dictionary(rng, n_images=5)
        obs = _constant_query(rng.uniform(-1, 1, 2), TINY_CAM)
        result = localize_ground_only(obs, d, [Pose2D(i, 0, 0) for i in range(5)])
        assert result.posterior.sum() == pytest.approx(1.0, abs=1e-12)


def _db_observation(world, i=0):
    s = world.db[i]
    return QueryObservation(s.ground, s.depth, world.params.cam, query_id=s.sample_id), s.pose


class TestProjectQueryPairs:
    def test_far_pose_yields_no_pairs(self, noiseless_world, noiseless_dict):
        obs, _ = _db_observation(noiseless_world)
        # a pose whose forward arc projects entirely off the raster
        far = Pose2D(-500.0, -500.0, 0.0)
        assert project_query_pairs(obs, far, noiseless_dict) == []

    def test_pair_count_bounded_by_grid(self, noiseless_world, noiseless_dict):
        obs, pose = _db_observation(noiseless_world)
        pairs = project_query_pairs(obs, pose, noiseless_dict)
        grid = noiseless_dict.grid
        us = len(range(grid.margin, min(obs.cam.image_w - grid.margin, obs.cam.image_w - 1) + 1, grid.interval))
        vs = len(range(grid.margin, min(obs.cam.image_h - grid.margin, obs.cam.image_h - 1) + 1, grid.interval))
        assert 0 < len(pairs) <= us * vs

    def test_true_pose_pairs_match_bitwise_in_noiseless_world(
        self, noiseless_world, noiseless_dict
    ):
        # the generator samples ground features from the rasterized satellite,
        # so at the true pose every pair must agree exactly
        obs, pose = _db_observation(noiseless_world, i=2)
        pairs = project_query_pairs(obs, pose, noiseless_dict)
        assert len(pairs) > 0
        for g, s in pairs:
            assert np.array_equal(g, s)


class TestCooccurrenceScore:
    def test_matches_manual_retrieval(self, rng):
        d = _manual_dictionary(rng, n_images=4, per_image=5, dim=3)
        w = Projection.identity(3)
        g = rng.uniform(-1, 1, 3)
        s = rng.uniform(-1, 1, 3)
        manual = score_from_hits(
            knn(d.ground_index, g, 4), knn(d.sat_index, s, 4)
        )
        assert cooccurrence_score(g, s, d, w, w, 4) == pytest.approx(manual, rel=1e-12)

    def test_projection_changes_score(self, rng):
        d = _manual_dictionary(rng, n_images=4, per_image=5, dim=3)
        g = rng.uniform(-1, 1, 3)
        s = rng.uniform(-1, 1, 3)
        ident = cooccurrence_score(g, s, d, Projection.identity(3), Projection.identity(3), 4)
        squash = Projection(np.diag([1.0, 0.01, 0.01]))
        scaled = cooccurrence_score(g, s, d, squash, squash, 4)
        assert ident != scaled


class TestLocalizer:
    def test_noiseless_db_query_recovers_pose(self, noiseless_world, noiseless_dict):
        w = noiseless_world
        engine = Localizer(
            noiseless_dict,
            w.db_poses,
            db_ids=w.db_ids,
            candidate_spacing=2.0,
        )
        obs, pose = _db_observation(w, i=4)
        result = engine.localize(obs)
        best = result.candidates[int(np.argmax(result.raw_scores))]
        assert delta_location(best.pose, pose) <= 1e-9
        assert delta_location(result.estimate, pose) <= 1.0
        assert result.posterior.sum() == pytest.approx(1.0, abs=1e-9)

    def test_raw_scores_match_pairwise_oracle(self, noiseless_world, noiseless_dict):
        """Batched scoring must equal the per-pair retrieval route."""
        w = noiseless_world
        engine = Localizer(
            noiseless_dict, w.db_poses, db_ids=w.db_ids, candidate_spacing=4.0, knn_m=6
        )
        obs = w.observations()[0]
        result = engine.localize(obs)
        pg = NeighborIndex(noiseless_dict.ids, noiseless_dict.ground_matrix())
        ps = NeighborIndex(noiseless_dict.ids, noiseless_dict.sat_matrix())
        for idx in [0, len(engine.candidates) // 2, len(engine.candidates) - 1]:
            cand = engine.candidates[idx]
            pairs = project_query_pairs(obs, cand.pose, noiseless_dict)
            oracle = 0.0
            for g, s in pairs:
                oracle += score_from_hits(knn(pg, g, 6), knn(ps, s, 6))
            got = result.candidates[idx]
            assert got.pair_count == len(pairs)
            assert got.raw_score == pytest.approx(oracle, rel=1e-9, abs=1e-12)

    def test_invalid_depth_gives_uniform_posterior(self, noiseless_world, noiseless_dict):
        w = noiseless_world
        cam = w.params.cam
        obs = QueryObservation(
            w.db[0].ground, np.full((cam.image_h, cam.image_w), np.nan), cam
        )
        engine = Localizer(
            noiseless_dict, w.db_poses, db_ids=w.db_ids, candidate_spacing=4.0,
            inlier_threshold=0.5,
        )
        result = engine.localize(obs)
        n = len(engine.candidates)
        assert np.allclose(result.posterior, 1.0 / n)
        assert result.confidence == 0.0
        assert not result.inlier

    def test_threads_do_not_change_results(self, noiseless_world, noiseless_dict):
        w = noiseless_world
        engine = Localizer(noiseless_dict, w.db_poses, db_ids=w.db_ids, candidate_spacing=4.0)
        obs = w.observations()[:3]
        serial = engine.localize_many(obs, threads=1)
        threaded = engine.localize_many(obs, threads=2)
        for a, b in zip(serial, threaded):
            assert a.query_id == b.query_id
            assert np.array_equal(a.raw_scores, b.raw_scores)
            assert (a.estimate.x, a.estimate.y, a.estimate.theta) == (
                b.estimate.x, b.estimate.y, b.estimate.theta,
            )

    def test_approximate_budget_large_enough_is_exact(self, noiseless_world, noiseless_dict):
        w = noiseless_world
        exact = Localizer(noiseless_dict, w.db_poses, db_ids=w.db_ids, candidate_spacing=4.0)
        approx = Localizer(
            noiseless_dict, w.db_poses, db_ids=w.db_ids, candidate_spacing=4.0,
            check_budget=10**9,
        )
        obs = w.observations()[1]
        a = exact.localize(obs)
        b = approx.localize(obs)
        assert np.array_equal(a.raw_scores, b.raw_scores)

    def test_localize_query_wrapper(self, noiseless_world, noiseless_dict):
        w = noiseless_world
        obs, _ = _db_observation(w, i=1)
        direct = localize_query(obs, noiseless_dict, w.db_poses, candidate_spacing=4.0)
        engine = Localizer(noiseless_dict, w.db_poses, candidate_spacing=4.0)
        assert np.array_equal(direct.raw_scores, engine.localize(obs).raw_scores)

    def test_projection_digest_mismatch_rejected(self, noiseless_dict, noiseless_world):
        w = noiseless_world
        bad = Projection(
            np.eye(noiseless_dict.ground_dim), config_digest="0" * 64
        )
        with pytest.raises(ValueError, match="feature configuration"):
            Localizer(noiseless_dict, w.db_poses, w_ground=bad)

    def test_projection_dim_mismatch_rejected(self, noiseless_dict, noiseless_world):
        with pytest.raises(ValueError, match="dim"):
            Localizer(
                noiseless_dict,
                noiseless_world.db_poses,
                w_ground=Projection(np.eye(noiseless_dict.ground_dim + 1)),
            )

    def test_knn_m_validation(self, noiseless_dict, noiseless_world):
        with pytest.raises(ValueError, match="knn_m"):
            Localizer(noiseless_dict, noiseless_world.db_poses, knn_m=0)

    def test_prepare_query_map_validation(self, noiseless_dict):
        cam = CameraIntrinsics(fx=8.0, fy=8.0, cx=8.0, cy=6.0, height=1.0, image_w=16, image_h=12)
        wrong_channels = QueryObservation(
            FeatureMap(np.zeros((12, 16, noiseless_dict.ground_dim + 1), dtype=np.float32)),
            np.ones((12, 16)),
            cam,
        )
        with pytest.raises(ValueError, match="channels"):
            prepare_query_map(wrong_channels, noiseless_dict)
        wrong_size = QueryObservation(
            FeatureMap(np.zeros((10, 16, noiseless_dict.ground_dim), dtype=np.float32)),
            np.ones((10, 16)),
            cam,
        )
        with pytest.raises(ValueError, match="camera"):
            prepare_query_map(wrong_size, noiseless_dict)
