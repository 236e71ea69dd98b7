import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from crossloc.estimators import CrossViewLocalizer, RankingProjection
from crossloc.learning import TrainConfig, train_projection
from crossloc.localization import Localizer, QueryObservation


def _training_set(rng, n=50):
    locations = np.column_stack([rng.uniform(0, 10, n), rng.uniform(0, 10, n)])
    feats = np.column_stack(
        [0.1 * locations[:, 0] + 0.01 * rng.normal(size=n), 2.0 * rng.normal(size=n)]
    )
    return feats, locations


def _query_observations(world, k=3):
    return [
        QueryObservation(s.ground, s.depth, world.params.cam, query_id=s.sample_id)
        for s in world.queries[:k]
    ]


class TestRankingProjection:
    def test_get_params_and_clone(self):
        est = RankingProjection(neighborhood_size=7, seed=3, out_dim=2)
        params = est.get_params()
        assert params["neighborhood_size"] == 7
        assert params["seed"] == 3
        assert params["out_dim"] == 2
        assert clone(est).get_params() == params

    def test_requires_fit_before_transform(self):
        with pytest.raises(NotFittedError):
            RankingProjection().transform(np.zeros((2, 2)))

    def test_fit_sets_state_and_reduces_loss(self, rng):
        feats, locations = _training_set(rng)
        est = RankingProjection(neighborhood_size=10, max_iter=20, seed=0)
        assert est.fit(feats, locations) is est
        assert est.n_features_in_ == 2
        assert est.projection_.matrix.shape == (2, 2)
        assert est.epoch_losses_[-1] <= est.epoch_losses_[0]
        assert isinstance(est.converged_, bool)

    def test_transform_applies_learned_matrix(self, rng):
        feats, locations = _training_set(rng)
        est = RankingProjection(neighborhood_size=10, max_iter=5).fit(feats, locations)
        out = est.transform(feats[:4])
        assert np.array_equal(out, est.projection_.apply(feats[:4]))

    def test_matches_direct_training(self, rng):
        feats, locations = _training_set(rng)
        est = RankingProjection(
            neighborhood_size=8, learning_rate=1e-3, max_iter=12, seed=5
        ).fit(feats, locations)
        config = TrainConfig(
            neighborhood_size=8, learning_rate=1e-3, max_iter=12, seed=5
        )
        direct = train_projection(feats, locations, config)
        assert np.array_equal(est.projection_.matrix, direct.projection.matrix)
        assert est.epoch_losses_ == direct.epoch_losses

    def test_out_dim_reduces_columns(self, rng):
        feats, locations = _training_set(rng)
        est = RankingProjection(neighborhood_size=8, max_iter=3, out_dim=1)
        assert est.fit(feats, locations).transform(feats).shape == (len(feats), 1)

    def test_transform_checks_width(self, rng):
        feats, locations = _training_set(rng)
        est = RankingProjection(neighborhood_size=8, max_iter=2).fit(feats, locations)
        with pytest.raises(ValueError, match="expected 2"):
            est.transform(np.zeros((3, 5)))

    def test_row_count_mismatch_rejected(self, rng):
        feats, locations = _training_set(rng)
        with pytest.raises(ValueError, match="expected 50"):
            RankingProjection(max_iter=2).fit(feats, locations[:-1])

    def test_set_params_changes_seed(self, rng):
        feats, locations = _training_set(rng)
        est = RankingProjection(neighborhood_size=8, max_iter=4, max_train_points=30)
        a = est.fit(feats, locations).epoch_losses_
        b = est.set_params(seed=9).fit(feats, locations).epoch_losses_
        assert a != b


class TestCrossViewLocalizer:
    def test_get_params_and_clone(self):
        est = CrossViewLocalizer(candidate_spacing=2.0, knn_m=5, knn_mode="approx")
        params = est.get_params()
        assert params["candidate_spacing"] == 2.0
        assert params["knn_mode"] == "approx"
        assert clone(est).get_params() == params

    def test_requires_fit_before_predict(self):
        with pytest.raises(NotFittedError):
            CrossViewLocalizer().predict([])

    def test_predict_shapes(self, noiseless_world, noiseless_dict):
        est = CrossViewLocalizer(candidate_spacing=2.0).fit(
            noiseless_dict, noiseless_world.db_poses
        )
        obs = _query_observations(noiseless_world)
        pred = est.predict(obs)
        conf = est.decision_function(obs)
        assert pred.shape == (3, 3)
        assert conf.shape == (3,)
        assert np.all(conf > 0)

    def test_matches_direct_localizer(self, noiseless_world, noiseless_dict):
        obs = _query_observations(noiseless_world)
        est = CrossViewLocalizer(candidate_spacing=2.0, knn_m=8).fit(
            noiseless_dict, noiseless_world.db_poses
        )
        direct = Localizer(
            noiseless_dict, noiseless_world.db_poses, candidate_spacing=2.0, knn_m=8
        )
        expected = direct.localize_many(obs)
        got = est.predict_result(obs)
        for r, e in zip(got, expected):
            assert r.estimate == e.estimate
            assert r.confidence == e.confidence
            assert np.array_equal(r.posterior, e.posterior)

    def test_noiseless_predictions_near_truth(self, noiseless_world, noiseless_dict):
        est = CrossViewLocalizer(candidate_spacing=2.0).fit(
            noiseless_dict, noiseless_world.db_poses
        )
        pred = est.predict(_query_observations(noiseless_world))
        for row, s in zip(pred, noiseless_world.queries):
            assert np.hypot(row[0] - s.pose.x, row[1] - s.pose.y) < 1.0

    def test_approx_with_covering_budget_matches_exact(
        self, noiseless_world, noiseless_dict
    ):
        obs = _query_observations(noiseless_world, k=2)
        exact = CrossViewLocalizer(candidate_spacing=2.0).fit(
            noiseless_dict, noiseless_world.db_poses
        )
        approx = CrossViewLocalizer(
            candidate_spacing=2.0, knn_mode="approx", check_budget=10**6
        ).fit(noiseless_dict, noiseless_world.db_poses)
        assert np.array_equal(exact.predict(obs), approx.predict(obs))

    def test_threads_do_not_change_predictions(self, noiseless_world, noiseless_dict):
        obs = _query_observations(noiseless_world, k=2)
        one = CrossViewLocalizer(candidate_spacing=2.0, threads=1).fit(
            noiseless_dict, noiseless_world.db_poses
        )
        two = CrossViewLocalizer(candidate_spacing=2.0, threads=2).fit(
            noiseless_dict, noiseless_world.db_poses
        )
        assert np.array_equal(one.predict(obs), two.predict(obs))

    def test_invalid_mode_rejected_at_fit(self, noiseless_world, noiseless_dict):
        est = CrossViewLocalizer(knn_mode="fuzzy")
        with pytest.raises(ValueError, match="knn_mode"):
            est.fit(noiseless_dict, noiseless_world.db_poses)
