"""Estimator-style wrappers around projection training and localization.

RankingProjection follows the fit/transform contract (parameters set in
__init__, fitted state in trailing-underscore attributes, get_params/clone
compatible). CrossViewLocalizer mirrors the same conventions but fits on a
dictionary plus database poses rather than an (X, y) design matrix.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .learning import TrainConfig, train_projection
from .localization import Localizer
from .neighbors import DEFAULT_CHECK_BUDGET_FACTOR
from .validation import as_float_matrix, as_locations


class RankingProjection(BaseEstimator, TransformerMixin):
    """Learn a linear map that makes physically nearby samples nearby in
    feature space.

    fit(X, y) takes feature rows X of shape (n, d) and their planar world
    locations y of shape (n, 2); transform(X) applies the learned matrix.
    """

    def __init__(
        self,
        neighborhood_size: int = 20,
        learning_rate: float = 1e-3,
        max_iter: int = 50,
        tolerance: float = 1e-4,
        max_train_points: int = 20000,
        out_dim: int | None = None,
        seed: int = 0,
    ):
        self.neighborhood_size = neighborhood_size
        self.learning_rate = learning_rate
        self.max_iter = max_iter
        self.tolerance = tolerance
        self.max_train_points = max_train_points
        self.out_dim = out_dim
        self.seed = seed

    def fit(self, X, y):
        features = as_float_matrix(X, name="X")
        locations = as_locations(y, n_expected=features.shape[0], name="y")
        config = TrainConfig(
            neighborhood_size=self.neighborhood_size,
            learning_rate=self.learning_rate,
            max_iter=self.max_iter,
            tolerance=self.tolerance,
            seed=self.seed,
            max_train_points=self.max_train_points,
            out_dim=self.out_dim,
        )
        result = train_projection(features, locations, config)
        self.projection_ = result.projection
        self.epoch_losses_ = list(result.epoch_losses)
        self.converged_ = result.converged
        self.n_features_in_ = features.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "projection_")
        features = as_float_matrix(X, name="X")
        if features.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {features.shape[1]} features, expected {self.n_features_in_}"
            )
        return self.projection_.apply(features)


class CrossViewLocalizer(BaseEstimator):
    """Localize query observations against a fitted dictionary and path.

    fit(dictionary, db_poses, ...) builds the retrieval engine; predict maps
    observations to (x, y, theta) rows.
    """

    def __init__(
        self,
        candidate_spacing: float = 1.0,
        knn_m: int = 10,
        knn_mode: str = "exact",
        check_budget: int | None = None,
        inlier_threshold: float = 0.0,
        threads: int = 1,
    ):
        self.candidate_spacing = candidate_spacing
        self.knn_m = knn_m
        self.knn_mode = knn_mode
        self.check_budget = check_budget
        self.inlier_threshold = inlier_threshold
        self.threads = threads

    def _budget(self) -> int | None:
        if self.knn_mode == "exact":
            return None
        if self.knn_mode != "approx":
            raise ValueError(
                f"knn_mode must be 'exact' or 'approx', got {self.knn_mode!r}"
            )
        if self.check_budget is not None and self.check_budget > 0:
            return self.check_budget
        return DEFAULT_CHECK_BUDGET_FACTOR * self.knn_m

    def fit(self, dictionary, db_poses, w_ground=None, w_sat=None, db_ids=None):
        self.engine_ = Localizer(
            dictionary,
            db_poses,
            w_ground=w_ground,
            w_sat=w_sat,
            db_ids=db_ids,
            candidate_spacing=self.candidate_spacing,
            knn_m=self.knn_m,
            check_budget=self._budget(),
            inlier_threshold=self.inlier_threshold,
        )
        self.n_features_in_ = dictionary.ground_dim
        return self

    def predict_result(self, observations):
        check_is_fitted(self, "engine_")
        return self.engine_.localize_many(list(observations), threads=self.threads)

    def predict(self, observations) -> np.ndarray:
        results = self.predict_result(observations)
        return np.array(
            [[r.estimate.x, r.estimate.y, r.estimate.theta] for r in results]
        )

    def decision_function(self, observations) -> np.ndarray:
        return np.array([r.confidence for r in self.predict_result(observations)])
