"""Cross-view localization: match ground-level observations against a
georeferenced satellite map along a known vehicle path."""

__version__ = "0.1.0"

from .dictionary import Dictionary, build_dictionary, load_dictionary, save_dictionary
from .errors import ConfigError, CrossLocError, FormatError
from .estimators import CrossViewLocalizer, RankingProjection
from .evaluation import (
    EvalReport,
    QueryTruth,
    ResultRecord,
    evaluate_localization,
    pr_sweep,
)
from .features import (
    FeatureConfig,
    FeatureMap,
    GridSpec,
    extract_features,
    load_feature_map,
    sample_grid,
    save_feature_map,
)
from .geometry import (
    CameraIntrinsics,
    PathSample,
    Pose2D,
    SatGeoref,
    delta_location,
    interpolate_path,
    pixel_depth_to_world,
    sat_pixel_center_to_world,
    world_to_sat_pixel,
    wrap_angle,
)
from .learning import (
    Projection,
    TrainConfig,
    TrainResult,
    learn_projection,
    load_projection,
    location_loss_metric,
    save_projection,
    train_projection,
)
from .localization import (
    Candidate,
    LocalizationResult,
    Localizer,
    QueryObservation,
    cooccurrence_score,
    estimate_location,
    generate_candidates,
    localize_ground_only,
    localize_query,
    posterior_over_candidates,
    score_from_hits,
)
from .neighbors import NeighborHit, NeighborIndex, batch_knn, brute_force_knn, knn
from .synthetic import SyntheticWorld, WorldParams, generate_world, write_dataset

__all__ = [
    "__version__",
    "CrossLocError",
    "FormatError",
    "ConfigError",
    "Pose2D",
    "PathSample",
    "CameraIntrinsics",
    "SatGeoref",
    "wrap_angle",
    "delta_location",
    "interpolate_path",
    "pixel_depth_to_world",
    "world_to_sat_pixel",
    "sat_pixel_center_to_world",
    "FeatureMap",
    "FeatureConfig",
    "GridSpec",
    "extract_features",
    "sample_grid",
    "load_feature_map",
    "save_feature_map",
    "NeighborIndex",
    "NeighborHit",
    "knn",
    "batch_knn",
    "brute_force_knn",
    "Dictionary",
    "build_dictionary",
    "save_dictionary",
    "load_dictionary",
    "Projection",
    "TrainConfig",
    "TrainResult",
    "train_projection",
    "learn_projection",
    "location_loss_metric",
    "save_projection",
    "load_projection",
    "QueryObservation",
    "Candidate",
    "LocalizationResult",
    "Localizer",
    "generate_candidates",
    "cooccurrence_score",
    "score_from_hits",
    "posterior_over_candidates",
    "estimate_location",
    "localize_query",
    "localize_ground_only",
    "WorldParams",
    "SyntheticWorld",
    "generate_world",
    "write_dataset",
    "QueryTruth",
    "ResultRecord",
    "EvalReport",
    "evaluate_localization",
    "pr_sweep",
    "RankingProjection",
    "CrossViewLocalizer",
]
