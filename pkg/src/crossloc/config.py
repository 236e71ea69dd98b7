"""Plain-text `key = value` run configuration.

One flat namespace covers feature extraction, retrieval, training,
localization, and synthetic-world generation. Values are coerced to the type
of the key's default; unknown keys are errors so typos cannot silently fall
back to defaults.
"""

from __future__ import annotations

from pathlib import Path

from .errors import ConfigError
from .features import FeatureConfig, GridSpec
from .geometry import CameraIntrinsics
from .learning import TrainConfig
from .synthetic import WorldParams

DEFAULTS: dict[str, object] = {
    # feature extraction
    "extractors": "color,edge",
    "standardize": True,
    "grid_interval": 16,
    "grid_margin": 8,
    # dictionary / retrieval
    "max_range": 50.0,
    "knn_m": 10,
    "knn_mode": "exact",
    "check_budget": 0,
    # projection training
    "neighborhood_size": 20,
    "learning_rate": 1e-3,
    "max_iter": 50,
    "tolerance": 1e-4,
    "max_train_points": 20000,
    "proj_dim": 0,
    # localization
    "candidate_spacing": 1.0,
    "inlier_threshold": 0.0,
    "inlier_radius": 10.0,
    # execution
    "seed": 0,
    "threads": 1,
    # synthetic world
    "synth_extent": 200.0,
    "synth_mpp": 0.5,
    "synth_channels": 6,
    "synth_blobs": 120,
    "synth_path_radius": 45.0,
    "synth_db_spacing": 10.0,
    "synth_queries": 30,
    "synth_outside": 15,
    "synth_noise": 0.05,
    "synth_mixing": "random",
    "synth_query_lateral": 1.0,
    "synth_query_heading_deg": 5.0,
    "synth_height_jitter": 0.15,
    # synthetic camera
    "cam_width": 128,
    "cam_height": 96,
    "cam_fx": 64.0,
    "cam_fy": 64.0,
    "cam_cx": 64.0,
    "cam_cy": 48.0,
    "cam_z": 1.6,
}

_TRUE_WORDS = {"1", "true", "yes", "on"}
_FALSE_WORDS = {"0", "false", "no", "off"}


def _coerce(key: str, raw: str) -> object:
    default = DEFAULTS[key]
    raw = raw.strip()
    if isinstance(default, bool):
        word = raw.lower()
        if word in _TRUE_WORDS:
            return True
        if word in _FALSE_WORDS:
            return False
        raise ConfigError(f"config key '{key}' expects a boolean, got {raw!r}")
    if isinstance(default, int):
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"config key '{key}' expects an integer, got {raw!r}") from None
    if isinstance(default, float):
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"config key '{key}' expects a number, got {raw!r}") from None
    return raw


def parse_config_text(text: str, source: str = "<config>") -> dict[str, object]:
    values = dict(DEFAULTS)
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {stripped!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key not in DEFAULTS:
            raise ConfigError(f"{source}:{lineno}: unknown config key '{key}'")
        values[key] = _coerce(key, raw)
    return values


def load_config(path=None, overrides: dict | None = None) -> dict[str, object]:
    """Defaults, then the config file (if given), then explicit overrides."""
    if path is not None:
        text = Path(path).read_text()
        values = parse_config_text(text, source=str(path))
    else:
        values = dict(DEFAULTS)
    for key, value in (overrides or {}).items():
        if key not in DEFAULTS:
            raise ConfigError(f"unknown config key '{key}'")
        values[key] = value
    return values


def config_lines(values: dict[str, object]) -> list[str]:
    """Sorted `key = value` lines (manifest serialization)."""
    out = []
    for key in sorted(values):
        value = values[key]
        if isinstance(value, bool):
            text = "true" if value else "false"
        elif isinstance(value, float):
            text = repr(value)
        else:
            text = str(value)
        out.append(f"{key} = {text}")
    return out


def feature_config_from(values: dict[str, object]) -> FeatureConfig:
    names = tuple(
        part.strip() for part in str(values["extractors"]).split(",") if part.strip()
    )
    return FeatureConfig(extractors=names, standardize=bool(values["standardize"]))


def grid_from(values: dict[str, object]) -> GridSpec:
    return GridSpec(
        interval=int(values["grid_interval"]), margin=int(values["grid_margin"])
    )


def train_config_from(values: dict[str, object]) -> TrainConfig:
    proj_dim = int(values["proj_dim"])
    return TrainConfig(
        neighborhood_size=int(values["neighborhood_size"]),
        learning_rate=float(values["learning_rate"]),
        max_iter=int(values["max_iter"]),
        tolerance=float(values["tolerance"]),
        seed=int(values["seed"]),
        max_train_points=int(values["max_train_points"]),
        out_dim=proj_dim if proj_dim > 0 else None,
    )


def camera_from(values: dict[str, object]) -> CameraIntrinsics:
    return CameraIntrinsics(
        fx=float(values["cam_fx"]),
        fy=float(values["cam_fy"]),
        cx=float(values["cam_cx"]),
        cy=float(values["cam_cy"]),
        height=float(values["cam_z"]),
        image_w=int(values["cam_width"]),
        image_h=int(values["cam_height"]),
    )


def world_params_from(values: dict[str, object]) -> WorldParams:
    return WorldParams(
        extent=float(values["synth_extent"]),
        meters_per_pixel=float(values["synth_mpp"]),
        channels=int(values["synth_channels"]),
        blobs_per_channel=int(values["synth_blobs"]),
        path_radius=float(values["synth_path_radius"]),
        db_spacing=float(values["synth_db_spacing"]),
        n_queries=int(values["synth_queries"]),
        n_outside=int(values["synth_outside"]),
        noise=float(values["synth_noise"]),
        mixing=str(values["synth_mixing"]),
        query_lateral=float(values["synth_query_lateral"]),
        query_heading_deg=float(values["synth_query_heading_deg"]),
        height_jitter=float(values["synth_height_jitter"]),
        cam=camera_from(values),
        seed=int(values["seed"]),
    )


def check_budget_from(values: dict[str, object]) -> int | None:
    """None selects exact retrieval; a positive budget selects approximate."""
    mode = str(values["knn_mode"]).lower()
    if mode == "exact":
        return None
    if mode != "approx":
        raise ConfigError(f"knn_mode must be 'exact' or 'approx', got {values['knn_mode']!r}")
    budget = int(values["check_budget"])
    if budget > 0:
        return budget
    from .neighbors import DEFAULT_CHECK_BUDGET_FACTOR

    return DEFAULT_CHECK_BUDGET_FACTOR * int(values["knn_m"])
