import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from crossloc.dictionary import build_dictionary
from crossloc.features import FeatureConfig
from crossloc.synthetic import WorldParams, generate_world

settings.register_profile(
    "suite",
    deadline=None,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")

# small, fast worlds shared by dictionary/localization/synthetic tests
SMALL_NOISELESS = WorldParams(
    extent=140.0,
    meters_per_pixel=1.0,
    channels=4,
    blobs_per_channel=60,
    path_radius=25.0,
    db_spacing=8.0,
    n_queries=5,
    n_outside=3,
    noise=0.0,
    mixing="identity",
    query_lateral=0.0,
    query_heading_deg=0.0,
    height_jitter=0.0,
    seed=11,
)

SMALL_NOISY = WorldParams(
    extent=140.0,
    meters_per_pixel=1.0,
    channels=4,
    blobs_per_channel=60,
    path_radius=25.0,
    db_spacing=8.0,
    n_queries=5,
    n_outside=3,
    seed=7,
)


@pytest.fixture(scope="session")
def noiseless_world():
    return generate_world(SMALL_NOISELESS)


@pytest.fixture(scope="session")
def noiseless_dict(noiseless_world):
    w = noiseless_world
    return build_dictionary(
        w.db_triples(),
        w.sat_map,
        w.georef,
        w.params.cam,
        feature_config=FeatureConfig(extractors=("external",), standardize=False),
        image_ids=w.db_ids,
    )


@pytest.fixture(scope="session")
def noisy_world():
    return generate_world(SMALL_NOISY)


@pytest.fixture(scope="session")
def noisy_dict(noisy_world):
    w = noisy_world
    return build_dictionary(
        w.db_triples(),
        w.sat_map,
        w.georef,
        w.params.cam,
        feature_config=FeatureConfig(extractors=("external",), standardize=True),
        image_ids=w.db_ids,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
