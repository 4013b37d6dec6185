import os

import pytest

from mapx.scenario import ScenarioConfig, load_config

CONFIG_DIR = os.path.join(os.path.dirname(__file__), "..", "configs")


@pytest.fixture(scope="session")
def desk_config() -> ScenarioConfig:
    return load_config(os.path.join(CONFIG_DIR, "desk.cfg"))


@pytest.fixture(scope="session")
def fullscale_config() -> ScenarioConfig:
    return load_config(os.path.join(CONFIG_DIR, "fullscale.cfg"))


@pytest.fixture(scope="session")
def mini_config() -> ScenarioConfig:
    """Small, fast scenario for unit tests: 8x8 virtual array, ~40 devices."""
    return ScenarioConfig(
        area_side_m=1600.0,
        device_density_per_km2=15.625,
        haps_altitude_m=1600.0,
        array_p=4,
        array_q=4,
        symbols_m=2,
        subcarriers_n=2,
        field_corr_len_m=400.0,
        eval_grid_side=16,
        seed=42,
    )


def desk_path() -> str:
    return os.path.join(CONFIG_DIR, "desk.cfg")


def fullscale_path() -> str:
    return os.path.join(CONFIG_DIR, "fullscale.cfg")
