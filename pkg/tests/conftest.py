import json
from importlib import resources

import numpy as np
import pytest

from frapident.core import BleachSpec, ModelParams, SpatialGrid, default_times, load_config
from frapident.solver import SpotResponse

REGION_BASELINES = {
    1: ModelParams(0.05, 0.25, 1e-6, 1e-2),
    2: ModelParams(0.1, 1.5, 1e-3, 1e-4),
    3: ModelParams(0.1, 0.8, 1e-5, 1e-6),
}

TINY_PRESET = {"domain_l": 32.0, "grid_n": 64, "profile_points": 7, "surface_points": 5,
               "field_nodes": 5, "s_points": 9, "n_starts": 2, "max_evals": 80}


@pytest.fixture(scope="session")
def config():
    return load_config()


@pytest.fixture(scope="session")
def small_grid():
    return SpatialGrid.square(32.0, 64)


@pytest.fixture(scope="session")
def bleach():
    return BleachSpec()


@pytest.fixture(scope="session")
def times():
    return default_times()


@pytest.fixture(scope="session")
def small_response(small_grid, bleach):
    return SpotResponse(small_grid, bleach, 0.5)


@pytest.fixture(scope="session")
def tiny_config_path(tmp_path_factory):
    raw = json.loads(resources.files("frapident").joinpath("data/regions.json").read_text())
    raw["presets"]["tiny"] = TINY_PRESET
    path = tmp_path_factory.mktemp("cfg") / "tiny.json"
    path.write_text(json.dumps(raw))
    return path


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS, summary_lines
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in summary_lines():
        terminalreporter.write_line(line)
