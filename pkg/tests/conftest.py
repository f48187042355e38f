import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from pointstage import PointCloud, WorkspaceCube, make_rig


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.fixture
def unit_workspace():
    return WorkspaceCube(np.zeros(3), 1.0)


@pytest.fixture
def small_cloud(rng, unit_workspace):
    pos = rng.uniform(-0.5, 0.5, (500, 3))
    return PointCloud(pos, rng.random((500, 3)))


@pytest.fixture
def rig3_ortho(unit_workspace):
    return make_rig(unit_workspace, ("front", "top", "right"), 64, 64, "orthographic")


@pytest.fixture(scope="session")
def data_dir():
    return Path(__file__).parent / "data"
