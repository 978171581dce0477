import numpy as np
import pytest

from skelfuse.camera import CameraModel
from skelfuse.synth import MotionScript, SubjectDims, generate, skeleton_positions, _script_pose
from skelfuse.topology import default_topology


@pytest.fixture(scope="session")
def topo():
    return default_topology()


@pytest.fixture(scope="session")
def camera():
    return CameraModel.from_fov(60.0, (1280, 720))


@pytest.fixture(scope="session")
def standing_positions(topo):
    """Neutral standing skeleton in camera coordinates, default subject."""
    script = MotionScript(kind="static", duration_s=1.0)
    pose = _script_pose(script, 0.0)
    return skeleton_positions(pose, script.subject, topo)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
