from __future__ import annotations

import numpy as np
import pytest

from xsection import shapes
from xsection.geometry import CameraIntrinsics, Pose
from xsection.renderer import RenderScene

CAMERA = CameraIntrinsics(fx=500.0, fy=500.0, cx=320.0, cy=240.0, width=640, height=480)
SMALL_CAMERA = CameraIntrinsics(fx=100.0, fy=100.0, cx=32.0, cy=24.0, width=64, height=48)


def frontal_scene(mesh, camera=CAMERA, plane_height=None, object_id=1):
    """Single object in world coordinates viewed by an identity-pose camera."""
    return RenderScene([(object_id, mesh)], camera, [Pose()], plane_height)


@pytest.fixture(scope="session")
def camera():
    return CAMERA


@pytest.fixture(scope="session")
def small_camera():
    return SMALL_CAMERA


@pytest.fixture(scope="session")
def sphere_scene():
    """Sphere of radius 0.5 at (0, 0, 2) in front of the camera."""
    return frontal_scene(shapes.icosphere(0.5, 6, center=(0.0, 0.0, 2.0)))


@pytest.fixture(scope="session")
def box_scene():
    """Axis-aligned 1 m cube centred at (0, 0, 2)."""
    return frontal_scene(shapes.box((1.0, 1.0, 1.0), center=(0.0, 0.0, 2.0)))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
