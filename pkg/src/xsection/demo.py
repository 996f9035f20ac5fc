"""Synthetic demo scenes: single primitives and a three-object tabletop."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from . import shapes
from .geometry import CameraIntrinsics, Pose
from .scene_io import SceneDescription, SceneObject, save_scene

DEFAULT_CAMERA = CameraIntrinsics(fx=500.0, fy=500.0, cx=320.0, cy=240.0, width=640, height=480)


def arc_trajectory(n_views: int = 20, radius: float = 0.8, height: float = 0.45,
                   span_deg: float = 150.0, target=(0.0, 0.0, 0.05),
                   start_deg: float = -90.0) -> list[Pose]:
    """Cameras on a horizontal arc around ``target``, all looking at it."""
    target = np.asarray(target, dtype=np.float64)
    angles = np.deg2rad(start_deg + np.linspace(-span_deg / 2, span_deg / 2, n_views))
    poses = []
    for a in angles:
        eye = target + np.array([radius * np.cos(a), radius * np.sin(a), height])
        poses.append(Pose.look_at(eye, target))
    return poses


def tabletop_scene(n_views: int = 20, camera: CameraIntrinsics = DEFAULT_CAMERA) -> SceneDescription:
    """Sphere, box and cylinder resting on the table plane ``z = 0``."""
    objects = [
        SceneObject(1, Pose(translation=(-0.2, 0.05, 0.1)), mesh=shapes.icosphere(0.1, 4)),
        SceneObject(2, Pose(translation=(0.17, -0.03, 0.08)), mesh=shapes.box((0.18, 0.14, 0.16))),
        SceneObject(3, Pose(translation=(0.0, 0.22, 0.1)), mesh=shapes.cylinder(0.075, 0.2, 48)),
    ]
    return SceneDescription(objects, camera, arc_trajectory(n_views), plane_height=0.0)


def single_object_scene(kind: str, n_views: int = 8, camera: CameraIntrinsics = DEFAULT_CAMERA,
                        table: bool = True) -> SceneDescription:
    if kind == "sphere":
        mesh, z = shapes.icosphere(0.1, 4), 0.1
    elif kind == "box":
        mesh, z = shapes.box((0.2, 0.15, 0.1)), 0.05
    elif kind == "lshape":
        mesh, z = shapes.l_shape(0.2, 0.08, 0.1), 0.05
    else:
        raise ValueError(f"unknown demo object {kind!r}")
    obj = SceneObject(1, Pose(translation=(0.0, 0.0, z)), mesh=mesh)
    traj = arc_trajectory(n_views, target=(0.0, 0.0, z))
    return SceneDescription([obj], camera, traj, plane_height=0.0 if table else None)


DEMOS = {
    "tabletop": tabletop_scene,
    "sphere": lambda: single_object_scene("sphere"),
    "box": lambda: single_object_scene("box"),
    "lshape": lambda: single_object_scene("lshape"),
}


def write_demos(directory) -> list[Path]:
    """Write every demo scene (JSON plus OBJ meshes) into ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, make in DEMOS.items():
        scene = make()
        for o in scene.objects:
            o.mesh_path = None
        sub = directory / name
        sub.mkdir(exist_ok=True)
        path = sub / "scene.json"
        save_scene(path, scene)
        paths.append(path)
    return paths


def demo_path(name: str) -> Path:
    """Path of a shipped demo scene JSON."""
    return Path(__file__).parent / "data" / "demos" / name / "scene.json"
