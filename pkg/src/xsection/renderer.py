"""Ray-traced ground truth: projective depth, instance masks and thickness.

Thickness at a pixel is the camera-Z distance between the visible
(front-facing) surface of an object and the next surface of the *same*
object along the ray, which must be back-facing. Deeper layers and other
objects are ignored, so every pixel carries a single-layer value.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .geometry import CameraIntrinsics, Pose, Ray, pixel_rays
from .scene_io import FrameBundle, SceneDescription, TriangleMesh

logger = logging.getLogger(__name__)

EPS_RAY = 1e-6


class Bvh:
    """Axis-aligned bounding-box tree over the triangles of one mesh instance."""

    def __init__(self, mesh: TriangleMesh):
        v = mesh.vertices
        t = mesh.triangles
        v0, v1, v2 = (np.ascontiguousarray(v[t[:, i]]) for i in range(3))
        (self.lo, self.hi, self.left, self.right,
         self.start, self.count, self.order) = _kernels.build_bvh(v0, v1, v2)
        self.v0 = v0[self.order]
        self.e1 = v1[self.order] - self.v0
        self.e2 = v2[self.order] - self.v0
        self.n_triangles = len(t)

    @property
    def n_nodes(self) -> int:
        return len(self.lo)

    def leaves(self):
        """Yield ``(node, original triangle indices)`` for each leaf."""
        for i in np.flatnonzero(self.count > 0):
            yield i, self.order[self.start[i]:self.start[i] + self.count[i]]


@dataclass(frozen=True)
class HitRecord:
    s: float
    object_id: int
    facing: str  # "front" | "back"


class _Packed:
    """All instance BVHs concatenated into flat arrays for the kernels."""

    def __init__(self, bvhs: list[Bvh], ids: list[int]):
        node_off = np.cumsum([0] + [b.n_nodes for b in bvhs])
        tri_off = np.cumsum([0] + [len(b.v0) for b in bvhs])
        self.roots = node_off[:-1].astype(np.int64)
        self.inst_ids = np.asarray(ids, dtype=np.int64)

        def cat(name, shape):
            arrs = [getattr(b, name) for b in bvhs]
            return np.concatenate(arrs) if arrs else np.zeros(shape)

        self.lo = cat("lo", (0, 3))
        self.hi = cat("hi", (0, 3))
        self.v0 = cat("v0", (0, 3))
        self.e1 = cat("e1", (0, 3))
        self.e2 = cat("e2", (0, 3))
        left, right, start = [], [], []
        for b, no, to in zip(bvhs, node_off, tri_off):
            left.append(np.where(b.left >= 0, b.left + no, -1))
            right.append(np.where(b.right >= 0, b.right + no, -1))
            start.append(b.start + to)
        self.left = np.concatenate(left) if left else np.zeros(0, np.int64)
        self.right = np.concatenate(right) if right else np.zeros(0, np.int64)
        self.start = np.concatenate(start) if start else np.zeros(0, np.int64)
        self.count = cat("count", (0,)).astype(np.int64)

    def kernel_args(self):
        return (self.roots, self.inst_ids, self.lo, self.hi, self.left, self.right,
                self.start, self.count, self.v0, self.e1, self.e2)


class RenderScene:
    """World-space meshes with their BVHs, an optional table plane and a camera.

    The table is the infinite plane ``z = plane_height`` in world coordinates.
    """

    def __init__(self, objects: list[tuple[int, TriangleMesh]], camera: CameraIntrinsics,
                 trajectory: list[Pose] = (), plane_height: float | None = None):
        self.camera = camera
        self.trajectory = list(trajectory)
        self.plane_height = plane_height
        self.object_ids = [int(i) for i, _ in objects]
        self.meshes = [m for _, m in objects]
        self.bvhs = [Bvh(m) for m in self.meshes]
        self._packed = _Packed(self.bvhs, self.object_ids)
        for i, m in zip(self.object_ids, self.meshes):
            if not m.watertight_hint:
                logger.warning("object %d is not watertight; thickness may be zero on its pixels", i)

    @classmethod
    def from_description(cls, desc: SceneDescription) -> "RenderScene":
        objs = [(o.id, o.world_mesh()) for o in desc.objects]
        return cls(objs, desc.camera, desc.trajectory, desc.plane_height)

    def pose(self, view) -> Pose:
        return view if isinstance(view, Pose) else self.trajectory[view]


def first_hit(ray: Ray, scene: RenderScene) -> HitRecord | None:
    """Closest hit with ``s > EPS_RAY`` over all objects and the table plane.

    The plane reports ``object_id == 0``.
    """
    p = scene._packed
    s, inst, tri, front = _kernels.first_hit_packed(
        *p.kernel_args(), scene.plane_height is not None,
        0.0 if scene.plane_height is None else float(scene.plane_height),
        np.asarray(ray.origin, dtype=np.float64), np.asarray(ray.direction, dtype=np.float64), EPS_RAY)
    if inst == -2:
        return None
    oid = 0 if inst == -1 else int(p.inst_ids[inst])
    return HitRecord(float(s), oid, "front" if front else "back")


@dataclass
class RenderResult:
    depth: np.ndarray
    thickness: np.ndarray
    masks: np.ndarray
    n_unmatched: int


def render(scene: RenderScene, view, n_jobs: int = 1) -> RenderResult:
    """Trace one primary ray per pixel for the given trajectory index or pose.

    Rows are split across ``n_jobs`` threads; every pixel is computed
    independently so the output does not depend on the split.
    """
    cam = scene.camera
    pose = scene.pose(view)
    origin, dirs, zscale = pixel_rays(cam, pose)
    H, W = cam.height, cam.width
    depth = np.empty((H, W))
    thick = np.empty((H, W))
    masks = np.empty((H, W), dtype=np.uint8)
    has_plane = scene.plane_height is not None
    plane_z = 0.0 if scene.plane_height is None else float(scene.plane_height)
    args = scene._packed.kernel_args()

    def work(rows):
        return _kernels.render_rows(rows[0], rows[1], origin, dirs, zscale, *args,
                                    has_plane, plane_z, EPS_RAY, depth, thick, masks)

    n_jobs = max(1, int(n_jobs))
    bounds = np.linspace(0, H, min(H, 4 * n_jobs) + 1).astype(int)
    chunks = list(zip(bounds[:-1], bounds[1:]))
    if n_jobs == 1:
        n_warn = sum(work(c) for c in chunks)
    else:
        with ThreadPoolExecutor(n_jobs) as ex:
            n_warn = sum(ex.map(work, chunks))
    if n_warn:
        logger.warning("%d pixels hit an object with no matching back surface", n_warn)
    return RenderResult(depth.astype(np.float32), thick.astype(np.float32), masks, int(n_warn))


def render_depth(scene: RenderScene, view, n_jobs: int = 1) -> np.ndarray:
    """Camera-frame Z of the first hit per pixel; NaN on a miss."""
    return render(scene, view, n_jobs).depth


def render_thickness_and_masks(scene: RenderScene, view, n_jobs: int = 1):
    r = render(scene, view, n_jobs)
    return r.thickness, r.masks


def render_frame(scene: RenderScene, view: int, n_jobs: int = 1) -> FrameBundle:
    r = render(scene, view, n_jobs)
    return FrameBundle(r.depth, r.thickness, r.masks, scene.pose(view), view)
