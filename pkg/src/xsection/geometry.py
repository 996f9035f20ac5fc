"""Pinhole camera model, rigid poses and pixel rays.

Conventions: camera frame is right-handed with +Z forward, +X right and
+Y down. Pixel (u, v) has its center at (u + 0.5, v + 0.5). Depth values
are camera-frame Z, not distance along the ray.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import GeometryError


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise GeometryError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if not (self.width > 0 and self.height > 0):
            raise GeometryError(f"image size must be positive, got {self.width}x{self.height}")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise GeometryError(
                f"principal point ({self.cx}, {self.cy}) outside {self.width}x{self.height} image"
            )

    @property
    def shape(self) -> tuple[int, int]:
        """Image shape as (height, width)."""
        return (self.height, self.width)

    @property
    def K(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    def to_dict(self) -> dict:
        return {
            "fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
            "width": self.width, "height": self.height,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CameraIntrinsics":
        return cls(float(d["fx"]), float(d["fy"]), float(d["cx"]), float(d["cy"]),
                   int(d["width"]), int(d["height"]))


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid camera-to-world (or object-to-world) transform."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        R = np.array(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.array(self.translation, dtype=np.float64).reshape(3)
        if not np.allclose(R.T @ R, np.eye(3), atol=1e-9, rtol=0):
            raise GeometryError("rotation is not orthonormal")
        if abs(np.linalg.det(R) - 1.0) > 1e-9:
            raise GeometryError("rotation determinant must be +1")
        R.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    def __eq__(self, other):
        if not isinstance(other, Pose):
            return NotImplemented
        return (np.array_equal(self.rotation, other.rotation)
                and np.array_equal(self.translation, other.translation))

    @classmethod
    def identity(cls) -> "Pose":
        return cls()

    @classmethod
    def from_matrix(cls, m) -> "Pose":
        """Build from a 3x4 or 4x4 matrix ``[R | t]``."""
        m = np.asarray(m, dtype=np.float64)
        if m.shape not in ((3, 4), (4, 4)):
            raise GeometryError(f"pose matrix must be 3x4 or 4x4, got {m.shape}")
        return cls(m[:3, :3], m[:3, 3])

    def matrix(self) -> np.ndarray:
        """3x4 row-major ``[R | t]``."""
        return np.hstack([self.rotation, self.translation[:, None]])

    @classmethod
    def look_at(cls, eye, target, up=(0.0, 0.0, 1.0)) -> "Pose":
        """Camera-to-world pose of a camera at ``eye`` looking at ``target``.

        ``up`` is the world direction that should appear upwards in the image
        (i.e. along camera -Y).
        """
        eye = np.asarray(eye, dtype=np.float64)
        fwd = np.asarray(target, dtype=np.float64) - eye
        fwd /= np.linalg.norm(fwd)
        right = np.cross(fwd, np.asarray(up, dtype=np.float64))
        n = np.linalg.norm(right)
        if n < 1e-12:
            raise GeometryError("up vector is parallel to the viewing direction")
        right /= n
        down = np.cross(fwd, right)
        R = np.column_stack([right, down, fwd])
        # re-orthonormalise to kill rounding drift before the strict checks
        u, _, vt = np.linalg.svd(R)
        return cls(u @ vt, eye)

    def inverse(self) -> "Pose":
        return Pose(self.rotation.T, -self.rotation.T @ self.translation)

    def compose(self, other: "Pose") -> "Pose":
        """``self ∘ other`` (apply ``other`` first)."""
        return Pose(self.rotation @ other.rotation,
                    self.rotation @ other.translation + self.translation)

    def apply(self, points) -> np.ndarray:
        """Map points (..., 3) through the transform."""
        return np.asarray(points, dtype=np.float64) @ self.rotation.T + self.translation


@dataclass(frozen=True, eq=False)
class Ray:
    origin: np.ndarray
    direction: np.ndarray
    z_scale: float

    def at(self, s: float) -> np.ndarray:
        return self.origin + s * self.direction


def project(intrinsics: CameraIntrinsics, p_cam) -> tuple[np.ndarray, float]:
    """Project a camera-frame point, returning ``(pixel, z)``.

    ``pixel`` uses the continuous convention where the principal point maps
    to ``(cx, cy)``.
    """
    x, y, z = np.asarray(p_cam, dtype=np.float64)
    if not z > 0:
        raise GeometryError(f"point is behind camera (z={z})")
    u = intrinsics.fx * x / z + intrinsics.cx
    v = intrinsics.fy * y / z + intrinsics.cy
    return np.array([u, v]), float(z)


def unproject(intrinsics: CameraIntrinsics, pixel, z: float) -> np.ndarray:
    """Inverse of :func:`project`."""
    u, v = pixel
    return np.array([(u - intrinsics.cx) * z / intrinsics.fx,
                     (v - intrinsics.cy) * z / intrinsics.fy,
                     z])


def ray_for_pixel(intrinsics: CameraIntrinsics, pose: Pose, u: int, v: int) -> Ray:
    """World-frame ray through the center of pixel ``(u, v)``."""
    if not (0 <= u < intrinsics.width and 0 <= v < intrinsics.height):
        raise GeometryError(f"pixel ({u}, {v}) outside {intrinsics.width}x{intrinsics.height} image")
    d = np.array([(u + 0.5 - intrinsics.cx) / intrinsics.fx,
                  (v + 0.5 - intrinsics.cy) / intrinsics.fy,
                  1.0])
    n = np.linalg.norm(d)
    return Ray(origin=pose.translation.copy(), direction=pose.rotation @ (d / n), z_scale=1.0 / n)


def pixel_rays(intrinsics: CameraIntrinsics, pose: Pose):
    """Rays for every pixel at once.

    Returns ``(origin, directions, z_scale)`` with ``directions`` of shape
    (H, W, 3) in the world frame and ``z_scale`` of shape (H, W). Each
    entry equals what :func:`ray_for_pixel` produces for that pixel.
    """
    us = (np.arange(intrinsics.width) + 0.5 - intrinsics.cx) / intrinsics.fx
    vs = (np.arange(intrinsics.height) + 0.5 - intrinsics.cy) / intrinsics.fy
    d = np.empty((intrinsics.height, intrinsics.width, 3))
    d[..., 0] = us[None, :]
    d[..., 1] = vs[:, None]
    d[..., 2] = 1.0
    n = np.linalg.norm(d, axis=-1)
    d /= n[..., None]
    return pose.translation.copy(), d @ pose.rotation.T, 1.0 / n


def voxel_to_camera(pose: Pose, p_world) -> np.ndarray:
    """World point(s) (..., 3) into the camera frame of a camera-to-world pose."""
    return (np.asarray(p_world, dtype=np.float64) - pose.translation) @ pose.rotation


def camera_to_world(pose: Pose, p_cam) -> np.ndarray:
    return pose.apply(p_cam)
