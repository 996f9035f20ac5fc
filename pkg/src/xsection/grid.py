"""Dense voxel grid containers shared by fusion, evaluation and I/O.

Arrays are indexed ``[i, j, k]`` along world x, y, z. ``origin`` is the
world position of the *center* of voxel ``(0, 0, 0)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import DataError


@dataclass(frozen=True, eq=False)
class GridSpec:
    dims: tuple[int, int, int]
    voxel_size: float
    origin: np.ndarray

    def __post_init__(self):
        dims = tuple(int(n) for n in self.dims)
        if len(dims) != 3 or min(dims) < 1:
            raise DataError(f"grid dims must be three positive integers, got {self.dims}")
        if not self.voxel_size > 0:
            raise DataError(f"voxel_size must be positive, got {self.voxel_size}")
        # stored at float32 precision so the on-disk dump is lossless
        origin = np.array(self.origin, dtype=np.float32).astype(np.float64).reshape(3)
        origin.setflags(write=False)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "voxel_size", float(np.float32(self.voxel_size)))
        object.__setattr__(self, "origin", origin)

    def __eq__(self, other):
        if not isinstance(other, GridSpec):
            return NotImplemented
        return (self.dims == other.dims and self.voxel_size == other.voxel_size
                and np.array_equal(self.origin, other.origin))

    @classmethod
    def from_bounds(cls, lo, hi, voxel_size: float) -> "GridSpec":
        """Smallest grid whose voxels cover the box ``[lo, hi]``."""
        lo = np.asarray(lo, dtype=np.float64)
        hi = np.asarray(hi, dtype=np.float64)
        vs = float(np.float32(voxel_size))
        dims = tuple(max(1, math.ceil((h - l) / vs - 1e-6)) for l, h in zip(lo, hi))
        return cls(dims, vs, lo + 0.5 * vs)

    @property
    def n_voxels(self) -> int:
        return self.dims[0] * self.dims[1] * self.dims[2]

    def axis_centers(self, axis: int) -> np.ndarray:
        return self.origin[axis] + self.voxel_size * np.arange(self.dims[axis])

    def voxel_centers(self) -> np.ndarray:
        """World coordinates of all voxel centers, shape (nx, ny, nz, 3)."""
        xs, ys, zs = (self.axis_centers(a) for a in range(3))
        out = np.empty(self.dims + (3,))
        out[..., 0] = xs[:, None, None]
        out[..., 1] = ys[None, :, None]
        out[..., 2] = zs[None, None, :]
        return out

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """World-space box covered by the voxels (outer faces)."""
        lo = self.origin - 0.5 * self.voxel_size
        return lo, lo + self.voxel_size * np.asarray(self.dims)

    def to_dict(self) -> dict:
        return {"dims": list(self.dims), "voxel_size": self.voxel_size,
                "origin": self.origin.tolist()}


@dataclass(eq=False)
class TsdfGrid:
    """Normalized TSDF values ``phi`` in [-1, 1] and fusion weights.

    Voxels never updated hold ``phi = 1`` and ``weight = 0``.
    """

    spec: GridSpec
    phi: np.ndarray
    weight: np.ndarray

    @classmethod
    def empty(cls, spec: GridSpec) -> "TsdfGrid":
        return cls(spec,
                   np.ones(spec.dims, dtype=np.float32),
                   np.zeros(spec.dims, dtype=np.float32))

    def __post_init__(self):
        if self.phi.shape != self.spec.dims or self.weight.shape != self.spec.dims:
            raise DataError(f"phi/weight shapes {self.phi.shape}/{self.weight.shape} "
                            f"do not match dims {self.spec.dims}")

    @property
    def dims(self):
        return self.spec.dims

    @property
    def voxel_size(self):
        return self.spec.voxel_size

    @property
    def origin(self):
        return self.spec.origin

    def copy(self) -> "TsdfGrid":
        return TsdfGrid(self.spec, self.phi.copy(), self.weight.copy())


@dataclass(eq=False)
class OccupancyGrid:
    spec: GridSpec
    occupied: np.ndarray

    def __post_init__(self):
        self.occupied = np.asarray(self.occupied, dtype=bool)
        if self.occupied.shape != self.spec.dims:
            raise DataError(f"occupancy shape {self.occupied.shape} does not match dims {self.spec.dims}")

    @classmethod
    def empty(cls, spec: GridSpec) -> "OccupancyGrid":
        return cls(spec, np.zeros(spec.dims, dtype=bool))

    @property
    def count(self) -> int:
        return int(self.occupied.sum())
