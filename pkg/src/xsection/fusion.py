"""Thickness-enhanced TSDF fusion.

A pixel with depth ``d`` and thickness ``t`` describes an occupied interval
``[d, d + t]`` along camera Z. The enhanced TSDF is +1 in front of it,
ramps to -1 across the front surface within the truncation band ``tau``,
stays at -1 inside, ramps back to +1 across the back surface and is +1
behind. Without thickness only the classic front ramp is fused, and space
more than ``tau`` behind the surface is left untouched.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import (check_max_weight, check_mode, check_n_jobs, check_positive,
                          check_threshold)
from .exceptions import DataError
from .geometry import CameraIntrinsics, voxel_to_camera
from .grid import GridSpec, OccupancyGrid, TsdfGrid
from .scene_io import FrameBundle

__all__ = [
    "FusionConfig", "TsdfGrid", "TsdfFusion", "phi_thickness", "phi_depth_only",
    "fuse_voxel", "integrate_frame", "occupancy_from_grid",
]


@dataclass(frozen=True)
class FusionConfig:
    tau: float = 0.03
    mode: str = "enhanced"
    max_weight: int = 100
    occupancy_threshold: float = 0.0

    def __post_init__(self):
        check_positive(self.tau, "tau")
        check_mode(self.mode)
        check_max_weight(self.max_weight)
        check_threshold(self.occupancy_threshold)

    def to_dict(self) -> dict:
        return {"tau": self.tau, "mode": self.mode, "max_weight": self.max_weight,
                "occupancy_threshold": self.occupancy_threshold}


def phi_thickness(z, d, t, tau):
    """Enhanced TSDF as the max of the front and back clamped ramps.

    For ``t >= 2 * tau`` this is identical to the five-case piecewise
    definition; for thinner objects the two bands overlap and the max keeps
    the function total and within [-1, 1]. Works on scalars and arrays.
    """
    front = np.clip((d - z) / tau, -1.0, 1.0)
    # z - (d + t) rather than z - d - t: negation is exact, so this matches
    # (d + t - z) / -tau bit for bit
    back = np.clip((z - (d + t)) / tau, -1.0, 1.0)
    return np.maximum(front, back)


def phi_depth_only(z, d, tau):
    """Classic projective TSDF; ``None`` (NaN for arrays) where ``z > d + tau``."""
    z = np.asarray(z, dtype=np.float64)
    out = np.where(z <= d + tau, np.clip((d - z) / tau, -1.0, 1.0), np.nan)
    if out.ndim == 0:
        return None if np.isnan(out) else float(out)
    return out


def fuse_voxel(old_phi, old_weight, new_phi, max_weight: int = 100):
    """Running weighted average with unit observation weight and a weight cap."""
    phi = (old_phi * old_weight + new_phi) / (old_weight + 1)
    weight = np.minimum(old_weight + 1, max_weight)
    return phi, weight


def _integrate_chunk(sl, centers, grid, frame, cam, config):
    """Update voxels ``sl`` of the flattened grid in place; returns the update count."""
    pc = voxel_to_camera(frame.pose, centers[sl])
    z = pc[:, 2]
    ok = z > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        u = np.floor(cam.fx * pc[:, 0] / z + cam.cx)
        v = np.floor(cam.fy * pc[:, 1] / z + cam.cy)
    ok &= (u >= 0) & (u < cam.width) & (v >= 0) & (v < cam.height)
    idx = np.flatnonzero(ok)
    ui = u[idx].astype(np.int64)
    vi = v[idx].astype(np.int64)
    d = frame.depth[vi, ui].astype(np.float64)
    t = frame.thickness[vi, ui].astype(np.float64)
    zz = z[idx]
    has_d = ~np.isnan(d)
    idx, d, t, zz = idx[has_d], d[has_d], t[has_d], zz[has_d]

    new = np.full(len(idx), np.nan)
    if config.mode == "enhanced":
        thick = t > 0
        new[thick] = phi_thickness(zz[thick], d[thick], t[thick], config.tau)
        rest = ~thick
        new[rest] = phi_depth_only(zz[rest], d[rest], config.tau)
    else:
        new[:] = phi_depth_only(zz, d, config.tau)
    upd = ~np.isnan(new)
    # round to storage precision first so the average of two observations is
    # exact in float64 and does not depend on which one came first
    idx, new = idx[upd], new[upd].astype(np.float32).astype(np.float64)

    phi = grid.phi.reshape(-1)[sl]
    w = grid.weight.reshape(-1)[sl]
    old_phi = phi[idx].astype(np.float64)
    old_w = w[idx].astype(np.float64)
    p, nw = fuse_voxel(old_phi, old_w, new, config.max_weight)
    phi[idx] = p
    w[idx] = nw
    return len(idx)


def integrate_frame(grid: TsdfGrid, frame: FrameBundle, intrinsics: CameraIntrinsics,
                    config: FusionConfig, n_jobs: int = 1) -> int:
    """Fuse one frame into ``grid`` in place; returns the number of voxels updated.

    Every voxel center is projected into the frame and reads depth and
    thickness at the nearest pixel. Voxels behind the camera, outside the
    image or on missing depth are skipped.
    """
    if frame.depth.shape != intrinsics.shape:
        raise DataError(f"frame {frame.frame_index} has shape {frame.depth.shape}, "
                        f"intrinsics expect {intrinsics.shape}")
    if not (grid.phi.flags.c_contiguous and grid.weight.flags.c_contiguous):
        raise DataError("grid arrays must be C-contiguous")
    centers = grid.spec.voxel_centers().reshape(-1, 3)
    n = len(centers)
    n_jobs = check_n_jobs(n_jobs)
    bounds = np.linspace(0, n, n_jobs + 1).astype(int)
    slices = [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:])]
    if n_jobs == 1:
        return sum(_integrate_chunk(s, centers, grid, frame, intrinsics, config) for s in slices)
    with ThreadPoolExecutor(n_jobs) as ex:
        return sum(ex.map(lambda s: _integrate_chunk(s, centers, grid, frame, intrinsics, config),
                          slices))


def occupancy_from_grid(grid: TsdfGrid, config: FusionConfig | None = None) -> OccupancyGrid:
    """Observed voxels whose TSDF is below the occupancy threshold."""
    thr = 0.0 if config is None else config.occupancy_threshold
    return OccupancyGrid(grid.spec, (grid.weight > 0) & (grid.phi < thr))


class TsdfFusion(BaseEstimator):
    """Estimator wrapper around :func:`integrate_frame`.

    ``fit`` resets the volume and integrates a sequence of frames,
    ``partial_fit`` keeps integrating into the current volume. ``predict``
    answers occupancy queries for world points.

    Parameters
    ----------
    intrinsics : CameraIntrinsics
    grid_spec : GridSpec
        Voxel layout of the volume.
    tau : float, default=0.03
        Truncation distance in meters.
    mode : {"enhanced", "depth_only"}
    max_weight : int, default=100
    occupancy_threshold : float, default=0.0
    n_jobs : int, default=1
        Threads used to split the voxel range; results do not depend on it.
    """

    def __init__(self, intrinsics=None, grid_spec=None, tau=0.03, mode="enhanced",
                 max_weight=100, occupancy_threshold=0.0, n_jobs=1):
        self.intrinsics = intrinsics
        self.grid_spec = grid_spec
        self.tau = tau
        self.mode = mode
        self.max_weight = max_weight
        self.occupancy_threshold = occupancy_threshold
        self.n_jobs = n_jobs

    def _config(self) -> FusionConfig:
        return FusionConfig(self.tau, self.mode, self.max_weight, self.occupancy_threshold)

    def _check_setup(self):
        if not isinstance(self.intrinsics, CameraIntrinsics):
            raise DataError("TsdfFusion needs `intrinsics`")
        if not isinstance(self.grid_spec, GridSpec):
            raise DataError("TsdfFusion needs `grid_spec`")
        self.config_ = self._config()

    def fit(self, X, y=None):
        self._check_setup()
        self.grid_ = TsdfGrid.empty(self.grid_spec)
        self.n_updated_ = []
        return self.partial_fit(X)

    def partial_fit(self, X, y=None):
        if not hasattr(self, "grid_"):
            return self.fit(X)
        if isinstance(X, FrameBundle):
            X = [X]
        for frame in X:
            self.n_updated_.append(
                integrate_frame(self.grid_, frame, self.intrinsics, self.config_, self.n_jobs))
        return self

    def occupancy(self) -> OccupancyGrid:
        check_is_fitted(self, "grid_")
        return occupancy_from_grid(self.grid_, self.config_)

    def predict(self, X) -> np.ndarray:
        """Occupancy of world points (n, 3) by nearest voxel; outside the grid is free."""
        check_is_fitted(self, "grid_")
        X = np.asarray(X, dtype=np.float64).reshape(-1, 3)
        spec = self.grid_.spec
        ijk = np.rint((X - spec.origin) / spec.voxel_size).astype(np.int64)
        inside = np.all((ijk >= 0) & (ijk < np.asarray(spec.dims)), axis=1)
        out = np.zeros(len(X), dtype=bool)
        occ = self.occupancy().occupied
        i = ijk[inside]
        out[inside] = occ[i[:, 0], i[:, 1], i[:, 2]]
        return out
