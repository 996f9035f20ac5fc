"""Ground-truth voxelization, thickness-image metrics and volumetric scores."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import _kernels
from .exceptions import DataError, NotWatertightError
from .fusion import FusionConfig, integrate_frame, occupancy_from_grid
from .geometry import CameraIntrinsics
from .grid import GridSpec, OccupancyGrid, TsdfGrid
from .scene_io import SceneDescription, TriangleMesh, is_watertight

EPS_THICKNESS = 1e-4

__all__ = [
    "OccupancyGrid", "Metrics2D", "Metrics3D", "solid_voxelize", "metrics_2d", "metrics_3d",
    "convergence_curves", "extract_blocky_surface",
]


@dataclass(frozen=True)
class Metrics2D:
    abs_rel: float
    sqr_rel: float
    rmse_linear: float
    rmse_log: float
    n_pixels: int


@dataclass(frozen=True)
class Metrics3D:
    iou: float
    precision: float
    recall: float
    true_positives: int
    true_negatives: int
    false_negatives: int
    false_positives: int

    def as_dict(self) -> dict:
        return asdict(self)


# --------------------------------------------------------------------------
# Solid voxelization


def _voxelize_mesh(mesh: TriangleMesh, spec: GridSpec, name) -> np.ndarray:
    nx, ny, nz = spec.dims
    xs, ys, zs = (spec.axis_centers(a) for a in range(3))
    v, t = mesh.vertices, mesh.triangles
    a, b, c = (np.ascontiguousarray(v[t[:, i]]) for i in range(3))
    j, k, x = _kernels.row_crossings(ys, zs, a, b, c)
    per_row = np.bincount(j * nz + k, minlength=ny * nz)
    if np.any(per_row % 2):
        bad = int(np.flatnonzero(per_row % 2)[0])
        raise NotWatertightError(
            f"object {name} is not watertight: odd crossing count on voxel row "
            f"(j={bad // nz}, k={bad % nz})")
    # each crossing flips the inside state of all voxel centers strictly beyond it
    first = np.searchsorted(xs, x, side="right")
    toggles = np.zeros((nx + 1, ny, nz), dtype=np.int64)
    np.add.at(toggles, (first, j, k), 1)
    return (np.cumsum(toggles[:nx], axis=0) % 2).astype(bool)


def solid_voxelize(objects, spec: GridSpec) -> OccupancyGrid:
    """Voxels whose centers lie inside any of the watertight meshes.

    ``objects`` is a :class:`SceneDescription` or a sequence of
    ``(object_id, world-space TriangleMesh)``. Inside/outside is decided by
    the parity of surface crossings along x-parallel rows through the voxel
    centers.
    """
    if isinstance(objects, SceneDescription):
        objects = [(o.id, o.world_mesh()) for o in objects.objects]
    occ = np.zeros(spec.dims, dtype=bool)
    for oid, mesh in objects:
        occ |= _voxelize_mesh(mesh, spec, oid)
    return OccupancyGrid(spec, occ)


# --------------------------------------------------------------------------
# 2D metrics


def metrics_2d(pred, gt, mask, eps: float = EPS_THICKNESS) -> Metrics2D:
    """Relative and RMS errors of predicted vs. ground-truth thickness.

    Only pixels with ``mask != 0`` and ``gt > eps`` are scored; predictions
    are floored at ``eps`` inside the logarithm.
    """
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    mask = np.asarray(mask)
    if not (pred.shape == gt.shape == mask.shape):
        raise DataError(f"shape mismatch: pred {pred.shape}, gt {gt.shape}, mask {mask.shape}")
    valid = (mask != 0) & (gt > eps)
    n = int(valid.sum())
    if n == 0:
        raise DataError("no valid pixels")
    t = gt[valid]
    p = pred[valid]
    if not np.all(np.isfinite(p)):
        raise DataError("prediction has non-finite values on evaluated pixels")
    diff = t - p
    return Metrics2D(
        abs_rel=float(np.mean(np.abs(diff) / t)),
        sqr_rel=float(np.mean(diff ** 2 / t)),
        rmse_linear=float(np.sqrt(np.mean(diff ** 2))),
        rmse_log=float(np.sqrt(np.mean((np.log(t) - np.log(np.maximum(p, eps))) ** 2))),
        n_pixels=n,
    )


# --------------------------------------------------------------------------
# 3D metrics


def metrics_3d(recon: OccupancyGrid, gt: OccupancyGrid) -> Metrics3D:
    """IoU, precision and recall of a reconstruction against ground truth.

    Degenerate ratios (zero denominators) are reported as 0.
    """
    if recon.spec != gt.spec:
        raise DataError("occupancy grids do not share dims/origin/voxel size")
    r = recon.occupied
    g = gt.occupied
    tp = int(np.count_nonzero(r & g))
    fp = int(np.count_nonzero(r & ~g))
    fn = int(np.count_nonzero(~r & g))
    tn = int(r.size - tp - fp - fn)
    union = tp + fp + fn
    return Metrics3D(
        iou=tp / union if union else 0.0,
        precision=tp / (tp + fp) if tp + fp else 0.0,
        recall=tp / (tp + fn) if tp + fn else 0.0,
        true_positives=tp, true_negatives=tn, false_negatives=fn, false_positives=fp,
    )


@dataclass(frozen=True)
class ConvergenceRow:
    frame_index: int
    iou: float
    precision: float
    recall: float
    mean_iou: float
    mean_precision: float
    mean_recall: float
    n_updated: int


def convergence_curves(frames, grid, gt: OccupancyGrid, config: FusionConfig,
                       intrinsics: CameraIntrinsics, n_jobs: int = 1) -> list[ConvergenceRow]:
    """Integrate frames in order and score the volume after each one.

    ``grid`` is a :class:`TsdfGrid` (updated in place) or a :class:`GridSpec`
    (a fresh volume is created). Each row also carries the running mean of
    the per-frame scores.
    """
    if isinstance(grid, GridSpec):
        grid = TsdfGrid.empty(grid)
    rows = []
    sums = np.zeros(3)
    for n, frame in enumerate(frames, 1):
        n_upd = integrate_frame(grid, frame, intrinsics, config, n_jobs)
        m = metrics_3d(occupancy_from_grid(grid, config), gt)
        sums += (m.iou, m.precision, m.recall)
        mean = sums / n
        rows.append(ConvergenceRow(frame.frame_index, m.iou, m.precision, m.recall,
                                   float(mean[0]), float(mean[1]), float(mean[2]), n_upd))
    if not rows:
        raise DataError("convergence_curves needs at least one frame")
    return rows


# --------------------------------------------------------------------------
# Surface export


def extract_blocky_surface(occ: OccupancyGrid) -> TriangleMesh:
    """Two outward-facing triangles for every occupied/free voxel interface.

    Vertices sit on voxel corners and are shared, so a bounded occupancy
    yields a closed mesh.
    """
    spec = occ.spec
    nx, ny, nz = spec.dims
    padded = np.pad(occ.occupied, 1)
    quads = []
    for axis in range(3):
        b, c = (axis + 1) % 3, (axis + 2) % 3
        for sign in (1, -1):
            nb = np.roll(padded, -sign, axis=axis)[1:-1, 1:-1, 1:-1]
            ijk = np.argwhere(occ.occupied & ~nb)
            if len(ijk) == 0:
                continue
            base = ijk.copy()
            if sign > 0:
                base[:, axis] += 1
            offs = [(0, 0), (1, 0), (1, 1), (0, 1)]
            if sign < 0:
                offs = offs[::-1]
            corners = np.empty((len(ijk), 4, 3), dtype=np.int64)
            for q, (db, dc) in enumerate(offs):
                corners[:, q] = base
                corners[:, q, b] += db
                corners[:, q, c] += dc
            quads.append(corners)
    if not quads:
        return TriangleMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64), False)
    corners = np.concatenate(quads)
    key = corners[..., 0] + (nx + 1) * (corners[..., 1] + (ny + 1) * corners[..., 2])
    uniq, inv = np.unique(key.ravel(), return_inverse=True)
    inv = inv.reshape(-1, 4)
    ci = np.column_stack([uniq % (nx + 1), (uniq // (nx + 1)) % (ny + 1), uniq // ((nx + 1) * (ny + 1))])
    verts = spec.origin - 0.5 * spec.voxel_size + spec.voxel_size * ci
    tris = np.concatenate([inv[:, [0, 1, 2]], inv[:, [0, 2, 3]]])
    # interleave so each quad's two triangles are adjacent
    tris = tris.reshape(2, -1, 3).transpose(1, 0, 2).reshape(-1, 3)
    return TriangleMesh(verts, tris, is_watertight(tris))
