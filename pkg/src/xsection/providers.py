"""Thickness sources and the per-object pre-processing around them.

A thickness frame is produced either by the renderer (oracle), by a single
global mean (baseline) or from externally predicted per-object patches.
Per-object patches are cut from 4:3 boxes around each instance, with holes
in the depth filled and the object/background regions mean-centered.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_image, check_same_shape
from .exceptions import DataError, FormatError
from .scene_io import FrameBundle, read_csv, read_float_map

MANIFEST_COLUMNS = ["frame", "object_id", "x", "y", "w", "h", "patch_path"]


@dataclass(frozen=True)
class BBox:
    """Pixel rectangle ``[x, x + w) x [y, y + h)``."""

    x: int
    y: int
    w: int
    h: int
    clipped: bool = False

    @property
    def slices(self):
        return slice(self.y, self.y + self.h), slice(self.x, self.x + self.w)


@dataclass(eq=False)
class ObjectPatch:
    object_id: int
    bbox: BBox
    thickness: np.ndarray | None = None
    silhouette: np.ndarray | None = None
    depth: np.ndarray | None = None  # metric depth crop, used to resolve overlaps
    normalized_depth: np.ndarray | None = None


@dataclass(frozen=True)
class MeanThicknessModel:
    mean_t: float

    def __post_init__(self):
        if not self.mean_t >= 0:
            raise DataError(f"mean thickness must be non-negative, got {self.mean_t}")


# --------------------------------------------------------------------------
# Pre-processing


def tight_bbox(mask) -> BBox:
    ys, xs = np.nonzero(mask)
    if len(ys) == 0:
        raise DataError("empty mask has no bounding box")
    return BBox(int(xs.min()), int(ys.min()), int(xs.max() - xs.min() + 1), int(ys.max() - ys.min() + 1))


def expand_bbox_4_3(bbox: BBox, image_shape) -> BBox:
    """Grow the short side symmetrically to a 4:3 (width:height) box.

    The box is shifted inward when it crosses the image border; if the image
    is too small it is clipped and ``clipped`` is set.
    """
    H, W = image_shape
    if bbox.w <= 0 or bbox.h <= 0:
        raise DataError(f"empty bounding box {bbox}")
    w, h = bbox.w, bbox.h
    if 3 * w < 4 * h:
        w = math.ceil(4 * h / 3)
    elif 3 * w > 4 * h:
        h = math.ceil(3 * w / 4)
    x = bbox.x - (w - bbox.w) // 2
    y = bbox.y - (h - bbox.h) // 2
    clipped = False

    def fit(pos, size, limit):
        nonlocal clipped
        if size > limit:
            clipped = True
            return 0, limit
        return min(max(pos, 0), limit - size), size

    x, w = fit(x, w, W)
    y, h = fit(y, h, H)
    return BBox(int(x), int(y), int(w), int(h), clipped)


def normalize_depth_patch(depth, silhouette) -> np.ndarray:
    """Subtract the object mean from object pixels and the background mean from the rest."""
    depth = np.asarray(depth, dtype=np.float64)
    sil = np.asarray(silhouette).astype(bool)
    check_same_shape(("depth", depth), ("silhouette", sil))
    if not np.all(np.isfinite(depth)):
        raise DataError("depth patch must be finite; fill holes first")
    out = depth.copy()
    for group in (sil, ~sil):
        if group.any():
            out[group] -= depth[group].mean()
    return out


def fill_depth_holes(depth, tol: float = 1e-6, max_iter: int = 100_000) -> np.ndarray:
    """Replace NaNs by iterated 4-neighbor averaging until the update is below ``tol``.

    Finite pixels are never modified; holes start from the nearest finite
    value, so the result stays within the range of the input.
    """
    depth = check_image(depth, "depth").astype(np.float64)
    holes = ~np.isfinite(depth)
    if not holes.any():
        return depth.copy()
    if holes.all():
        raise DataError("depth map has no finite pixels")
    idx = ndimage.distance_transform_edt(holes, return_distances=False, return_indices=True)
    out = depth[tuple(idx)]
    ones = np.ones_like(out)
    counts = _neighbor_sum(ones)
    for _ in range(max_iter):
        avg = _neighbor_sum(out) / counts
        change = np.abs(avg[holes] - out[holes]).max()
        out[holes] = avg[holes]
        if change < tol:
            break
    return out


def _neighbor_sum(a):
    s = np.zeros_like(a)
    s[1:] += a[:-1]
    s[:-1] += a[1:]
    s[:, 1:] += a[:, :-1]
    s[:, :-1] += a[:, 1:]
    return s


def extract_object_patches(frame: FrameBundle, fill_holes: bool = True, normalize: bool = True):
    """Cut one 4:3 patch per instance with silhouette, depth and thickness crops."""
    depth = fill_depth_holes(frame.depth) if fill_holes and np.isfinite(frame.depth).any() else frame.depth
    patches = []
    for oid in np.unique(frame.masks):
        if oid == 0:
            continue
        sil_full = frame.masks == oid
        bb = expand_bbox_4_3(tight_bbox(sil_full), frame.shape)
        sl = bb.slices
        sil = sil_full[sl]
        d = depth[sl].astype(np.float64)
        nd = normalize_depth_patch(d, sil) if normalize else None
        patches.append(ObjectPatch(int(oid), bb, frame.thickness[sl].copy(), sil, d, nd))
    return patches


class ObjectPatchExtractor(TransformerMixin, BaseEstimator):
    """Transformer mapping frames to their lists of :class:`ObjectPatch`."""

    def __init__(self, fill_holes=True, normalize=True):
        self.fill_holes = fill_holes
        self.normalize = normalize

    def fit(self, X=None, y=None):
        return self

    def transform(self, X):
        if isinstance(X, FrameBundle):
            X = [X]
        return [extract_object_patches(f, self.fill_holes, self.normalize) for f in X]


# --------------------------------------------------------------------------
# Composition


def resample_bilinear(patch, shape) -> np.ndarray:
    """Resize ``patch`` to ``shape`` (h, w) with pixel-center aligned bilinear sampling."""
    patch = np.asarray(patch, dtype=np.float64)
    h, w = shape
    if patch.shape == (h, w):
        return patch.copy()
    sy = (np.arange(h) + 0.5) * patch.shape[0] / h - 0.5
    sx = (np.arange(w) + 0.5) * patch.shape[1] / w - 0.5
    yy, xx = np.meshgrid(sy, sx, indexing="ij")
    return ndimage.map_coordinates(patch, [yy, xx], order=1, mode="nearest")


def compose_thickness_frame(patches, depth, masks) -> np.ndarray:
    """Merge per-object thickness patches into one frame.

    A patch claims the pixels of its silhouette (default: ``masks == id``
    inside its box). Where several patches claim a pixel the one with the
    smaller depth wins, using the patch's own depth when it carries one and
    the frame depth otherwise; ties go to the lower object id. Pixels with
    ``masks == 0`` are 0.
    """
    depth = check_image(depth, "depth")
    masks = check_image(masks, "masks", shape=depth.shape)
    out = np.zeros(depth.shape, dtype=np.float32)
    best = np.full(depth.shape, np.inf)
    claimed = np.zeros(depth.shape, dtype=bool)
    for p in sorted(patches, key=lambda p: p.object_id):
        sl = p.bbox.slices
        vals = np.asarray(p.thickness)
        if vals.shape != (p.bbox.h, p.bbox.w):
            raise DataError(f"object {p.object_id}: patch shape {vals.shape} does not match "
                            f"bbox {p.bbox.h}x{p.bbox.w}")
        sil = (masks[sl] == p.object_id) if p.silhouette is None else np.asarray(p.silhouette, bool)
        key = depth[sl] if p.depth is None else np.asarray(p.depth)
        key = np.where(np.isnan(key), np.inf, key)
        take = sil & (~claimed[sl] | (key < best[sl]))
        out[sl][take] = vals[take]
        best[sl][take] = key[take]
        claimed[sl] |= sil
    out[masks == 0] = 0.0
    return out


# --------------------------------------------------------------------------
# Providers


def oracle_provider(scene, view, n_jobs: int = 1) -> np.ndarray:
    """Rendered ground-truth thickness for a view."""
    from .renderer import render_thickness_and_masks

    return render_thickness_and_masks(scene, view, n_jobs)[0]


def _mean_thickness(pairs) -> MeanThicknessModel:
    total, n = 0.0, 0
    for masks, thickness in pairs:
        masks = np.asarray(masks)
        thickness = np.asarray(thickness, dtype=np.float64)
        check_same_shape(("masks", masks), ("thickness", thickness))
        sel = (masks != 0) & (thickness > 0)
        total += float(thickness[sel].sum())
        n += int(sel.sum())
    if n == 0:
        raise DataError("training frames contain no object pixels")
    return MeanThicknessModel(total / n)


def fit_mean_baseline(frames) -> MeanThicknessModel:
    """Mean thickness over every object pixel with positive thickness."""
    return _mean_thickness((f.masks, f.thickness) for f in frames)


def predict_mean(model: MeanThicknessModel, masks) -> np.ndarray:
    masks = check_image(masks, "masks")
    return np.where(masks != 0, np.float32(model.mean_t), np.float32(0.0)).astype(np.float32)


class MeanThicknessBaseline(BaseEstimator):
    """Predicts one global mean thickness inside every silhouette.

    ``fit(masks, thickness)`` takes sequences of instance-mask and thickness
    images; ``predict(masks)`` accepts one mask image or a sequence.
    """

    def fit(self, X, y):
        self.model_ = _mean_thickness(zip(X, y))
        self.mean_t_ = self.model_.mean_t
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        X = np.asarray(X)
        if X.ndim == 2:
            return predict_mean(self.model_, X)
        return np.stack([predict_mean(self.model_, m) for m in X])


def read_manifest(path) -> list[dict]:
    path = Path(path)
    try:
        rows = read_csv(path)
    except OSError as e:
        raise FormatError(f"cannot read manifest {path}: {e}") from e
    if rows and list(rows[0].keys()) != MANIFEST_COLUMNS:
        raise FormatError(f"{path}: manifest header must be {','.join(MANIFEST_COLUMNS)}")
    out = []
    for r in rows:
        try:
            out.append({"frame": int(r["frame"]), "object_id": int(r["object_id"]),
                        "bbox": BBox(int(r["x"]), int(r["y"]), int(r["w"]), int(r["h"])),
                        "patch_path": path.parent / r["patch_path"]})
        except (TypeError, ValueError) as e:
            raise FormatError(f"{path}: bad manifest row {r}") from e
    return out


def external_provider(manifest, frame_index: int, depth, masks) -> np.ndarray:
    """Compose a thickness frame from predicted per-object patch files.

    Patches may be stored at a different resolution than their bbox as long
    as the aspect ratio agrees (within one pixel); they are bilinearly
    resampled into the box.
    """
    rows = read_manifest(manifest) if isinstance(manifest, (str, Path)) else manifest
    patches = []
    for r in rows:
        if r["frame"] != frame_index:
            continue
        p = Path(r["patch_path"])
        if not p.exists():
            raise DataError(f"missing patch file {p}")
        vals = read_float_map(p)
        bb = r["bbox"]
        ph, pw = vals.shape
        if abs(ph * bb.w / pw - bb.h) > 1.0:
            raise DataError(f"{p}: patch {pw}x{ph} does not match bbox {bb.w}x{bb.h}")
        if bb.x < 0 or bb.y < 0 or bb.x + bb.w > masks.shape[1] or bb.y + bb.h > masks.shape[0]:
            raise DataError(f"{p}: bbox {bb} outside the {masks.shape[1]}x{masks.shape[0]} frame")
        vals = np.maximum(np.nan_to_num(resample_bilinear(vals, (bb.h, bb.w)), nan=0.0), 0.0)
        patches.append(ObjectPatch(r["object_id"], bb, vals))
    return compose_thickness_frame(patches, depth, masks)
