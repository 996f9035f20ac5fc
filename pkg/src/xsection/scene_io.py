"""Meshes, scene descriptions and on-disk raster/grid formats.

File formats:

* float maps: Portable Float Map, magic ``Pf``, little-endian (scale -1.0),
  rows stored bottom-to-top;
* instance masks: binary PGM (``P5``, maxval 255);
* meshes: ASCII OBJ, only ``v`` and triangular ``f`` records are read;
* scenes: one JSON document with ``"version": 1``, poses as 3x4 row-major;
* TSDF grids: ``XSGRID01`` dump (see :func:`save_grid`);
* reports: CSV with a header row, LF endings, floats at 6 significant digits.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import DataError, FormatError
from .geometry import CameraIntrinsics, Pose
from .grid import GridSpec, TsdfGrid

logger = logging.getLogger(__name__)

DEGENERATE_AREA = 1e-12
GRID_MAGIC = b"XSGRID01"
SCENE_VERSION = 1


# --------------------------------------------------------------------------
# Meshes


@dataclass(eq=False)
class TriangleMesh:
    vertices: np.ndarray
    triangles: np.ndarray
    watertight_hint: bool = False

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if self.triangles.size and (self.triangles.min() < 0 or self.triangles.max() >= len(self.vertices)):
            raise DataError("triangle index out of range")

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def triangle_areas(self) -> np.ndarray:
        a, b, c = (self.vertices[self.triangles[:, i]] for i in range(3))
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)

    def transformed(self, pose: Pose) -> "TriangleMesh":
        return TriangleMesh(pose.apply(self.vertices), self.triangles.copy(), self.watertight_hint)

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)


def is_watertight(triangles: np.ndarray) -> bool:
    """True if every directed edge is matched by exactly one opposite edge."""
    tris = np.asarray(triangles, dtype=np.int64)
    if len(tris) == 0:
        return False
    edges = np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
    fwd = {tuple(e) for e in edges.tolist()}
    if len(fwd) != len(edges):
        return False
    return all((b, a) in fwd for a, b in fwd)


def drop_degenerate(mesh: TriangleMesh) -> tuple[TriangleMesh, int]:
    keep = mesh.triangle_areas() > DEGENERATE_AREA
    n_bad = int((~keep).sum())
    tris = mesh.triangles[keep]
    return TriangleMesh(mesh.vertices, tris, is_watertight(tris)), n_bad


def parse_obj(text: str, name: str = "<string>") -> TriangleMesh:
    verts, faces = [], []
    for lineno, line in enumerate(text.splitlines(), 1):
        parts = line.split()
        if not parts:
            continue
        tag = parts[0]
        if tag == "v":
            try:
                verts.append([float(x) for x in parts[1:4]])
            except ValueError as e:
                raise FormatError(f"{name}:{lineno}: bad vertex record: {line!r}") from e
            if len(verts[-1]) != 3:
                raise FormatError(f"{name}:{lineno}: vertex needs 3 coordinates")
        elif tag == "f":
            if len(parts) != 4:
                raise FormatError(f"{name}:{lineno}: only triangular faces are supported "
                                  f"(got {len(parts) - 1} vertices)")
            idx = []
            for p in parts[1:]:
                try:
                    k = int(p.split("/")[0])
                except ValueError as e:
                    raise FormatError(f"{name}:{lineno}: bad face index {p!r}") from e
                # OBJ indices are 1-based; negatives count back from the last vertex
                k = k - 1 if k > 0 else len(verts) + k
                if not 0 <= k < len(verts):
                    raise FormatError(f"{name}:{lineno}: face references vertex {p} "
                                      f"but only {len(verts)} are defined")
                idx.append(k)
            faces.append(idx)
    mesh = TriangleMesh(np.array(verts, dtype=np.float64).reshape(-1, 3),
                        np.array(faces, dtype=np.int64).reshape(-1, 3))
    mesh, n_bad = drop_degenerate(mesh)
    if n_bad:
        warnings.warn(f"{name}: dropped {n_bad} degenerate triangles", stacklevel=2)
    return mesh


def load_mesh(path) -> TriangleMesh:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise FormatError(f"cannot read mesh {path}: {e}") from e
    return parse_obj(text, str(path))


def write_mesh(path, mesh: TriangleMesh) -> None:
    buf = io.StringIO()
    for v in mesh.vertices:
        buf.write("v %.9g %.9g %.9g\n" % tuple(v))
    for t in mesh.triangles:
        buf.write("f %d %d %d\n" % (t[0] + 1, t[1] + 1, t[2] + 1))
    Path(path).write_text(buf.getvalue())


# --------------------------------------------------------------------------
# Scenes and frames


@dataclass(eq=False)
class SceneObject:
    id: int
    pose: Pose
    mesh_path: Path | None = None
    mesh: TriangleMesh | None = None

    def world_mesh(self) -> TriangleMesh:
        if self.mesh is None:
            self.mesh = load_mesh(self.mesh_path)
        return self.mesh.transformed(self.pose)


@dataclass(eq=False)
class SceneDescription:
    objects: list[SceneObject]
    camera: CameraIntrinsics
    trajectory: list[Pose]
    plane_height: float | None = None

    def __post_init__(self):
        ids = [o.id for o in self.objects]
        if any(i < 1 or i > 255 for i in ids):
            raise DataError(f"object ids must be in 1..255, got {ids}")
        if len(set(ids)) != len(ids):
            raise DataError(f"duplicate object ids in {ids}")
        if not self.trajectory:
            raise DataError("scene trajectory is empty")


def _pose_to_json(p: Pose) -> list:
    return p.matrix().tolist()


def scene_to_dict(scene: SceneDescription, base_dir=None) -> dict:
    objs = []
    for o in scene.objects:
        mp = o.mesh_path
        if mp is not None and base_dir is not None:
            try:
                mp = Path(mp).resolve().relative_to(Path(base_dir).resolve())
            except ValueError:
                pass
        objs.append({"id": o.id, "mesh": None if mp is None else str(mp), "pose": _pose_to_json(o.pose)})
    d = {
        "version": SCENE_VERSION,
        "camera": scene.camera.to_dict(),
        "objects": objs,
        "trajectory": [_pose_to_json(p) for p in scene.trajectory],
    }
    if scene.plane_height is not None:
        d["background"] = {"plane_height": scene.plane_height}
    return d


def scene_from_dict(d: dict, base_dir=".") -> SceneDescription:
    if d.get("version") != SCENE_VERSION:
        raise FormatError(f"unsupported scene version {d.get('version')!r} (expected {SCENE_VERSION})")
    base_dir = Path(base_dir)
    try:
        camera = CameraIntrinsics.from_dict(d["camera"])
        objects = [SceneObject(int(o["id"]), Pose.from_matrix(o["pose"]), base_dir / o["mesh"])
                   for o in d.get("objects", [])]
        trajectory = [Pose.from_matrix(m) for m in d.get("trajectory", [])]
    except (KeyError, TypeError) as e:
        raise FormatError(f"malformed scene description: {e!r}") from e
    bg = d.get("background") or {}
    plane = bg.get("plane_height")
    return SceneDescription(objects, camera, trajectory, None if plane is None else float(plane))


def load_scene(path, load_meshes: bool = True) -> SceneDescription:
    path = Path(path)
    try:
        d = json.loads(path.read_text())
    except OSError as e:
        raise FormatError(f"cannot read scene {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: invalid JSON: {e}") from e
    scene = scene_from_dict(d, path.parent)
    if load_meshes:
        for o in scene.objects:
            o.mesh = load_mesh(o.mesh_path)
    return scene


def save_scene(path, scene: SceneDescription) -> None:
    """Write the scene JSON; in-memory meshes without a path are written next to it."""
    path = Path(path)
    for o in scene.objects:
        if o.mesh_path is None:
            o.mesh_path = path.parent / f"object_{o.id:03d}.obj"
            write_mesh(o.mesh_path, o.mesh)
    path.write_text(json.dumps(scene_to_dict(scene, path.parent), indent=1) + "\n")


@dataclass(eq=False)
class FrameBundle:
    """One view: projective depth, thickness, instance masks and camera pose."""

    depth: np.ndarray
    thickness: np.ndarray
    masks: np.ndarray
    pose: Pose
    frame_index: int = 0

    def __post_init__(self):
        self.depth = np.asarray(self.depth, dtype=np.float32)
        self.thickness = np.asarray(self.thickness, dtype=np.float32)
        self.masks = np.asarray(self.masks, dtype=np.uint8)
        if not (self.depth.shape == self.thickness.shape == self.masks.shape) or self.depth.ndim != 2:
            raise DataError(f"frame images disagree in shape: depth {self.depth.shape}, "
                            f"thickness {self.thickness.shape}, masks {self.masks.shape}")
        if np.any(self.thickness < 0):
            raise DataError("negative thickness in frame")
        if np.any(self.thickness[self.masks == 0] != 0):
            raise DataError("non-zero thickness on background pixels")

    @property
    def shape(self):
        return self.depth.shape


def frame_paths(directory, index: int) -> dict[str, Path]:
    d = Path(directory)
    stem = f"frame_{index:05d}"
    return {"depth": d / f"{stem}.depth.pfm",
            "thickness": d / f"{stem}.thick.pfm",
            "masks": d / f"{stem}.mask.pgm"}


def write_frame(directory, frame: FrameBundle) -> list[Path]:
    p = frame_paths(directory, frame.frame_index)
    write_float_map(p["depth"], frame.depth)
    write_float_map(p["thickness"], frame.thickness)
    write_mask(p["masks"], frame.masks)
    return list(p.values())


def read_frame(directory, index: int, pose: Pose) -> FrameBundle:
    p = frame_paths(directory, index)
    for path in p.values():
        if not path.exists():
            raise DataError(f"missing frame file {path}")
    return FrameBundle(read_float_map(p["depth"]), read_float_map(p["thickness"]),
                       read_mask(p["masks"]), pose, index)


# --------------------------------------------------------------------------
# Rasters


def _read_header_tokens(data: bytes, n: int) -> tuple[list[bytes], int]:
    """Read ``n`` whitespace-separated tokens (with ``#`` comments), returning the payload offset."""
    tokens, pos = [], 0
    while len(tokens) < n:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError("truncated header")
        tokens.append(data[start:pos])
    # exactly one whitespace byte separates header from payload
    return tokens, pos + 1


def write_float_map(path, image) -> None:
    img = np.asarray(image, dtype=np.float32)
    if img.ndim != 2 or img.size == 0:
        raise FormatError(f"float map must be a non-empty 2D array, got shape {img.shape}")
    h, w = img.shape
    header = b"Pf\n%d %d\n-1.0\n" % (w, h)
    payload = np.flipud(img).astype("<f4").tobytes()
    Path(path).write_bytes(header + payload)


def read_float_map(path) -> np.ndarray:
    data = Path(path).read_bytes()
    try:
        tokens, off = _read_header_tokens(data, 4)
    except FormatError as e:
        raise FormatError(f"{path}: {e}") from None
    magic, w, h, scale = tokens
    if magic != b"Pf":
        raise FormatError(f"{path}: expected grayscale PFM magic 'Pf', got {magic!r}")
    try:
        w, h, scale = int(w), int(h), float(scale)
    except ValueError as e:
        raise FormatError(f"{path}: bad PFM header") from e
    if w <= 0 or h <= 0:
        raise FormatError(f"{path}: zero-sized image {w}x{h}")
    if scale == 0:
        raise FormatError(f"{path}: PFM scale must be non-zero")
    expected = 4 * w * h
    payload = data[off:]
    if len(payload) != expected:
        raise FormatError(f"{path}: payload has {len(payload)} bytes, header implies {expected}")
    dtype = "<f4" if scale < 0 else ">f4"
    img = np.frombuffer(payload, dtype=dtype).reshape(h, w)
    return np.flipud(img).astype(np.float32)


def write_mask(path, masks) -> None:
    m = np.asarray(masks)
    if m.ndim != 2 or m.size == 0:
        raise FormatError(f"mask must be a non-empty 2D array, got shape {m.shape}")
    if m.min() < 0 or m.max() > 255:
        raise FormatError("instance ids must lie in 0..255")
    h, w = m.shape
    Path(path).write_bytes(b"P5\n%d %d\n255\n" % (w, h) + m.astype(np.uint8).tobytes())


def read_mask(path) -> np.ndarray:
    data = Path(path).read_bytes()
    try:
        tokens, off = _read_header_tokens(data, 4)
    except FormatError as e:
        raise FormatError(f"{path}: {e}") from None
    magic, w, h, maxval = tokens
    if magic != b"P5":
        raise FormatError(f"{path}: expected binary PGM magic 'P5', got {magic!r}")
    w, h, maxval = int(w), int(h), int(maxval)
    if w <= 0 or h <= 0:
        raise FormatError(f"{path}: zero-sized image {w}x{h}")
    if maxval > 255:
        raise FormatError(f"{path}: 16-bit PGM not supported")
    payload = data[off:]
    if len(payload) != w * h:
        raise FormatError(f"{path}: payload has {len(payload)} bytes, header implies {w * h}")
    return np.frombuffer(payload, dtype=np.uint8).reshape(h, w).copy()


# --------------------------------------------------------------------------
# TSDF grid dump


def save_grid(path, grid: TsdfGrid) -> None:
    """Write ``XSGRID01``: u32 dims, f32 voxel size, 3 f32 origin, phi, weights (x fastest)."""
    nx, ny, nz = grid.dims
    header = GRID_MAGIC + struct.pack("<3I4f", nx, ny, nz, grid.voxel_size, *grid.origin)
    phi = np.asarray(grid.phi, dtype="<f4").ravel(order="F").tobytes()
    w = np.asarray(grid.weight, dtype="<f4").ravel(order="F").tobytes()
    Path(path).write_bytes(header + phi + w)


def load_grid(path) -> TsdfGrid:
    data = Path(path).read_bytes()
    if data[:8] != GRID_MAGIC:
        raise FormatError(f"{path}: not an {GRID_MAGIC.decode()} grid (magic {data[:8]!r})")
    if len(data) < 36:
        raise FormatError(f"{path}: truncated grid header")
    nx, ny, nz, vs, ox, oy, oz = struct.unpack_from("<3I4f", data, 8)
    n = nx * ny * nz
    body = data[36:]
    if len(body) != 8 * n:
        raise FormatError(f"{path}: payload has {len(body)} bytes, dims {nx}x{ny}x{nz} imply {8 * n}")
    vals = np.frombuffer(body, dtype="<f4")
    spec = GridSpec((nx, ny, nz), vs, (ox, oy, oz))
    phi = vals[:n].reshape((nx, ny, nz), order="F").astype(np.float32)
    w = vals[n:].reshape((nx, ny, nz), order="F").astype(np.float32)
    return TsdfGrid(spec, np.ascontiguousarray(phi), np.ascontiguousarray(w))


# --------------------------------------------------------------------------
# CSV


def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.6g" % v
    return str(v)


def write_csv(path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([format_value(v) for v in row])


def read_csv(path) -> list[dict]:
    with open(path, newline="") as f:
        return list(csv.DictReader(f))
