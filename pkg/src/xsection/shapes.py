"""Closed triangle-mesh primitives with outward (counter-clockwise) winding."""

from __future__ import annotations

import numpy as np

from .scene_io import TriangleMesh, is_watertight


def _mesh(v, f) -> TriangleMesh:
    f = np.asarray(f, dtype=np.int64)
    return TriangleMesh(np.asarray(v, dtype=np.float64), f, is_watertight(f))


def icosphere(radius: float = 1.0, subdivisions: int = 3, center=(0.0, 0.0, 0.0)) -> TriangleMesh:
    """Subdivided icosahedron: ``10 * 4**k + 2`` vertices, ``20 * 4**k`` faces."""
    p = (1 + 5 ** 0.5) / 2
    verts = [(-1, p, 0), (1, p, 0), (-1, -p, 0), (1, -p, 0),
             (0, -1, p), (0, 1, p), (0, -1, -p), (0, 1, -p),
             (p, 0, -1), (p, 0, 1), (-p, 0, -1), (-p, 0, 1)]
    verts = [np.array(v, dtype=np.float64) / np.linalg.norm(v) for v in verts]
    faces = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
             (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
             (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
             (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    for _ in range(subdivisions):
        cache: dict[tuple[int, int], int] = {}

        def mid(a, b):
            key = (a, b) if a < b else (b, a)
            if key not in cache:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new
    v = np.array(verts) * radius + np.asarray(center, dtype=np.float64)
    return _mesh(v, faces)


def box(size=(1.0, 1.0, 1.0), center=(0.0, 0.0, 0.0)) -> TriangleMesh:
    """Axis-aligned box, 8 vertices and 12 triangles."""
    h = np.asarray(size, dtype=np.float64) / 2
    c = np.asarray(center, dtype=np.float64)
    v = np.array([[x, y, z] for z in (-1, 1) for y in (-1, 1) for x in (-1, 1)], dtype=np.float64)
    faces = [
        (0, 2, 1), (1, 2, 3),  # -z
        (4, 5, 6), (5, 7, 6),  # +z
        (0, 1, 4), (1, 5, 4),  # -y
        (2, 6, 3), (3, 6, 7),  # +y
        (0, 4, 2), (2, 4, 6),  # -x
        (1, 3, 5), (3, 7, 5),  # +x
    ]
    return _mesh(v * h + c, faces)


def prism(polygon, height: float, z0: float = 0.0) -> TriangleMesh:
    """Extrude a counter-clockwise polygon (star-shaped about its first vertex) along +z."""
    poly = np.asarray(polygon, dtype=np.float64)
    n = len(poly)
    v = np.vstack([np.column_stack([poly, np.full(n, z0)]),
                   np.column_stack([poly, np.full(n, z0 + height)])])
    faces = []
    for i in range(1, n - 1):
        faces.append((0, i + 1, i))          # bottom, facing -z
        faces.append((n, n + i, n + i + 1))  # top, facing +z
    for i in range(n):
        j = (i + 1) % n
        faces += [(i, j, n + j), (i, n + j, n + i)]
    return _mesh(v, faces)


def cylinder(radius: float, height: float, segments: int = 64, center=(0.0, 0.0, 0.0)) -> TriangleMesh:
    """Closed cylinder along z, centered at ``center``."""
    ang = 2 * np.pi * np.arange(segments) / segments
    poly = np.column_stack([radius * np.cos(ang), radius * np.sin(ang)])
    m = prism(poly, height, -height / 2)
    return TriangleMesh(m.vertices + np.asarray(center, dtype=np.float64), m.triangles, m.watertight_hint)


def l_shape(arm: float = 0.2, width: float = 0.1, height: float = 0.1, center=(0.0, 0.0, 0.0)) -> TriangleMesh:
    """Non-convex L-shaped block; ``arm`` is the outer leg length."""
    a, w = arm, width
    poly = [(0, 0), (a, 0), (a, w), (w, w), (w, a), (0, a)]
    m = prism(poly, height, -height / 2)
    shift = np.asarray(center, dtype=np.float64) - np.array([a / 2, a / 2, 0.0])
    return TriangleMesh(m.vertices + shift, m.triangles, m.watertight_hint)


def signed_volume(mesh: TriangleMesh) -> float:
    a, b, c = (mesh.vertices[mesh.triangles[:, i]] for i in range(3))
    return float(np.einsum("ij,ij->i", a, np.cross(b, c)).sum() / 6.0)
