"""Compiled inner loops: BVH build/traversal, row rendering, parity voxelization."""

import numba as nb
import numpy as np

LEAF_SIZE = 4
STACK_SIZE = 128
DET_EPS = 1e-18


@nb.njit(cache=True)
def build_bvh(v0, v1, v2):
    """Median-split AABB tree over triangles given by corner arrays (n, 3).

    Returns node arrays and the triangle permutation; leaf ``i`` covers
    ``order[start[i]:start[i] + count[i]]``; inner nodes have ``count == 0``.
    """
    n = v0.shape[0]
    max_nodes = max(1, 2 * n)
    lo = np.empty((max_nodes, 3))
    hi = np.empty((max_nodes, 3))
    left = np.full(max_nodes, -1, np.int64)
    right = np.full(max_nodes, -1, np.int64)
    start = np.zeros(max_nodes, np.int64)
    count = np.zeros(max_nodes, np.int64)
    order = np.arange(n)
    cent = (v0 + v1 + v2) / 3.0

    stack_node = np.empty(max_nodes, np.int64)
    stack_s = np.empty(max_nodes, np.int64)
    stack_e = np.empty(max_nodes, np.int64)
    sp = 0
    n_nodes = 1
    stack_node[0] = 0
    stack_s[0] = 0
    stack_e[0] = n
    sp = 1
    if n == 0:
        lo[0, :] = 0.0
        hi[0, :] = 0.0
        return lo[:1], hi[:1], left[:1], right[:1], start[:1], count[:1], order
    while sp > 0:
        sp -= 1
        node = stack_node[sp]
        s = stack_s[sp]
        e = stack_e[sp]
        clo = np.full(3, np.inf)
        chi = np.full(3, -np.inf)
        for a in range(3):
            lo[node, a] = np.inf
            hi[node, a] = -np.inf
        for ii in range(s, e):
            t = order[ii]
            for a in range(3):
                m = min(v0[t, a], v1[t, a], v2[t, a])
                M = max(v0[t, a], v1[t, a], v2[t, a])
                if m < lo[node, a]:
                    lo[node, a] = m
                if M > hi[node, a]:
                    hi[node, a] = M
                c = cent[t, a]
                if c < clo[a]:
                    clo[a] = c
                if c > chi[a]:
                    chi[a] = c
        if e - s <= LEAF_SIZE:
            start[node] = s
            count[node] = e - s
            continue
        axis = 0
        ext = chi[0] - clo[0]
        for a in range(1, 3):
            if chi[a] - clo[a] > ext:
                ext = chi[a] - clo[a]
                axis = a
        seg = order[s:e].copy()
        keys = np.empty(e - s)
        for ii in range(e - s):
            keys[ii] = cent[seg[ii], axis]
        srt = np.argsort(keys, kind="mergesort")
        for ii in range(e - s):
            order[s + ii] = seg[srt[ii]]
        mid = (s + e) // 2
        l = n_nodes
        r = n_nodes + 1
        n_nodes += 2
        left[node] = l
        right[node] = r
        stack_node[sp] = r
        stack_s[sp] = mid
        stack_e[sp] = e
        sp += 1
        stack_node[sp] = l
        stack_s[sp] = s
        stack_e[sp] = mid
        sp += 1
    return (lo[:n_nodes], hi[:n_nodes], left[:n_nodes], right[:n_nodes],
            start[:n_nodes], count[:n_nodes], order)


@nb.njit(cache=True, inline="always")
def _box_entry(lo, hi, node, o, d, tmax):
    """Entry distance of the ray into node's box, or inf if missed before tmax."""
    t0 = -np.inf
    t1 = tmax
    for a in range(3):
        if d[a] == 0.0:
            if o[a] < lo[node, a] or o[a] > hi[node, a]:
                return np.inf
        else:
            inv = 1.0 / d[a]
            ta = (lo[node, a] - o[a]) * inv
            tb = (hi[node, a] - o[a]) * inv
            if ta > tb:
                ta, tb = tb, ta
            if ta > t0:
                t0 = ta
            if tb < t1:
                t1 = tb
            if t0 > t1:
                return np.inf
    return t0


@nb.njit(cache=True)
def closest_hit(root, lo, hi, left, right, start, count, v0, e1, e2, o, d, tmin, tmax):
    """Closest triangle hit with ``tmin < s < tmax`` in the subtree at ``root``.

    Triangles are stored pre-permuted so leaves index them directly.
    Returns ``(s, triangle)``; ``triangle == -1`` on a miss.
    """
    best_s = tmax
    best_t = -1
    stack = np.empty(STACK_SIZE, np.int64)
    sp = 0
    if _box_entry(lo, hi, root, o, d, best_s) == np.inf:
        return best_s, best_t
    stack[0] = root
    sp = 1
    while sp > 0:
        sp -= 1
        node = stack[sp]
        if count[node] > 0:
            for t in range(start[node], start[node] + count[node]):
                # Moller-Trumbore
                px = d[1] * e2[t, 2] - d[2] * e2[t, 1]
                py = d[2] * e2[t, 0] - d[0] * e2[t, 2]
                pz = d[0] * e2[t, 1] - d[1] * e2[t, 0]
                det = e1[t, 0] * px + e1[t, 1] * py + e1[t, 2] * pz
                if abs(det) < DET_EPS:
                    continue
                inv = 1.0 / det
                sx = o[0] - v0[t, 0]
                sy = o[1] - v0[t, 1]
                sz = o[2] - v0[t, 2]
                u = (sx * px + sy * py + sz * pz) * inv
                if u < 0.0 or u > 1.0:
                    continue
                qx = sy * e1[t, 2] - sz * e1[t, 1]
                qy = sz * e1[t, 0] - sx * e1[t, 2]
                qz = sx * e1[t, 1] - sy * e1[t, 0]
                v = (d[0] * qx + d[1] * qy + d[2] * qz) * inv
                if v < 0.0 or u + v > 1.0:
                    continue
                s = (e2[t, 0] * qx + e2[t, 1] * qy + e2[t, 2] * qz) * inv
                if s > tmin and s < best_s:
                    best_s = s
                    best_t = t
            continue
        a = left[node]
        b = right[node]
        ta = _box_entry(lo, hi, a, o, d, best_s)
        tb = _box_entry(lo, hi, b, o, d, best_s)
        # push farther child first so the nearer one is popped next
        if ta <= tb:
            if tb != np.inf:
                stack[sp] = b
                sp += 1
            if ta != np.inf:
                stack[sp] = a
                sp += 1
        else:
            if ta != np.inf:
                stack[sp] = a
                sp += 1
            if tb != np.inf:
                stack[sp] = b
                sp += 1
    return best_s, best_t


@nb.njit(cache=True, inline="always")
def _facing_front(e1, e2, t, d):
    nx = e1[t, 1] * e2[t, 2] - e1[t, 2] * e2[t, 1]
    ny = e1[t, 2] * e2[t, 0] - e1[t, 0] * e2[t, 2]
    nz = e1[t, 0] * e2[t, 1] - e1[t, 1] * e2[t, 0]
    return d[0] * nx + d[1] * ny + d[2] * nz < 0.0


@nb.njit(cache=True)
def first_hit_packed(roots, inst_ids, lo, hi, left, right, start, count, v0, e1, e2,
                     has_plane, plane_z, o, d, eps):
    """First hit over all instances and the plane.

    Returns ``(s, instance_index, triangle, front)``; ``instance_index`` is
    -1 for the plane and -2 for a miss.
    """
    best_s = np.inf
    best_i = -2
    best_t = -1
    for i in range(roots.shape[0]):
        s, t = closest_hit(roots[i], lo, hi, left, right, start, count, v0, e1, e2, o, d, eps, best_s)
        if t >= 0:
            best_s = s
            best_i = i
            best_t = t
    front = True
    if has_plane and d[2] != 0.0:
        s = (plane_z - o[2]) / d[2]
        if s > eps and s < best_s:
            best_s = s
            best_i = -1
            best_t = -1
            front = d[2] < 0.0
    if best_t >= 0:
        front = _facing_front(e1, e2, best_t, d)
    return best_s, best_i, best_t, front


@nb.njit(cache=True, nogil=True)
def render_rows(row0, row1, origin, dirs, zscale, roots, inst_ids,
                lo, hi, left, right, start, count, v0, e1, e2,
                has_plane, plane_z, eps, out_depth, out_thick, out_mask):
    """Render depth, thickness and masks for rows ``[row0, row1)``.

    Returns the number of pixels whose visible object had no matching
    back surface.
    """
    n_warn = 0
    W = dirs.shape[1]
    d = np.empty(3)
    for v in range(row0, row1):
        for u in range(W):
            for a in range(3):
                d[a] = dirs[v, u, a]
            zs = zscale[v, u]
            s_in, inst, tri, front = first_hit_packed(
                roots, inst_ids, lo, hi, left, right, start, count, v0, e1, e2,
                has_plane, plane_z, origin, d, eps)
            if inst == -2:
                out_depth[v, u] = np.nan
                out_thick[v, u] = 0.0
                out_mask[v, u] = 0
                continue
            out_depth[v, u] = s_in * zs
            if inst == -1:
                out_thick[v, u] = 0.0
                out_mask[v, u] = 0
                continue
            out_mask[v, u] = inst_ids[inst]
            thick = 0.0
            if front:
                s_out, t_out = closest_hit(roots[inst], lo, hi, left, right, start, count,
                                           v0, e1, e2, origin, d, s_in + eps, np.inf)
                if t_out >= 0 and not _facing_front(e1, e2, t_out, d):
                    thick = (s_out - s_in) * zs
                else:
                    n_warn += 1
            else:
                n_warn += 1
            out_thick[v, u] = thick
    return n_warn


@nb.njit(cache=True, nogil=True)
def row_crossings(ys, zs, a, b, c):
    """Crossings of x-parallel lines ``(y_j, z_k)`` with triangles.

    Ties on triangle edges are broken with a top-left rule in the (y, z)
    projection, so a line through a shared edge or vertex of a closed
    surface is counted once. Returns ``(j, k, x)`` arrays.
    """
    n = a.shape[0]
    cap = 1024
    oj = np.empty(cap, np.int64)
    ok = np.empty(cap, np.int64)
    ox = np.empty(cap)
    m = 0
    for t in range(n):
        ax, ay, az = a[t, 0], a[t, 1], a[t, 2]
        bx, by, bz = b[t, 0], b[t, 1], b[t, 2]
        cx, cy, cz = c[t, 0], c[t, 1], c[t, 2]
        area = (by - ay) * (cz - az) - (bz - az) * (cy - ay)
        if area == 0.0:
            continue
        if area < 0.0:
            bx, by, bz, cx, cy, cz = cx, cy, cz, bx, by, bz
            area = -area
        j0 = np.searchsorted(ys, min(ay, by, cy))
        j1 = np.searchsorted(ys, max(ay, by, cy), side="right")
        k0 = np.searchsorted(zs, min(az, bz, cz))
        k1 = np.searchsorted(zs, max(az, bz, cz), side="right")
        for j in range(j0, j1):
            py = ys[j]
            for k in range(k0, k1):
                pz = zs[k]
                w0 = (cy - by) * (pz - bz) - (cz - bz) * (py - by)
                w1 = (ay - cy) * (pz - cz) - (az - cz) * (py - cy)
                w2 = (by - ay) * (pz - az) - (bz - az) * (py - ay)
                if not (_edge_ok(w0, cy - by, cz - bz) and _edge_ok(w1, ay - cy, az - cz)
                        and _edge_ok(w2, by - ay, bz - az)):
                    continue
                x = (w0 * ax + w1 * bx + w2 * cx) / (w0 + w1 + w2)
                if m == cap:
                    cap *= 2
                    oj2 = np.empty(cap, np.int64)
                    ok2 = np.empty(cap, np.int64)
                    ox2 = np.empty(cap)
                    oj2[:m] = oj[:m]
                    ok2[:m] = ok[:m]
                    ox2[:m] = ox[:m]
                    oj, ok, ox = oj2, ok2, ox2
                oj[m] = j
                ok[m] = k
                ox[m] = x
                m += 1
    return oj[:m], ok[:m], ox[:m]


@nb.njit(cache=True, inline="always")
def _edge_ok(w, ey, ez):
    if w > 0.0:
        return True
    if w < 0.0:
        return False
    # point on the edge line: keep only "top" or "left" edges
    return ez < 0.0 or (ez == 0.0 and ey > 0.0)
