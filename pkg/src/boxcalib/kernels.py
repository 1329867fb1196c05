"""Hot numeric kernels: convex clipping of oriented boxes and scene IoU sums.

Every function here is written in the subset of Python/numpy that numba's
nopython mode accepts, so the same source runs compiled (default) or as
plain Python when ``BOXCALIB_DISABLE_NUMBA=1``. Boxes are passed as raw
arrays: rotation ``(3, 3)``, center ``(3,)``, size ``(3,)``.
"""

import numpy as np

from ._accel import jit

# Local-frame corner signs, in the canonical vertex order.
CORNER_SIGNS = np.array(
    [
        [1.0, 1.0, -1.0],
        [1.0, -1.0, -1.0],
        [-1.0, -1.0, -1.0],
        [-1.0, 1.0, -1.0],
        [1.0, 1.0, 1.0],
        [1.0, -1.0, 1.0],
        [-1.0, -1.0, 1.0],
        [-1.0, 1.0, 1.0],
    ]
)

# Each row is one face as a cycle of corner indices.
FACE_CORNERS = np.array(
    [
        [0, 1, 2, 3],  # z-
        [4, 5, 6, 7],  # z+
        [0, 1, 5, 4],  # x+
        [3, 2, 6, 7],  # x-
        [0, 3, 7, 4],  # y+
        [1, 2, 6, 5],  # y-
    ],
    dtype=np.int64,
)

_MAX_FACES = 16
_MAX_VERTS = 32
_EPS = 1e-9
SLIVER_VOLUME = 1e-12


@jit
def box_corners(rot, center, size):
    out = np.empty((8, 3))
    half = 0.5 * size
    for k in range(8):
        for r in range(3):
            acc = center[r]
            for c in range(3):
                acc += rot[r, c] * CORNER_SIGNS[k, c] * half[c]
            out[k, r] = acc
    return out


@jit
def _sort_cap(points, count, normal):
    # Orders coplanar points of a convex polygon by angle about their centroid.
    g = np.zeros(3)
    for k in range(count):
        g += points[k]
    g /= count
    ax = 0
    if abs(normal[1]) < abs(normal[ax]):
        ax = 1
    if abs(normal[2]) < abs(normal[ax]):
        ax = 2
    e = np.zeros(3)
    e[ax] = 1.0
    u = np.cross(normal, e)
    u /= np.sqrt(np.dot(u, u))
    w = np.cross(normal, u)
    ang = np.empty(count)
    for k in range(count):
        d = points[k] - g
        ang[k] = np.arctan2(np.dot(d, w), np.dot(d, u))
    order = np.argsort(ang)
    out = np.empty((count, 3))
    for k in range(count):
        out[k] = points[order[k]]
    return out


@jit
def _polyhedron_volume(faces, counts, nf):
    ref = np.zeros(3)
    total = 0
    for f in range(nf):
        for v in range(counts[f]):
            ref += faces[f, v]
            total += 1
    if total == 0:
        return 0.0
    ref /= total
    vol = 0.0
    for f in range(nf):
        a = faces[f, 0] - ref
        for v in range(1, counts[f] - 1):
            b = faces[f, v] - ref
            c = faces[f, v + 1] - ref
            vol += abs(np.dot(a, np.cross(b, c))) / 6.0
    return vol


@jit
def intersection_volume(corners_a, rot_b, center_b, size_b):
    """Volume of box A (given by its 8 corners) clipped by box B's six half-spaces."""
    faces = np.zeros((_MAX_FACES, _MAX_VERTS, 3))
    counts = np.zeros(_MAX_FACES, dtype=np.int64)
    for f in range(6):
        for v in range(4):
            faces[f, v] = corners_a[FACE_CORNERS[f, v]]
        counts[f] = 4
    nf = 6

    new_faces = np.zeros((_MAX_FACES, _MAX_VERTS, 3))
    new_counts = np.zeros(_MAX_FACES, dtype=np.int64)
    cap = np.zeros((_MAX_VERTS, 3))

    for plane in range(6):
        axis = plane // 2
        sgn = 1.0 if plane % 2 == 0 else -1.0
        normal = sgn * rot_b[:, axis]
        offset = np.dot(normal, center_b) + 0.5 * size_b[axis]

        any_out = False
        any_in = False
        for f in range(nf):
            for v in range(counts[f]):
                d = np.dot(normal, faces[f, v]) - offset
                if d > _EPS:
                    any_out = True
                elif d < -_EPS:
                    any_in = True
        if not any_out:
            continue
        if not any_in:
            return 0.0

        nnf = 0
        ncap = 0
        for f in range(nf):
            cnt = counts[f]
            m = 0
            for v in range(cnt):
                p = faces[f, v]
                q = faces[f, (v + 1) % cnt]
                dp = np.dot(normal, p) - offset
                dq = np.dot(normal, q) - offset
                if dp <= _EPS:
                    new_faces[nnf, m] = p
                    m += 1
                    if dp >= -_EPS:
                        ncap = _cap_add(cap, ncap, p)
                if (dp < -_EPS and dq > _EPS) or (dp > _EPS and dq < -_EPS):
                    x = p + (q - p) * (dp / (dp - dq))
                    new_faces[nnf, m] = x
                    m += 1
                    ncap = _cap_add(cap, ncap, x)
            if m >= 3:
                new_counts[nnf] = m
                nnf += 1
        if ncap >= 3:
            ordered = _sort_cap(cap, ncap, normal)
            for v in range(ncap):
                new_faces[nnf, v] = ordered[v]
            new_counts[nnf] = ncap
            nnf += 1

        for f in range(nnf):
            for v in range(new_counts[f]):
                faces[f, v] = new_faces[f, v]
            counts[f] = new_counts[f]
        nf = nnf
        if nf < 4:
            return 0.0

    return _polyhedron_volume(faces, counts, nf)


@jit
def _cap_add(cap, ncap, p):
    for k in range(ncap):
        d = cap[k] - p
        if np.dot(d, d) < 1e-18:
            return ncap
    if ncap < cap.shape[0]:
        cap[ncap] = p
        ncap += 1
    return ncap


@jit
def disjoint_by_gate(center_a, size_a, center_b, size_b):
    d = center_a - center_b
    reach = 0.5 * (np.sqrt(np.dot(size_a, size_a)) + np.sqrt(np.dot(size_b, size_b)))
    return np.dot(d, d) > reach * reach


@jit
def box_iou(rot_a, center_a, size_a, rot_b, center_b, size_b):
    if disjoint_by_gate(center_a, size_a, center_b, size_b):
        return 0.0
    corners_a = box_corners(rot_a, center_a, size_a)
    inter = intersection_volume(corners_a, rot_b, center_b, size_b)
    if inter < SLIVER_VOLUME:
        return 0.0
    vol_a = size_a[0] * size_a[1] * size_a[2]
    vol_b = size_b[0] * size_b[1] * size_b[2]
    inter = min(inter, vol_a, vol_b)
    iou = inter / (vol_a + vol_b - inter)
    if iou > 1.0:
        return 1.0
    return iou


@jit
def iou_sum(rots_a, centers_a, sizes_a, rots_b, centers_b, sizes_b):
    """Sum of IoU over every (a, b) pair; gated pairs contribute zero."""
    total = 0.0
    for i in range(rots_a.shape[0]):
        for j in range(rots_b.shape[0]):
            total += box_iou(
                rots_a[i], centers_a[i], sizes_a[i], rots_b[j], centers_b[j], sizes_b[j]
            )
    return total


@jit
def transformed_iou_sums(rot, trans, rots_a, centers_a, sizes_a, rots_b, centers_b, sizes_b):
    """IoU sums after mapping every A box through each candidate transform.

    ``rot`` is ``(K, 3, 3)`` and ``trans`` is ``(K, 3)``; returns ``(K,)``.
    """
    k_count = rot.shape[0]
    m = rots_a.shape[0]
    out = np.zeros(k_count)
    moved_r = np.empty((m, 3, 3))
    moved_c = np.empty((m, 3))
    for k in range(k_count):
        for i in range(m):
            moved_r[i] = rot[k] @ rots_a[i]
            moved_c[i] = rot[k] @ centers_a[i] + trans[k]
        out[k] = iou_sum(moved_r, moved_c, sizes_a, rots_b, centers_b, sizes_b)
    return out
