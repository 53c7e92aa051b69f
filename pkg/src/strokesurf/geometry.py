"""Small geometric helpers shared across the package.

Everything here works on plain float64 numpy arrays. Angles are in
degrees unless a name says otherwise. Dihedral angles follow the
half-plane convention: 180 means the two triangles are coplanar and
facing away from each other (flat surface), small values mean a sharp
fold.
"""

from __future__ import annotations

import math

import numpy as np

EPS_DEGENERATE = 1e-9


def unit(v, eps=EPS_DEGENERATE):
    """Normalize a vector, returning (unit_vector, ok)."""
    v = np.asarray(v, dtype=np.float64)
    n = math.sqrt(float(v[0]) ** 2 + float(v[1]) ** 2 + float(v[2]) ** 2)
    if n < eps:
        return np.zeros(3), False
    return v / n, True


def unit_rows(arr, eps=EPS_DEGENERATE):
    """Row-wise normalization. Degenerate rows become zero, flagged in ok."""
    arr = np.asarray(arr, dtype=np.float64)
    norms = np.linalg.norm(arr, axis=1)
    ok = norms >= eps
    out = np.zeros_like(arr)
    np.divide(arr, norms[:, None], out=out, where=ok[:, None])
    return out, ok


def angle_between_deg(u, v):
    """Angle between two vectors in degrees, in [0, 180]."""
    ux, uy, uz = float(u[0]), float(u[1]), float(u[2])
    vx, vy, vz = float(v[0]), float(v[1]), float(v[2])
    nu = math.sqrt(ux * ux + uy * uy + uz * uz)
    nv = math.sqrt(vx * vx + vy * vy + vz * vz)
    if nu < EPS_DEGENERATE or nv < EPS_DEGENERATE:
        return 0.0
    c = (ux * vx + uy * vy + uz * vz) / (nu * nv)
    c = min(1.0, max(-1.0, c))
    return math.degrees(math.acos(c))


def cross3(u, v):
    """Cross product of two 3-vectors without numpy's shape dispatch."""
    return np.array((u[1] * v[2] - u[2] * v[1],
                     u[2] * v[0] - u[0] * v[2],
                     u[0] * v[1] - u[1] * v[0]))


def triangle_normal(a, b, c):
    """Unnormalized normal of triangle (a, b, c); norm is twice the area."""
    ux, uy, uz = b[0] - a[0], b[1] - a[1], b[2] - a[2]
    vx, vy, vz = c[0] - a[0], c[1] - a[1], c[2] - a[2]
    return np.array((uy * vz - uz * vy, uz * vx - ux * vz,
                     ux * vy - uy * vx))


def triangle_area(a, b, c):
    n = triangle_normal(a, b, c)
    return 0.5 * math.sqrt(n[0] * n[0] + n[1] * n[1] + n[2] * n[2])


def triangle_normals(positions, tris):
    """Unnormalized normals for an (m, 3) index array of triangles."""
    p = positions[tris[:, 0]]
    return np.cross(positions[tris[:, 1]] - p, positions[tris[:, 2]] - p)


def min_interior_angle_deg(a, b, c):
    """Smallest interior angle of a triangle in degrees."""
    angles = (
        angle_between_deg(b - a, c - a),
        angle_between_deg(a - b, c - b),
        angle_between_deg(a - c, b - c),
    )
    return min(angles)


def dihedral_deg(a, b, c, d):
    """Dihedral between triangles (a, b, c) and (a, b, d) across edge ab.

    Returns 180 for coplanar triangles on opposite sides of the edge
    (flat surface) and values near 0 for a fold where c and d nearly
    coincide. Degenerate configurations report 180 (no fold evidence).
    """
    ax, ay, az = float(a[0]), float(a[1]), float(a[2])
    ex, ey, ez = float(b[0]) - ax, float(b[1]) - ay, float(b[2]) - az
    el = math.sqrt(ex * ex + ey * ey + ez * ez)
    if el < EPS_DEGENERATE:
        return 180.0
    ex, ey, ez = ex / el, ey / el, ez / el
    ux, uy, uz = float(c[0]) - ax, float(c[1]) - ay, float(c[2]) - az
    vx, vy, vz = float(d[0]) - ax, float(d[1]) - ay, float(d[2]) - az
    du = ux * ex + uy * ey + uz * ez
    dv = vx * ex + vy * ey + vz * ez
    ux, uy, uz = ux - du * ex, uy - du * ey, uz - du * ez
    vx, vy, vz = vx - dv * ex, vy - dv * ey, vz - dv * ez
    nu = math.sqrt(ux * ux + uy * uy + uz * uz)
    nv = math.sqrt(vx * vx + vy * vy + vz * vz)
    if nu < EPS_DEGENERATE or nv < EPS_DEGENERATE:
        return 180.0
    cang = (ux * vx + uy * vy + uz * vz) / (nu * nv)
    cang = min(1.0, max(-1.0, cang))
    return math.degrees(math.acos(cang))


def polyline_arclengths(points):
    """Cumulative arc length per vertex, starting at 0."""
    seg = np.linalg.norm(np.diff(points, axis=0), axis=1)
    return np.concatenate([[0.0], np.cumsum(seg)])


def bbox_diagonal(points):
    points = np.asarray(points, dtype=np.float64)
    if len(points) == 0:
        return 0.0
    return float(np.linalg.norm(points.max(axis=0) - points.min(axis=0)))


def point_triangle_distances(points, a, b, c):
    """Exact distances from an (n, 3) point array to one triangle.

    Vectorized region classification over the triangle's barycentric
    parameterization (Eberly's method).
    """
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    a = np.asarray(a, dtype=np.float64)
    e0 = np.asarray(b, dtype=np.float64) - a
    e1 = np.asarray(c, dtype=np.float64) - a
    dv = a - points
    aa = float(np.dot(e0, e0))
    bb = float(np.dot(e0, e1))
    cc = float(np.dot(e1, e1))
    dd = dv @ e0
    ee = dv @ e1
    det = max(aa * cc - bb * bb, 1e-300)

    s = bb * ee - cc * dd
    t = bb * dd - aa * ee

    # interior projection
    inside = (s + t <= det) & (s >= 0) & (t >= 0)
    s_in = s / det
    t_in = t / det

    # clamp to the three edges and pick the best
    def _edge_params():
        # edge e0 (t = 0)
        s0 = np.clip(-dd / max(aa, 1e-300), 0.0, 1.0)
        t0 = np.zeros_like(s0)
        # edge e1 (s = 0)
        t1 = np.clip(-ee / max(cc, 1e-300), 0.0, 1.0)
        s1 = np.zeros_like(t1)
        # hypotenuse (s + t = 1)
        denom = max(aa - 2 * bb + cc, 1e-300)
        s2 = np.clip((cc + ee - bb - dd) / denom, 0.0, 1.0)
        t2 = 1.0 - s2
        return (s0, t0), (s1, t1), (s2, t2)

    best = None
    for sp, tp in _edge_params():
        diff = dv + sp[:, None] * e0 + tp[:, None] * e1
        d2 = np.einsum("ij,ij->i", diff, diff)
        best = d2 if best is None else np.minimum(best, d2)

    diff_in = dv + s_in[:, None] * e0 + t_in[:, None] * e1
    d2_in = np.einsum("ij,ij->i", diff_in, diff_in)
    best = np.where(inside, np.minimum(best, d2_in), best)
    return np.sqrt(np.maximum(best, 0.0))


def point_to_triangles_distance(p, a, b, c):
    """Exact distances from one point to (m, 3)-arrays of triangle
    corners. Same region classification as point_triangle_distances,
    with the per-triangle coefficients vectorized instead."""
    p = np.asarray(p, dtype=np.float64).reshape(3)
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    e0 = np.atleast_2d(np.asarray(b, dtype=np.float64)) - a
    e1 = np.atleast_2d(np.asarray(c, dtype=np.float64)) - a
    dv = a - p[None, :]
    aa = np.einsum("ij,ij->i", e0, e0)
    bb = np.einsum("ij,ij->i", e0, e1)
    cc = np.einsum("ij,ij->i", e1, e1)
    dd = np.einsum("ij,ij->i", dv, e0)
    ee = np.einsum("ij,ij->i", dv, e1)
    det = np.maximum(aa * cc - bb * bb, 1e-300)

    s = bb * ee - cc * dd
    t = bb * dd - aa * ee
    inside = (s + t <= det) & (s >= 0) & (t >= 0)
    s_in = s / det
    t_in = t / det

    s0 = np.clip(-dd / np.maximum(aa, 1e-300), 0.0, 1.0)
    t0 = np.zeros_like(s0)
    t1 = np.clip(-ee / np.maximum(cc, 1e-300), 0.0, 1.0)
    s1 = np.zeros_like(t1)
    denom = np.maximum(aa - 2 * bb + cc, 1e-300)
    s2 = np.clip((cc + ee - bb - dd) / denom, 0.0, 1.0)
    t2 = 1.0 - s2

    best = None
    for sp, tp in ((s0, t0), (s1, t1), (s2, t2)):
        diff = dv + sp[:, None] * e0 + tp[:, None] * e1
        d2 = np.einsum("ij,ij->i", diff, diff)
        best = d2 if best is None else np.minimum(best, d2)
    diff_in = dv + s_in[:, None] * e0 + t_in[:, None] * e1
    d2_in = np.einsum("ij,ij->i", diff_in, diff_in)
    best = np.where(inside, np.minimum(best, d2_in), best)
    return np.sqrt(np.maximum(best, 0.0))


def segment_crosses_triangle_interior(p0, p1, ta, tb, tc, eps_rel=1e-9):
    """True if segment (p0, p1), projected onto the triangle's plane,
    passes through the triangle's open interior.

    Endpoints lying on the triangle boundary do not count, nor does a
    projected segment running exactly along a triangle edge. Scalar
    math throughout; this sits inside the consolidation inner loop.
    """
    ax, ay, az = float(ta[0]), float(ta[1]), float(ta[2])
    ux, uy, uz = float(tb[0]) - ax, float(tb[1]) - ay, float(tb[2]) - az
    wx, wy, wz = float(tc[0]) - ax, float(tc[1]) - ay, float(tc[2]) - az
    nx = uy * wz - uz * wy
    ny = uz * wx - ux * wz
    nz = ux * wy - uy * wx
    nn = math.sqrt(nx * nx + ny * ny + nz * nz)
    lab = math.sqrt(ux * ux + uy * uy + uz * uz)
    lac = math.sqrt(wx * wx + wy * wy + wz * wz)
    bcx, bcy, bcz = wx - ux, wy - uy, wz - uz
    lbc = math.sqrt(bcx * bcx + bcy * bcy + bcz * bcz)
    scale = max(lab, lac, lbc)
    if scale == 0.0 or nn < (eps_rel * scale) ** 2 or lab < EPS_DEGENERATE:
        return False
    nx, ny, nz = nx / nn, ny / nn, nz / nn
    # 2D frame in the triangle plane: u along ab, v = n x u
    fx, fy, fz = ux / lab, uy / lab, uz / lab
    vx = ny * fz - nz * fy
    vy = nz * fx - nx * fz
    vz = nx * fy - ny * fx

    def to2d(px, py, pz):
        dx, dy, dz = px - ax, py - ay, pz - az
        return (dx * fx + dy * fy + dz * fz, dx * vx + dy * vy + dz * vz)

    q0 = to2d(float(p0[0]), float(p0[1]), float(p0[2]))
    q1 = to2d(float(p1[0]), float(p1[1]), float(p1[2]))
    t2 = (to2d(ax, ay, az), to2d(float(tb[0]), float(tb[1]), float(tb[2])),
          to2d(float(tc[0]), float(tc[1]), float(tc[2])))

    # clip the segment against the three half planes of the triangle
    lo, hi = 0.0, 1.0
    dx, dy = q1[0] - q0[0], q1[1] - q0[1]
    for i in range(3):
        e0 = t2[i]
        e1 = t2[(i + 1) % 3]
        # inward normal for CCW ordering; orient using the third vertex
        nrx, nry = e0[1] - e1[1], e1[0] - e0[0]
        third = t2[(i + 2) % 3]
        if nrx * (third[0] - e0[0]) + nry * (third[1] - e0[1]) < 0:
            nrx, nry = -nrx, -nry
        f0 = nrx * (q0[0] - e0[0]) + nry * (q0[1] - e0[1])
        fd = nrx * dx + nry * dy
        if abs(fd) < 1e-300:
            if f0 < 0:
                return False
            continue
        tcross = -f0 / fd
        if fd > 0:
            if tcross > lo:
                lo = tcross
        else:
            if tcross < hi:
                hi = tcross
        if lo > hi:
            return False
    if hi - lo < eps_rel:
        return False
    mx = q0[0] + 0.5 * (lo + hi) * dx
    my = q0[1] + 0.5 * (lo + hi) * dy
    # strict interior test at the clipped midpoint
    eps = eps_rel * scale
    for i in range(3):
        e0 = t2[i]
        e1 = t2[(i + 1) % 3]
        nrx, nry = e0[1] - e1[1], e1[0] - e0[0]
        third = t2[(i + 2) % 3]
        if nrx * (third[0] - e0[0]) + nry * (third[1] - e0[1]) < 0:
            nrx, nry = -nrx, -nry
        nlen = math.sqrt(nrx * nrx + nry * nry)
        if nlen < 1e-300:
            return False
        if (nrx * (mx - e0[0]) + nry * (my - e0[1])) / nlen <= eps:
            return False
    return True
