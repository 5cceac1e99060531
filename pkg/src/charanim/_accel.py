"""Numba kernels behind the hot loops.

Everything here is deterministic for any thread count: parallel loops always
partition independent outputs (grid points, raster rows), and each output is
accumulated sequentially in a fixed order.
"""

import math

import numpy as np
from numba import njit, prange

_BIG = 1e20


@njit(cache=True)
def edt_sq(site):
    """Exact squared Euclidean distance to the nearest True pixel.

    Two-pass lower-envelope transform; distances are exact because all
    intermediate quantities are small integers held in float64. Pixels in
    images with no site at all come back as >= 1e20 (treat as infinite).
    """
    h, w = site.shape
    g = np.empty((h, w), np.float64)
    for j in range(w):
        prev = _BIG
        for i in range(h):
            if site[i, j]:
                prev = 0.0
            elif prev < _BIG:
                prev += 1.0
            g[i, j] = prev
        prev = _BIG
        for i in range(h - 1, -1, -1):
            if site[i, j]:
                prev = 0.0
            elif prev < _BIG:
                prev += 1.0
            if prev < g[i, j]:
                g[i, j] = prev

    out = np.empty((h, w), np.float64)
    v = np.empty(w, np.int64)
    z = np.empty(w + 1, np.float64)
    f = np.empty(w, np.float64)
    for i in range(h):
        for j in range(w):
            gij = g[i, j]
            f[j] = gij * gij if gij < _BIG else _BIG
        k = 0
        v[0] = 0
        z[0] = -_BIG
        z[1] = _BIG
        for q in range(1, w):
            s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * (q - v[k]))
            while s <= z[k]:
                k -= 1
                s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * (q - v[k]))
            k += 1
            v[k] = q
            z[k] = s
            z[k + 1] = _BIG
        k = 0
        for q in range(w):
            while z[k + 1] < q:
                k += 1
            dj = q - v[k]
            out[i, q] = f[v[k]] + dj * dj
    return out


@njit(cache=True, inline="always")
def _point_tri_sqdist(px, py, pz, ax, ay, az, bx, by, bz, cx, cy, cz):
    # Ericson-style closest point on triangle, squared distance.
    abx, aby, abz = bx - ax, by - ay, bz - az
    acx, acy, acz = cx - ax, cy - ay, cz - az
    apx, apy, apz = px - ax, py - ay, pz - az
    d1 = abx * apx + aby * apy + abz * apz
    d2 = acx * apx + acy * apy + acz * apz
    if d1 <= 0.0 and d2 <= 0.0:
        return apx * apx + apy * apy + apz * apz
    bpx, bpy, bpz = px - bx, py - by, pz - bz
    d3 = abx * bpx + aby * bpy + abz * bpz
    d4 = acx * bpx + acy * bpy + acz * bpz
    if d3 >= 0.0 and d4 <= d3:
        return bpx * bpx + bpy * bpy + bpz * bpz
    vc = d1 * d4 - d3 * d2
    if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        denom = d1 - d3
        t = d1 / denom if denom != 0.0 else 0.0
        ex, ey, ez = apx - t * abx, apy - t * aby, apz - t * abz
        return ex * ex + ey * ey + ez * ez
    cpx, cpy, cpz = px - cx, py - cy, pz - cz
    d5 = abx * cpx + aby * cpy + abz * cpz
    d6 = acx * cpx + acy * cpy + acz * cpz
    if d6 >= 0.0 and d5 <= d6:
        return cpx * cpx + cpy * cpy + cpz * cpz
    vb = d5 * d2 - d1 * d6
    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
        denom = d2 - d6
        t = d2 / denom if denom != 0.0 else 0.0
        ex, ey, ez = apx - t * acx, apy - t * acy, apz - t * acz
        return ex * ex + ey * ey + ez * ez
    va = d3 * d6 - d5 * d4
    if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
        denom = (d4 - d3) + (d5 - d6)
        t = (d4 - d3) / denom if denom != 0.0 else 0.0
        ex = bpx - t * (cx - bx)
        ey = bpy - t * (cy - by)
        ez = bpz - t * (cz - bz)
        return ex * ex + ey * ey + ez * ez
    total = va + vb + vc
    if total == 0.0:
        return apx * apx + apy * apy + apz * apz
    denom = 1.0 / total
    v = vb * denom
    w = vc * denom
    qx = ax + abx * v + acx * w
    qy = ay + aby * v + acy * w
    qz = az + abz * v + acz * w
    ex, ey, ez = px - qx, py - qy, pz - qz
    return ex * ex + ey * ey + ez * ez


@njit(cache=True, inline="always")
def _solid_angle(px, py, pz, ax, ay, az, bx, by, bz, cx, cy, cz):
    # van Oosterom-Strackee signed solid angle of triangle abc seen from p.
    vax, vay, vaz = ax - px, ay - py, az - pz
    vbx, vby, vbz = bx - px, by - py, bz - pz
    vcx, vcy, vcz = cx - px, cy - py, cz - pz
    la = math.sqrt(vax * vax + vay * vay + vaz * vaz)
    lb = math.sqrt(vbx * vbx + vby * vby + vbz * vbz)
    lc = math.sqrt(vcx * vcx + vcy * vcy + vcz * vcz)
    num = (vax * (vby * vcz - vbz * vcy)
           - vay * (vbx * vcz - vbz * vcx)
           + vaz * (vbx * vcy - vby * vcx))
    den = (la * lb * lc
           + (vax * vbx + vay * vby + vaz * vbz) * lc
           + (vbx * vcx + vby * vcy + vbz * vcz) * la
           + (vcx * vax + vcy * vay + vcz * vaz) * lb)
    return 2.0 * math.atan2(num, den)


@njit(parallel=True, cache=True)
def mesh_distance_winding(pts, ta, tb, tc, cl_start, cl_tri,
                          cl_center, cl_radius, cl_dipole, far_factor):
    """Unsigned distance and winding number of points against a triangle soup.

    Triangles are grouped into clusters (CSR cl_start/cl_tri). Distances are
    exact: clusters are pruned only with sound center/radius bounds. The
    winding number sums exact solid angles for clusters closer than
    far_factor * radius and a single dipole term (area-weighted normal at the
    cluster centroid) for the rest.
    """
    n_pts = pts.shape[0]
    n_cl = cl_start.shape[0] - 1
    dist = np.empty(n_pts, np.float64)
    wind = np.empty(n_pts, np.float64)
    inv4pi = 1.0 / (4.0 * math.pi)
    for p in prange(n_pts):
        px, py, pz = pts[p, 0], pts[p, 1], pts[p, 2]
        best_ub = _BIG
        for k in range(n_cl):
            dx = cl_center[k, 0] - px
            dy = cl_center[k, 1] - py
            dz = cl_center[k, 2] - pz
            ub = math.sqrt(dx * dx + dy * dy + dz * dz) + cl_radius[k]
            if ub < best_ub:
                best_ub = ub
        best_sq = best_ub * best_ub
        wsum = 0.0
        for k in range(n_cl):
            dx = cl_center[k, 0] - px
            dy = cl_center[k, 1] - py
            dz = cl_center[k, 2] - pz
            dc = math.sqrt(dx * dx + dy * dy + dz * dz)
            rk = cl_radius[k]
            need_dist = (dc - rk) * (dc - rk) <= best_sq or dc <= rk
            near_wind = dc <= far_factor * rk
            if not near_wind:
                r3 = dc * dc * dc
                wsum += ((cl_dipole[k, 0] * dx + cl_dipole[k, 1] * dy
                          + cl_dipole[k, 2] * dz) / r3) * inv4pi
                if not need_dist:
                    continue
            for idx in range(cl_start[k], cl_start[k + 1]):
                t = cl_tri[idx]
                ax, ay, az = ta[t, 0], ta[t, 1], ta[t, 2]
                bx, by, bz = tb[t, 0], tb[t, 1], tb[t, 2]
                cx, cy, cz = tc[t, 0], tc[t, 1], tc[t, 2]
                if need_dist:
                    sq = _point_tri_sqdist(px, py, pz, ax, ay, az,
                                           bx, by, bz, cx, cy, cz)
                    if sq < best_sq:
                        best_sq = sq
                if near_wind:
                    wsum += _solid_angle(px, py, pz, ax, ay, az,
                                         bx, by, bz, cx, cy, cz) * inv4pi
        dist[p] = math.sqrt(best_sq)
        wind[p] = wsum
    return dist, wind


@njit(parallel=True, cache=True)
def raster_rows(xy, depth, attrs, row_start, row_tri, width,
                attr_buf, depth_buf, tri_buf):
    """Scanline-parallel z-buffered rasterization with a top-left fill rule.

    xy: (T,3,2) vertex pixel coordinates (pixel centers at integers, y down).
    depth: (T,3) camera depth, smaller = nearer. attrs: (T,3,K) per-vertex
    attributes, barycentrically interpolated. row_start/row_tri: CSR mapping
    each row to the triangles whose bbox spans it, ascending triangle index
    (equal depth resolves to the lower index). Buffers are updated in place.
    """
    n_rows = row_start.shape[0] - 1
    n_attr = attrs.shape[2]
    for y in prange(n_rows):
        fy = float(y)
        for idx in range(row_start[y], row_start[y + 1]):
            t = row_tri[idx]
            x0, y0 = xy[t, 0, 0], xy[t, 0, 1]
            x1, y1 = xy[t, 1, 0], xy[t, 1, 1]
            x2, y2 = xy[t, 2, 0], xy[t, 2, 1]
            area2 = (x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0)
            if area2 == 0.0:
                continue
            s = 1.0 if area2 > 0.0 else -1.0
            a2 = area2 * s
            xmin = min(x0, min(x1, x2))
            xmax = max(x0, max(x1, x2))
            lo = int(math.ceil(xmin))
            hi = int(math.floor(xmax))
            if lo < 0:
                lo = 0
            if hi > width - 1:
                hi = width - 1
            for x in range(lo, hi + 1):
                fx = float(x)
                e0 = ((x2 - x1) * (fy - y1) - (y2 - y1) * (fx - x1)) * s
                e1 = ((x0 - x2) * (fy - y2) - (y0 - y2) * (fx - x2)) * s
                e2 = ((x1 - x0) * (fy - y0) - (y1 - y0) * (fx - x0)) * s
                if e0 < 0.0 or e1 < 0.0 or e2 < 0.0:
                    continue
                if e0 == 0.0:
                    # edge v1->v2 in positive orientation (v2->v1 if flipped)
                    dxe = (x2 - x1) * s
                    dye = (y2 - y1) * s
                    if not (dye < 0.0 or (dye == 0.0 and dxe > 0.0)):
                        continue
                if e1 == 0.0:
                    dxe = (x0 - x2) * s
                    dye = (y0 - y2) * s
                    if not (dye < 0.0 or (dye == 0.0 and dxe > 0.0)):
                        continue
                if e2 == 0.0:
                    dxe = (x1 - x0) * s
                    dye = (y1 - y0) * s
                    if not (dye < 0.0 or (dye == 0.0 and dxe > 0.0)):
                        continue
                w0 = e0 / a2
                w1 = e1 / a2
                w2 = e2 / a2
                d = w0 * depth[t, 0] + w1 * depth[t, 1] + w2 * depth[t, 2]
                if d < depth_buf[y, x]:
                    depth_buf[y, x] = d
                    tri_buf[y, x] = t
                    for a in range(n_attr):
                        attr_buf[y, x, a] = (w0 * attrs[t, 0, a]
                                             + w1 * attrs[t, 1, a]
                                             + w2 * attrs[t, 2, a])
    return


@njit(parallel=True, cache=True)
def ray_z_intervals(qx, qy, tri_xy, tri_z, bin_start, bin_tri,
                    bx0, by0, bin_size, nbx, nby, tol):
    """z extents of view-axis rays through (qx, qy) against projected triangles.

    Triangles are binned over their xy bounding boxes (CSR bin_start/bin_tri
    over an nbx*nby grid). Returns per query: number of distinct hit depths
    (merged within tol), min z and max z (0 when no hit).
    """
    n = qx.shape[0]
    counts = np.zeros(n, np.int64)
    zmin = np.zeros(n, np.float64)
    zmax = np.zeros(n, np.float64)
    for q in prange(n):
        x = qx[q]
        y = qy[q]
        ib = int((x - bx0) / bin_size)
        jb = int((y - by0) / bin_size)
        if ib < 0 or ib >= nbx or jb < 0 or jb >= nby:
            continue
        cell = jb * nbx + ib
        hits = np.empty(128, np.float64)
        nh = 0
        for idx in range(bin_start[cell], bin_start[cell + 1]):
            t = bin_tri[idx]
            x0, y0 = tri_xy[t, 0, 0], tri_xy[t, 0, 1]
            x1, y1 = tri_xy[t, 1, 0], tri_xy[t, 1, 1]
            x2, y2 = tri_xy[t, 2, 0], tri_xy[t, 2, 1]
            area2 = (x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0)
            if area2 == 0.0:
                continue
            e0 = (x2 - x1) * (y - y1) - (y2 - y1) * (x - x1)
            e1 = (x0 - x2) * (y - y2) - (y0 - y2) * (x - x2)
            e2 = (x1 - x0) * (y - y0) - (y1 - y0) * (x - x0)
            if area2 < 0.0:
                e0, e1, e2, area2 = -e0, -e1, -e2, -area2
            eps = -1e-12 * area2
            if e0 >= eps and e1 >= eps and e2 >= eps:
                inv = 1.0 / area2
                z = (e0 * tri_z[t, 0] + e1 * tri_z[t, 1]
                     + e2 * tri_z[t, 2]) * inv
                if nh < 128:
                    hits[nh] = z
                    nh += 1
        if nh == 0:
            continue
        # insertion sort, then merge depths closer than tol
        for a in range(1, nh):
            key = hits[a]
            b = a - 1
            while b >= 0 and hits[b] > key:
                hits[b + 1] = hits[b]
                b -= 1
            hits[b + 1] = key
        distinct = 1
        for a in range(1, nh):
            if hits[a] - hits[a - 1] > tol:
                distinct += 1
        counts[q] = distinct
        zmin[q] = hits[0]
        zmax[q] = hits[nh - 1]
    return counts, zmin, zmax


def warmup():
    """Compile (or load cached) kernels with tiny inputs."""
    edt_sq(np.array([[False, True], [False, False]]))
    pts = np.zeros((1, 3))
    tri = np.array([[[1.0, 0.0, 0.0]], [[0.0, 1.0, 0.0]], [[0.0, 0.0, 1.0]]])
    csr = np.array([0, 1], np.int64)
    ids = np.array([0], np.int64)
    mesh_distance_winding(pts, tri[0], tri[1], tri[2], csr, ids,
                          np.zeros((1, 3)), np.ones(1), np.zeros((1, 3)), 2.0)
    xy = np.array([[[0.0, 0.0], [2.0, 0.0], [0.0, 2.0]]])
    raster_rows(xy, np.zeros((1, 3)), np.zeros((1, 3, 1)),
                np.array([0, 1], np.int64), ids, 2,
                np.zeros((1, 2, 1)), np.full((1, 2), _BIG), np.full((1, 2), -1, np.int64))
    ray_z_intervals(np.zeros(1), np.zeros(1), xy, np.zeros((1, 3)),
                    np.array([0, 1], np.int64), ids, -1.0, -1.0, 4.0, 1, 1, 1e-9)
