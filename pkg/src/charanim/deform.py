"""Skeleton-based thinning: handle selection from the drawing's masks,
displacement targets from the distance map, squared-Laplacian handle
deformation and post smoothing.

Handle selection realizes the mask algebra

    M_fix  = M & (D >= theta1)
    S_mov' = S & (D <= theta2)
    S_mov  = S_mov' minus pixels within `guard` px of M_fix

with D the interior distance map and S the thinned skeleton of the
foreground mask M. Vertices projecting into M_fix become fixed handles;
vertices within `snap` px of an S_mov pixel become moving handles whose
z displacement drives the side-view half-thickness toward scale * D.
"""

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu
from scipy.spatial import cKDTree

from . import _accel
from .errors import ParameterError, SingularSystemError, ToolkitError
from .mesh import TriMesh
from .raster import BinaryMask, DistanceField, dilate, distance_transform, skeletonize
from .volume import FrontProjection


@dataclass
class HandleSet:
    """Fixed handles (zero displacement) plus moving handles with prescribed
    displacement vectors."""

    fixed: np.ndarray
    moving: np.ndarray
    displacements: np.ndarray

    def __post_init__(self):
        self.fixed = np.asarray(self.fixed, dtype=np.int64).reshape(-1)
        self.moving = np.asarray(self.moving, dtype=np.int64).reshape(-1)
        self.displacements = np.asarray(self.displacements,
                                        dtype=np.float64).reshape(-1, 3)
        if len(self.displacements) != len(self.moving):
            raise ParameterError("one displacement per moving handle required")
        if np.intersect1d(self.fixed, self.moving).size:
            raise ParameterError("fixed and moving handle sets overlap")

    @property
    def indices(self):
        return np.concatenate([self.fixed, self.moving])

    @property
    def values(self):
        return np.concatenate([np.zeros((len(self.fixed), 3)),
                               self.displacements])


@dataclass
class HandleRegions:
    """Vertex classification plus the masks that produced it."""

    fixed_vertices: np.ndarray
    moving_vertices: np.ndarray
    m_fix: BinaryMask
    s_mov: BinaryMask
    skeleton: BinaryMask
    distance: DistanceField


def project_to_pixels(mesh: TriMesh, proj: FrontProjection):
    """(x, y) pixel coordinates of every vertex."""
    return proj.to_pixel(mesh.vertices[:, 0], mesh.vertices[:, 1])


def select_handles(mesh: TriMesh, mask: BinaryMask, proj: FrontProjection,
                   theta1: float = 11.0, theta2: float = 6.0,
                   guard: float = 5.0, snap: float = 2.0) -> HandleRegions:
    """Classify vertices into fixed / moving / free from the drawing mask."""
    if not theta1 > theta2 > 0:
        raise ParameterError("thresholds must satisfy theta1 > theta2 > 0")
    if guard < 0 or snap < 0:
        raise ParameterError("guard and snap must be >= 0")
    depth = distance_transform(mask)
    skel = skeletonize(mask)
    m_fix = BinaryMask(mask.bits & (depth.values >= theta1))
    s_mov_raw = skel.bits & (depth.values <= theta2)
    if m_fix.bits.any() and guard > 0:
        s_mov = BinaryMask(s_mov_raw & ~dilate(m_fix, guard).bits)
    else:
        s_mov = BinaryMask(s_mov_raw)

    px, py = project_to_pixels(mesh, proj)
    ci = np.clip(np.round(px).astype(int), 0, mask.width - 1)
    ri = np.clip(np.round(py).astype(int), 0, mask.height - 1)
    fixed = m_fix.bits[ri, ci]
    if s_mov.bits.any():
        to_skel = np.sqrt(_accel.edt_sq(s_mov.bits))
        moving = ~fixed & (to_skel[ri, ci] <= snap)
    else:
        moving = np.zeros(len(ci), dtype=bool)
    return HandleRegions(np.nonzero(fixed)[0], np.nonzero(moving)[0],
                         m_fix, s_mov, skel, depth)


def _triangle_xy_bins(mesh, n_bins=64):
    """CSR binning of triangles over their projected-xy bounding boxes."""
    tri_xy = mesh.vertices[mesh.faces][:, :, :2]
    lo = tri_xy.reshape(-1, 2).min(axis=0)
    hi = tri_xy.reshape(-1, 2).max(axis=0)
    size = max((hi - lo).max() / n_bins, 1e-12)
    nbx = int(np.floor((hi[0] - lo[0]) / size)) + 1
    nby = int(np.floor((hi[1] - lo[1]) / size)) + 1
    bmin = np.floor((tri_xy.min(axis=1) - lo) / size).astype(np.int64)
    bmax = np.floor((tri_xy.max(axis=1) - lo) / size).astype(np.int64)
    bmin = np.clip(bmin, 0, [nbx - 1, nby - 1])
    bmax = np.clip(bmax, 0, [nbx - 1, nby - 1])
    spans_x = bmax[:, 0] - bmin[:, 0] + 1
    spans_y = bmax[:, 1] - bmin[:, 1] + 1
    reps = spans_x * spans_y
    tri_ids = np.repeat(np.arange(len(tri_xy), dtype=np.int64), reps)
    # enumerate covered cells per triangle
    cells = np.empty(reps.sum(), dtype=np.int64)
    pos = 0
    for t in range(len(tri_xy)):
        xs = np.arange(bmin[t, 0], bmax[t, 0] + 1)
        ys = np.arange(bmin[t, 1], bmax[t, 1] + 1)
        block = (ys[:, None] * nbx + xs[None, :]).ravel()
        cells[pos:pos + block.size] = block
        pos += block.size
    order = np.lexsort((tri_ids, cells))
    cells = cells[order]
    tri_ids = tri_ids[order]
    starts = np.searchsorted(cells, np.arange(nbx * nby + 1))
    return (tri_ids, starts.astype(np.int64), float(lo[0]), float(lo[1]),
            float(size), nbx, nby)


def view_ray_intervals(mesh: TriMesh, x, y, tol=None):
    """(distinct hit count, z_min, z_max) of +z view rays through (x, y)."""
    x = np.ascontiguousarray(np.asarray(x, dtype=np.float64).reshape(-1))
    y = np.ascontiguousarray(np.asarray(y, dtype=np.float64).reshape(-1))
    if tol is None:
        lo, hi = mesh.bounds()
        tol = max(float((hi - lo).max()), 1e-9) * 1e-9
    tri_ids, starts, bx0, by0, size, nbx, nby = _triangle_xy_bins(mesh)
    tri_xy = np.ascontiguousarray(mesh.vertices[mesh.faces][:, :, :2])
    tri_z = np.ascontiguousarray(mesh.vertices[mesh.faces][:, :, 2])
    return _accel.ray_z_intervals(x, y, tri_xy, tri_z, starts, tri_ids,
                                  bx0, by0, size, nbx, nby, tol)


def thinning_displacements(mesh: TriMesh, moving_vertices, depth: DistanceField,
                           proj: FrontProjection):
    """z-only displacements moving vertices toward the ray mid-depth until the
    local half-thickness matches scale * D at the vertex's pixel.

    Returns (vertex indices, displacement vectors, number demoted to free
    because their view ray missed the mesh).
    """
    moving = np.asarray(moving_vertices, dtype=np.int64).reshape(-1)
    if moving.size == 0:
        return moving, np.zeros((0, 3)), 0
    verts = mesh.vertices[moving]
    px, py = proj.to_pixel(verts[:, 0], verts[:, 1])
    target = proj.scale * depth.sample_bilinear(px, py)

    counts, zmin, zmax = view_ray_intervals(mesh, verts[:, 0], verts[:, 1])
    z_c = (zmin + zmax) / 2.0

    odd = (counts % 2 == 1) & (counts > 0)
    if odd.any():
        # non-watertight ray: fall back to the mean z of vertices projecting
        # within 2 px of the query pixel
        all_px, all_py = project_to_pixels(mesh, proj)
        tree = cKDTree(np.stack([all_px, all_py], axis=1))
        for i in np.nonzero(odd)[0]:
            near = tree.query_ball_point([px[i], py[i]], 2.0)
            if near:
                z_c[i] = mesh.vertices[near, 2].mean()

    hit = counts > 0
    off = verts[:, 2] - z_c
    dz = np.sign(z_c - verts[:, 2]) * np.maximum(0.0, np.abs(off) - target)
    disp = np.zeros((hit.sum(), 3))
    disp[:, 2] = dz[hit]
    return moving[hit], disp, int((~hit).sum())


def uniform_laplacian(mesh: TriMesh):
    """Graph Laplacian L = D - A from mesh connectivity (float CSR)."""
    adj = mesh.adjacency().astype(np.float64)
    deg = np.asarray(adj.sum(axis=1)).ravel()
    return sparse.diags(deg) - adj


def biharmonic_deform(mesh: TriMesh, handles: HandleSet) -> TriMesh:
    """Deform so handle vertices meet their displacements exactly and free
    vertices satisfy (L^2 d) = 0 with the uniform Laplacian L, solved per
    coordinate. Degree-zero vertices stay put."""
    h_idx = handles.indices
    if h_idx.size == 0:
        raise ParameterError("handle set is empty")
    n = mesh.n_vertices
    if h_idx.min() < 0 or h_idx.max() >= n:
        raise ParameterError("handle index out of range")

    n_comp, labels = mesh.vertex_components()
    adj = mesh.adjacency()
    degree = np.asarray(adj.sum(axis=1)).ravel()
    has_handle = np.zeros(n_comp, dtype=bool)
    has_handle[labels[h_idx]] = True
    for comp in range(n_comp):
        members = labels == comp
        if degree[members].max() == 0:
            continue  # isolated vertices carry zero displacement
        if not has_handle[comp]:
            raise SingularSystemError(
                f"connected component {comp} ({members.sum()} vertices) "
                "contains no handles")

    d = np.zeros((n, 3))
    d[h_idx] = handles.values
    free = np.ones(n, dtype=bool)
    free[h_idx] = False
    free &= degree > 0
    f_idx = np.nonzero(free)[0]
    if f_idx.size:
        lap = uniform_laplacian(mesh).tocsr()
        lap2 = (lap @ lap).tocsr()
        a_ff = lap2[f_idx][:, f_idx].tocsc()
        rhs = -lap2[f_idx][:, h_idx] @ handles.values
        solve = splu(a_ff)
        d[f_idx] = solve.solve(rhs)

        resid = np.abs((lap2 @ d)[f_idx]).max()
        scale = np.abs(handles.values).max()
        budget = 1e-8 * scale if scale > 0 else 1e-12
        if resid > budget:
            raise ToolkitError(
                f"squared-Laplacian residual {resid:.3e} exceeds {budget:.3e}")
    return mesh.with_vertices(mesh.vertices + d)


def region_away_from_silhouette(mesh: TriMesh, mask: BinaryMask,
                                proj: FrontProjection, min_px: float):
    """Vertices whose projected pixel sits at least min_px inside the mask
    (safe to smooth without disturbing the front silhouette)."""
    depth = distance_transform(mask)
    px, py = project_to_pixels(mesh, proj)
    return np.nonzero(depth.sample_bilinear(px, py) >= min_px)[0]


_HC_ALPHA = 0.0
_HC_BETA = 0.3


def laplacian_smooth(mesh: TriMesh, iterations: int = 10, strength: float = 1.0,
                     region=None) -> TriMesh:
    """Neighborhood-averaging smoothing with shrinkage compensation.

    Each iteration blends vertices toward their neighbor centroid by
    `strength`, then pushes back by the blended drift of the vertex and its
    neighbors (keeps closed meshes from deflating). Only `region` vertices
    move (default: all); topological boundary vertices are always pinned.
    """
    if iterations < 0:
        raise ParameterError("iterations must be >= 0")
    if not 0.0 < strength <= 1.0:
        raise ParameterError("strength must be in (0, 1]")
    if iterations == 0 or mesh.is_empty():
        return mesh.with_vertices(mesh.vertices.copy())

    n = mesh.n_vertices
    movable = np.zeros(n, dtype=bool)
    if region is None:
        movable[:] = True
    else:
        movable[np.asarray(region, dtype=np.int64)] = True
    movable[mesh.boundary_vertices()] = False
    adj = mesh.adjacency().astype(np.float64)
    degree = np.asarray(adj.sum(axis=1)).ravel()
    movable &= degree > 0
    if not movable.any():
        return mesh.with_vertices(mesh.vertices.copy())
    inv_deg = np.zeros(n)
    inv_deg[degree > 0] = 1.0 / degree[degree > 0]

    original = mesh.vertices
    q = original.copy()
    for _ in range(iterations):
        centroid = (adj @ q) * inv_deg[:, None]
        p = q.copy()
        p[movable] += strength * (centroid[movable] - q[movable])
        b = np.zeros_like(q)
        b[movable] = (p[movable] - _HC_ALPHA * original[movable]
                      - (1.0 - _HC_ALPHA) * q[movable])
        correction = _HC_BETA * b + (1.0 - _HC_BETA) * ((adj @ b) * inv_deg[:, None])
        p[movable] -= correction[movable]
        q = p
    return mesh.with_vertices(q)
