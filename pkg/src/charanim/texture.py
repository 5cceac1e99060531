"""Per-vertex color baking: front/back visibility, image sampling with
normal-weighted blending, and hole filling by neighbor diffusion."""

import numpy as np
from scipy import sparse

from .errors import DimensionError, SeedingError, ToolkitError
from .mesh import TriMesh
from .raster import RasterImage, _bilinear
from .render import Camera, rasterize
from .volume import FrontProjection


def vertex_visibility(mesh: TriMesh, view: str = "front",
                      resolution=512) -> np.ndarray:
    """Per-vertex visibility from an orthographic view.

    A vertex is visible when its depth matches the rasterized depth buffer at
    its pixel within eps_z = 2 * (depth range) / resolution (absorbs the
    buffer's quantization without leaking occluded vertices).
    """
    if mesh.n_vertices == 0:
        return np.zeros(0, dtype=bool)
    camera = Camera(view, resolution).fit_to(mesh)
    buffers = rasterize(mesh, camera)
    px, py, depth = camera.project(mesh.vertices)
    w, h = camera.resolution
    ci = np.clip(np.round(px).astype(int), 0, w - 1)
    ri = np.clip(np.round(py).astype(int), 0, h - 1)
    span = depth.max() - depth.min()
    eps = 2.0 * span / min(w, h) if span > 0 else 1e-9
    # silhouette and corner vertices can round to an uncovered pixel; fall
    # back to the closest buffer sample in the 3x3 neighborhood
    best = np.full(mesh.n_vertices, np.inf)
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if dx == 0 and dy == 0:
                continue
            qr = np.clip(ri + dy, 0, h - 1)
            qc = np.clip(ci + dx, 0, w - 1)
            best = np.minimum(best, np.abs(depth - buffers.depth[qr, qc]))
    exact = buffers.mask.bits[ri, ci]
    centered = np.abs(depth - buffers.depth[ri, ci])
    return np.where(exact, centered <= eps, best <= eps)


def backproject_colors(mesh: TriMesh, front: RasterImage, back: RasterImage,
                       proj: FrontProjection):
    """Bake per-vertex colors by sampling the front/back images.

    The back image is horizontally mirrored into front-view pixel coordinates
    before sampling (the back camera looks along +z). Vertices seen by both
    views blend by normal alignment max(0, +-n_z); vertices seen by neither
    are reported in the returned uncolored index array.
    """
    for img, name in ((front, "front"), (back, "back")):
        if (img.height, img.width) != (proj.height, proj.width):
            raise DimensionError(f"{name} image does not match the projection: "
                                 f"{img.height}x{img.width} vs "
                                 f"{proj.height}x{proj.width}")
    res = (proj.width, proj.height)
    vis_front = vertex_visibility(mesh, "front", res)
    vis_back = vertex_visibility(mesh, "back", res)

    px, py = proj.to_pixel(mesh.vertices[:, 0], mesh.vertices[:, 1])
    back_aligned = back.data[:, ::-1, :]
    c_front = np.stack([_bilinear(front.data[:, :, k], px, py)
                        for k in range(min(front.channels, 3))], axis=1)
    c_back = np.stack([_bilinear(back_aligned[:, :, k], px, py)
                       for k in range(min(back.channels, 3))], axis=1)
    if c_front.shape[1] == 1:
        c_front = np.repeat(c_front, 3, axis=1)
    if c_back.shape[1] == 1:
        c_back = np.repeat(c_back, 3, axis=1)

    nz = mesh.vertex_normals()[:, 2]
    w_front = np.maximum(0.0, nz)
    w_back = np.maximum(0.0, -nz)
    both = vis_front & vis_back
    degenerate = both & (w_front + w_back == 0)
    w_front = np.where(degenerate, 0.5, w_front)
    w_back = np.where(degenerate, 0.5, w_back)

    colors = np.zeros((mesh.n_vertices, 3))
    only_front = vis_front & ~vis_back
    only_back = vis_back & ~vis_front
    colors[only_front] = c_front[only_front]
    colors[only_back] = c_back[only_back]
    denom = (w_front + w_back)[both, None]
    colors[both] = (w_front[both, None] * c_front[both]
                    + w_back[both, None] * c_back[both]) / denom

    uncolored = np.nonzero(~(vis_front | vis_back))[0]
    out = TriMesh(mesh.vertices.copy(), mesh.faces.copy(), colors,
                  None if mesh.rest_coords is None else mesh.rest_coords.copy(),
                  dict(mesh.info))
    return out, uncolored


def diffuse_hole_colors(mesh: TriMesh, uncolored, tol: float = 1e-4,
                        max_iterations: int = None) -> TriMesh:
    """Fill uncolored vertices by synchronous neighbor averaging with
    inverse-edge-length weights until the largest per-iteration change drops
    to `tol`. Colored vertices are never modified."""
    if mesh.colors is None:
        raise SeedingError("mesh carries no colors to diffuse")
    uncolored = np.asarray(uncolored, dtype=np.int64).reshape(-1)
    colors = mesh.colors.copy()
    if uncolored.size == 0:
        return TriMesh(mesh.vertices.copy(), mesh.faces.copy(), colors,
                       None if mesh.rest_coords is None else mesh.rest_coords.copy(),
                       dict(mesh.info))

    n = mesh.n_vertices
    seeded = np.ones(n, dtype=bool)
    seeded[uncolored] = False
    n_comp, labels = mesh.vertex_components()
    for comp in range(n_comp):
        members = labels == comp
        if not seeded[members].any():
            raise SeedingError(f"connected component {comp} "
                               f"({members.sum()} vertices) has no colored vertex")

    e = mesh.edges()
    lengths = np.linalg.norm(mesh.vertices[e[:, 0]] - mesh.vertices[e[:, 1]],
                             axis=1)
    inv = 1.0 / np.maximum(lengths, 1e-12)
    w = sparse.csr_matrix(
        (np.concatenate([inv, inv]),
         (np.concatenate([e[:, 0], e[:, 1]]), np.concatenate([e[:, 1], e[:, 0]]))),
        shape=(n, n))
    row_sum = np.asarray(w.sum(axis=1)).ravel()

    # start holes at their component's seed mean so iterates stay in the
    # seeds' convex hull
    for comp in np.unique(labels[uncolored]):
        members = labels == comp
        colors[members & ~seeded] = colors[members & seeded].mean(axis=0)

    cap = max_iterations if max_iterations is not None else 10 * n
    holes = uncolored
    for _ in range(cap):
        avg = (w[holes] @ colors) / row_sum[holes, None]
        change = np.abs(avg - colors[holes]).max()
        colors[holes] = avg
        if change <= tol:
            break
    else:
        raise ToolkitError(f"color diffusion did not converge in {cap} iterations")
    return TriMesh(mesh.vertices.copy(), mesh.faces.copy(), colors,
                   None if mesh.rest_coords is None else mesh.rest_coords.copy(),
                   dict(mesh.info))
