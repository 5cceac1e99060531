"""Orthographic software rendering: color/depth/mask buffers, rest-coordinate
attachment and the per-frame guidance channels consumed by stylization."""

from dataclasses import dataclass, field

import numpy as np

from . import _accel, pngio
from .errors import DimensionError, ParameterError
from .mesh import TriMesh
from .raster import BinaryMask, RasterImage, canny, dilate
from .volume import FrontProjection

_FAR = 1e20


def _rot_y(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]])


def _rot_x(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[1, 0, 0], [0, c, -s], [0, s, c]])


@dataclass
class Camera:
    """Orthographic camera. `front` looks along -z, `back` along +z (image
    mirrored horizontally), `free` yaws about y then pitches about x around
    the model center. Fit maps the target bounds into the frame with a
    uniform scale and `margin` fraction of border."""

    view: str = "front"
    resolution: tuple = (512, 512)
    margin: float = 0.05
    yaw: float = 0.0
    pitch: float = 0.0
    scale: float = None
    center: np.ndarray = None

    def __post_init__(self):
        if self.view not in ("front", "back", "free"):
            raise ParameterError(f"unknown view '{self.view}'")
        if np.isscalar(self.resolution):
            self.resolution = (int(self.resolution), int(self.resolution))
        if self.center is not None:
            self.center = np.asarray(self.center, dtype=np.float64).reshape(3)

    def rotation(self):
        if self.view == "front":
            return np.eye(3)
        if self.view == "back":
            return np.diag([-1.0, 1.0, -1.0])
        return _rot_x(self.pitch) @ _rot_y(self.yaw)

    def fitted(self, lo, hi):
        """Camera with scale/center frozen against the given world bounds."""
        lo = np.asarray(lo, dtype=np.float64)
        hi = np.asarray(hi, dtype=np.float64)
        center = (lo + hi) / 2.0
        corners = np.array([[x, y, z] for x in (lo[0], hi[0])
                            for y in (lo[1], hi[1]) for z in (lo[2], hi[2])])
        view = (corners - center) @ self.rotation().T
        ext = view.max(axis=0) - view.min(axis=0)
        w, h = self.resolution
        usable_w = max((w - 1) * (1.0 - 2.0 * self.margin), 1.0)
        usable_h = max((h - 1) * (1.0 - 2.0 * self.margin), 1.0)
        scale = max(ext[0] / usable_w, ext[1] / usable_h, 1e-12)
        return Camera(self.view, (w, h), self.margin, self.yaw, self.pitch,
                      scale, center)

    def fit_to(self, mesh: TriMesh):
        lo, hi = mesh.bounds()
        return self.fitted(lo, hi)

    def project(self, vertices):
        """(px, py, depth) per vertex; depth is smaller nearer the camera."""
        if self.scale is None or self.center is None:
            raise ParameterError("camera is not fitted")
        w, h = self.resolution
        view = (np.asarray(vertices, dtype=np.float64) - self.center) @ self.rotation().T
        px = view[:, 0] / self.scale + (w - 1) / 2.0
        py = (h - 1) / 2.0 - view[:, 1] / self.scale
        return px, py, -view[:, 2]

    def front_projection(self):
        """Equivalent FrontProjection (front view only)."""
        if self.view != "front":
            raise ParameterError("front_projection requires the front view")
        if self.scale is None or self.center is None:
            raise ParameterError("camera is not fitted")
        w, h = self.resolution
        x0 = self.center[0] - self.scale * (w - 1) / 2.0
        y0 = self.center[1] + self.scale * (h - 1) / 2.0
        return FrontProjection(self.scale, (x0, y0), w, h)


@dataclass
class RenderBuffers:
    color: RasterImage
    depth: np.ndarray          # raw camera depth, _FAR where uncovered
    mask: BinaryMask
    triangle: np.ndarray       # covering triangle index, -1 where uncovered
    attrs: np.ndarray = None   # extra interpolated channels, 0 where uncovered

    def normalized_depth(self) -> RasterImage:
        """Depth as [0, 1] over the frame's z-range: nearest surface 1,
        farthest 0; background 0."""
        covered = self.mask.bits
        out = np.zeros(self.depth.shape)
        if covered.any():
            d = self.depth[covered]
            span = d.max() - d.min()
            out[covered] = 1.0 if span == 0 else (d.max() - d) / span
        return RasterImage(out[:, :, None])


def rasterize(mesh: TriMesh, camera: Camera, extra_attrs=None) -> RenderBuffers:
    """Z-buffered barycentric rasterization of per-vertex color (and optional
    extra per-vertex channels) with a deterministic top-left fill rule."""
    w, h = camera.resolution
    colors = mesh.colors if mesh.colors is not None else np.full(
        (mesh.n_vertices, 3), 0.7)
    attr = colors
    n_extra = 0
    if extra_attrs is not None:
        extra_attrs = np.asarray(extra_attrs, dtype=np.float64)
        if extra_attrs.ndim == 1:
            extra_attrs = extra_attrs[:, None]
        if len(extra_attrs) != mesh.n_vertices:
            raise DimensionError("extra attributes must be per-vertex")
        attr = np.concatenate([colors, extra_attrs], axis=1)
        n_extra = extra_attrs.shape[1]

    depth_buf = np.full((h, w), _FAR)
    attr_buf = np.zeros((h, w, attr.shape[1]))
    tri_buf = np.full((h, w), -1, dtype=np.int64)
    if not mesh.is_empty():
        px, py, pd = camera.project(mesh.vertices)
        xy = np.ascontiguousarray(
            np.stack([px[mesh.faces], py[mesh.faces]], axis=-1))
        tri_d = np.ascontiguousarray(pd[mesh.faces])
        tri_attr = np.ascontiguousarray(attr[mesh.faces])

        lo = np.clip(np.ceil(xy[:, :, 1].min(axis=1)), 0, h - 1).astype(np.int64)
        hi = np.clip(np.floor(xy[:, :, 1].max(axis=1)), 0, h - 1).astype(np.int64)
        inside = ((xy[:, :, 1].max(axis=1) >= 0) & (xy[:, :, 1].min(axis=1) <= h - 1)
                  & (xy[:, :, 0].max(axis=1) >= 0) & (xy[:, :, 0].min(axis=1) <= w - 1))
        counts = np.where(inside, hi - lo + 1, 0).clip(min=0)
        tri_ids = np.repeat(np.arange(len(xy), dtype=np.int64), counts)
        if tri_ids.size:
            row_of = np.concatenate([np.arange(a, a + c) for a, c in
                                     zip(lo[counts > 0], counts[counts > 0])])
            order = np.lexsort((tri_ids, row_of))
            row_of = row_of[order]
            tri_sorted = tri_ids[order]
            starts = np.searchsorted(row_of, np.arange(h + 1)).astype(np.int64)
            _accel.raster_rows(xy, tri_d, tri_attr, starts, tri_sorted, w,
                               attr_buf, depth_buf, tri_buf)

    mask = BinaryMask(tri_buf >= 0)
    color = RasterImage(np.clip(attr_buf[:, :, :3], 0.0, 1.0))
    extras = attr_buf[:, :, 3:] if n_extra else None
    return RenderBuffers(color, depth_buf, mask, tri_buf, extras)


def attach_rest_coordinates(mesh: TriMesh, proj: FrontProjection) -> TriMesh:
    """Store per-vertex (u, v): the rest-pose projected pixel position
    normalized by the rest foreground bounding box to [0, 1]^2; u grows with
    pixel column, v with pixel row. The attribute never gets recomputed, so
    it rides through posing unchanged."""
    if mesh.n_vertices == 0:
        raise ParameterError("mesh has no vertices")
    px, py = proj.to_pixel(mesh.vertices[:, 0], mesh.vertices[:, 1])
    spans = []
    for arr in (px, py):
        lo, hi = arr.min(), arr.max()
        if hi - lo <= 0:
            raise ParameterError("rest footprint is degenerate")
        spans.append((lo, hi - lo))
    rest = np.stack([(px - spans[0][0]) / spans[0][1],
                     (py - spans[1][0]) / spans[1][1]], axis=1)
    return TriMesh(mesh.vertices.copy(), mesh.faces.copy(),
                   None if mesh.colors is None else mesh.colors.copy(),
                   rest, dict(mesh.info))


@dataclass
class GuidanceFrame:
    """Per-frame stylization inputs: color frame, coverage mask, rest-pose
    positional map (zero outside the mask), depth edges and normalized depth."""

    color: RasterImage
    mask: BinaryMask
    pos: np.ndarray
    edge: BinaryMask
    depth: RasterImage

    def __post_init__(self):
        shape = self.mask.bits.shape
        if (self.color.data.shape[:2] != shape or self.pos.shape[:2] != shape
                or self.edge.bits.shape != shape
                or self.depth.data.shape[:2] != shape):
            raise DimensionError("guidance layers must share resolution")

    def save(self, out_dir, index: int) -> list:
        """Write F/G_mask/G_pos/G_edge/depth PNGs; returns the paths."""
        base = str(out_dir)
        paths = []

        def p(name):
            path = f"{base}/{name}_{index:04d}.png"
            paths.append(path)
            return path

        pngio.write_image(p("F"), self.color)
        pngio.write_mask(p("G_mask"), self.mask)
        pos16 = np.clip(np.floor(self.pos * 65535.0 + 0.5), 0, 65535).astype(np.uint16)
        pngio.write_png16_2ch(p("G_pos"), pos16)
        pngio.write_mask(p("G_edge"), self.edge)
        pngio.write_image(p("depth"), self.depth)
        return paths


def guidance_channels(mesh: TriMesh, camera: Camera, sigma: float = 1.4,
                      low: float = 0.1, high: float = 0.2) -> GuidanceFrame:
    """Render one frame's guidance bundle from a posed mesh carrying rest
    coordinates. Depth edges are masked to a 1 px dilation of the coverage
    mask so background quantization cannot fire the detector."""
    if mesh.rest_coords is None and not mesh.is_empty():
        raise ParameterError("mesh has no rest coordinates attached")
    rest = mesh.rest_coords if mesh.rest_coords is not None else \
        np.zeros((mesh.n_vertices, 2))
    buffers = rasterize(mesh, camera, extra_attrs=rest)
    depth = buffers.normalized_depth()
    edges = canny(depth, sigma, low, high)
    if buffers.mask.bits.any():
        edge = BinaryMask(edges.bits & dilate(buffers.mask, 1.0).bits)
    else:
        edge = BinaryMask(np.zeros_like(edges.bits))
    pos = buffers.attrs if buffers.attrs is not None else \
        np.zeros((*buffers.mask.bits.shape, 2))
    pos = np.clip(np.where(buffers.mask.bits[:, :, None], pos, 0.0), 0.0, 1.0)
    return GuidanceFrame(buffers.color, buffers.mask, pos, edge, depth)
