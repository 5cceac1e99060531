"""Core 2D raster algorithms: distance transforms, thinning, Canny, morphology.

Conventions. Pixel (row, col) has its center at integer coordinates; distances
are measured between pixel centers, so a foreground pixel 4-adjacent to
background has interior distance exactly 1.0. Foreground is 8-connected,
background 4-connected.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from . import _accel
from .errors import DegenerateMaskError, DimensionError, ParameterError

_EIGHT = np.ones((3, 3), dtype=bool)


@dataclass
class RasterImage:
    """2D image; data is (height, width, channels) float64 in [0, 1]."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3 or arr.shape[2] not in (1, 3, 4):
            raise DimensionError(f"expected (h, w, 1|3|4) image, got {arr.shape}")
        if arr.size and not np.isfinite(arr).all():
            raise ValueError("image samples must be finite")
        if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
            raise ValueError("image samples must lie in [0, 1]")
        self.data = arr

    @property
    def height(self):
        return self.data.shape[0]

    @property
    def width(self):
        return self.data.shape[1]

    @property
    def channels(self):
        return self.data.shape[2]

    def plane(self, c=0):
        """One channel as a (h, w) array."""
        return self.data[:, :, c]


@dataclass
class BinaryMask:
    """Boolean occupancy grid, (height, width)."""

    bits: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.bits)
        if arr.ndim != 2:
            raise DimensionError(f"expected (h, w) mask, got {arr.shape}")
        self.bits = arr.astype(bool)

    @property
    def height(self):
        return self.bits.shape[0]

    @property
    def width(self):
        return self.bits.shape[1]

    def same_shape(self, other):
        return self.bits.shape == (other.height, other.width)


@dataclass
class DistanceField:
    """Non-negative per-pixel distances in pixel units."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 2:
            raise DimensionError(f"expected (h, w) field, got {arr.shape}")
        if arr.size and np.nanmin(arr) < 0.0:
            raise ValueError("distances must be non-negative")
        self.values = arr

    def sample_bilinear(self, x, y):
        """Bilinear sample at fractional pixel coords (x=col, y=row), clamped."""
        return _bilinear(self.values, np.asarray(x), np.asarray(y))


def _bilinear(plane, x, y):
    h, w = plane.shape
    x = np.clip(x, 0.0, w - 1.0)
    y = np.clip(y, 0.0, h - 1.0)
    x0 = np.floor(x).astype(int)
    y0 = np.floor(y).astype(int)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = x - x0
    fy = y - y0
    top = plane[y0, x0] * (1 - fx) + plane[y0, x1] * fx
    bot = plane[y1, x0] * (1 - fx) + plane[y1, x1] * fx
    return top * (1 - fy) + bot * fy


def _require_nonempty(mask):
    if mask.bits.size == 0:
        raise DimensionError("zero-sized mask")


def distance_transform(mask: BinaryMask) -> DistanceField:
    """Exact Euclidean distance from each foreground pixel to the nearest
    background pixel; background pixels map to 0."""
    _require_nonempty(mask)
    if not mask.bits.any():
        return DistanceField(np.zeros(mask.bits.shape))
    sq = _accel.edt_sq(~mask.bits)
    out = np.sqrt(sq)
    out[sq >= 1e20] = np.inf  # no background anywhere
    out[~mask.bits] = 0.0
    return DistanceField(out)


def signed_distance_2d(mask: BinaryMask) -> np.ndarray:
    """Signed distance to the mask boundary: negative inside, positive outside.

    Magnitude is the center-to-center distance to the nearest pixel of the
    other side, so the zero level sits halfway between a boundary pixel pair.
    """
    _require_nonempty(mask)
    bits = mask.bits
    if bits.all() or not bits.any():
        raise DegenerateMaskError("mask must contain both foreground and background")
    inside = np.sqrt(_accel.edt_sq(~bits))
    outside = np.sqrt(_accel.edt_sq(bits))
    return np.where(bits, -inside, outside)


def dilate(mask: BinaryMask, r: float) -> BinaryMask:
    """Morphological dilation with a Euclidean disk of radius r (pixels)."""
    if r < 0:
        raise ParameterError("radius must be >= 0")
    _require_nonempty(mask)
    if not mask.bits.any():
        return BinaryMask(mask.bits.copy())
    return BinaryMask(_accel.edt_sq(mask.bits) <= r * r)


def erode(mask: BinaryMask, r: float) -> BinaryMask:
    """Morphological erosion with a Euclidean disk of radius r (pixels)."""
    if r < 0:
        raise ParameterError("radius must be >= 0")
    _require_nonempty(mask)
    if mask.bits.all():
        return BinaryMask(mask.bits.copy())
    return BinaryMask(~(_accel.edt_sq(~mask.bits) <= r * r))


# ---------------------------------------------------------------------------
# thinning

# 8-neighborhood bit order around a pixel: N, NE, E, SE, S, SW, W, NW
_OFFSETS = ((-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1))


def _component_count(cells, diag):
    # count connected components among a set of ring positions
    cells = list(cells)
    seen = set()
    comps = 0
    for start in cells:
        if start in seen:
            continue
        comps += 1
        stack = [start]
        seen.add(start)
        while stack:
            cy, cx = stack.pop()
            for oy, ox in cells:
                if (oy, ox) in seen:
                    continue
                dy, dx = abs(cy - oy), abs(cx - ox)
                adj = max(dy, dx) == 1 if diag else dy + dx == 1
                if adj:
                    seen.add((oy, ox))
                    stack.append((oy, ox))
    return comps


def _build_deletable_lut():
    """deletable[config] = pixel is simple (8-fg/4-bg) and not an endpoint."""
    lut = np.zeros(256, dtype=bool)
    edge_positions = {(-1, 0), (0, 1), (1, 0), (0, -1)}
    for cfg in range(256):
        fg = [_OFFSETS[b] for b in range(8) if cfg >> b & 1]
        if len(fg) < 2:
            continue  # isolated point or curve endpoint: keep
        bg = [_OFFSETS[b] for b in range(8) if not cfg >> b & 1]
        if _component_count(fg, diag=True) != 1:
            continue
        bg_cells = set(bg)
        comps_with_edge = 0
        seen = set()
        for start in bg_cells:
            if start in seen:
                continue
            stack = [start]
            seen.add(start)
            touches = start in edge_positions
            while stack:
                cy, cx = stack.pop()
                for oy, ox in bg_cells:
                    if (oy, ox) not in seen and abs(cy - oy) + abs(cx - ox) == 1:
                        seen.add((oy, ox))
                        stack.append((oy, ox))
                        if (oy, ox) in edge_positions:
                            touches = True
            if touches:
                comps_with_edge += 1
        lut[cfg] = comps_with_edge == 1
    return lut


_DELETABLE = _build_deletable_lut()


def _neighbor_bits(grid, i, j):
    return (int(grid[i - 1, j]) | int(grid[i - 1, j + 1]) << 1
            | int(grid[i, j + 1]) << 2 | int(grid[i + 1, j + 1]) << 3
            | int(grid[i + 1, j]) << 4 | int(grid[i + 1, j - 1]) << 5
            | int(grid[i, j - 1]) << 6 | int(grid[i - 1, j - 1]) << 7)


def skeletonize(mask: BinaryMask) -> BinaryMask:
    """Homotopy-preserving morphological thinning to a 1-px-wide skeleton.

    Iterates directional sub-passes (N, S, E, W border pixels) deleting simple
    non-endpoint pixels sequentially, so connectivity of foreground and
    background is preserved exactly and the result is centered on the medial
    axis for symmetric shapes.
    """
    _require_nonempty(mask)
    h, w = mask.bits.shape
    grid = np.zeros((h + 2, w + 2), dtype=bool)
    grid[1:-1, 1:-1] = mask.bits
    directions = ((-1, 0), (1, 0), (0, 1), (0, -1))
    changed = True
    while changed:
        changed = False
        for dy, dx in directions:
            border = grid.copy()
            border[1:-1, 1:-1] &= ~grid[1 + dy:h + 1 + dy, 1 + dx:w + 1 + dx]
            ii, jj = np.nonzero(border)
            # peel outermost-first along the pass direction, so rim tips are
            # removed before the pixels backing them
            order = np.lexsort((jj, -ii) if dy > 0 else
                               (ii, -jj) if dx > 0 else
                               (ii, jj) if dx < 0 else (jj, ii))
            for i, j in zip(ii[order].tolist(), jj[order].tolist()):
                if not grid[i, j]:
                    continue
                if not grid[i + dy, j + dx] and _DELETABLE[_neighbor_bits(grid, i, j)]:
                    grid[i, j] = False
                    changed = True
    return BinaryMask(grid[1:-1, 1:-1])


# ---------------------------------------------------------------------------
# edges

def luminance(image: RasterImage) -> np.ndarray:
    """Rec.601 luma for color images, the single plane for grayscale."""
    if image.channels == 1:
        return image.plane(0)
    rgb = image.data[:, :, :3]
    return rgb @ np.array([0.299, 0.587, 0.114])


def canny(gray: RasterImage, sigma: float = 1.4, low: float = 0.1,
          high: float = 0.2) -> BinaryMask:
    """Canny edges: Gaussian blur, Sobel gradients, non-maximum suppression,
    hysteresis linking.

    Gradients are normalized so a unit step yields magnitude 1.0 before
    blurring; low/high threshold that normalized magnitude.
    """
    if not 0.0 < low < high:
        raise ParameterError("thresholds must satisfy 0 < low < high")
    if sigma < 0:
        raise ParameterError("sigma must be >= 0")
    if gray.channels != 1:
        raise DimensionError("canny expects a single-channel image")
    g = gray.plane(0)
    if g.size == 0:
        raise DimensionError("zero-sized image")
    if sigma > 0:
        g = ndimage.gaussian_filter(g, sigma, mode="nearest")
    gx = ndimage.sobel(g, axis=1, mode="nearest") / 4.0
    gy = ndimage.sobel(g, axis=0, mode="nearest") / 4.0
    mag = np.hypot(gx, gy)

    # quantize direction to 4 sectors and compare against both neighbors
    angle = np.degrees(np.arctan2(gy, gx)) % 180.0
    sector = np.zeros(mag.shape, dtype=np.int8)
    sector[(angle >= 22.5) & (angle < 67.5)] = 1
    sector[(angle >= 67.5) & (angle < 112.5)] = 2
    sector[(angle >= 112.5) & (angle < 157.5)] = 3
    pad = np.pad(mag, 1, mode="constant")
    shifts = {
        0: (pad[1:-1, 2:], pad[1:-1, :-2]),      # horizontal gradient
        1: (pad[2:, :-2], pad[:-2, 2:]),         # diagonal /
        2: (pad[2:, 1:-1], pad[:-2, 1:-1]),      # vertical gradient
        3: (pad[2:, 2:], pad[:-2, :-2]),         # diagonal \
    }
    keep = np.zeros(mag.shape, dtype=bool)
    for s, (n1, n2) in shifts.items():
        sel = sector == s
        keep |= sel & (mag >= n1) & (mag >= n2)
    keep[0, :] = keep[-1, :] = False
    keep[:, 0] = keep[:, -1] = False

    strong = keep & (mag >= high)
    weak = keep & (mag >= low)
    if not strong.any():
        return BinaryMask(np.zeros(mag.shape, dtype=bool))
    labels, _ = ndimage.label(weak, structure=_EIGHT)
    good = np.unique(labels[strong])
    return BinaryMask(weak & np.isin(labels, good))
