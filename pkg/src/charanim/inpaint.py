"""Contour-region removal: mask composition and distance-ordered fill.

The fill visits masked pixels in increasing distance to the known region
(ties broken by row, then column) and replaces each with a normalized
weighted sum of already-known pixels inside `radius`. Weights combine
proximity and closeness of the boundary-distance level:

    w(p, q) = |p - q|^-2 * 1 / (1 + |T(q) - T(p)|)

where T is the Euclidean distance to the original known region (0 on known
pixels). There is no directional or gradient-extrapolation term, so every
filled value is a convex combination of known values.
"""

import numpy as np

from .errors import DegenerateMaskError, DimensionError, ParameterError
from .raster import BinaryMask, RasterImage, distance_transform, luminance
from . import _accel


def _check_dims(a, b, what):
    if (a.height, a.width) != (b.height, b.width):
        raise DimensionError(f"{what}: {a.height}x{a.width} vs {b.height}x{b.width}")


def compose_inpaint_mask(contour: BinaryMask, foreground: BinaryMask) -> BinaryMask:
    """Union of the contour mask and the background region."""
    _check_dims(contour, foreground, "contour vs foreground mask")
    return BinaryMask(contour.bits | ~foreground.bits)


def fast_marching_inpaint(image: RasterImage, region: BinaryMask,
                          radius: int = 5) -> RasterImage:
    """Fill `region` from surrounding texture in distance order.

    Pixels outside the region are returned bit-exact. RGBA alpha passes
    through untouched; only color channels are filled.
    """
    _check_dims(image, region, "image vs inpaint mask")
    if radius < 1:
        raise ParameterError("radius must be >= 1")
    bits = region.bits
    if bits.all():
        raise DegenerateMaskError("inpaint region covers the whole image")
    out = image.data.copy()
    if not bits.any():
        return RasterImage(out)

    n_color = 3 if image.channels == 4 else image.channels
    color = out[:, :, :n_color]
    level = np.sqrt(_accel.edt_sq(~bits))
    known = ~bits

    ii, jj = np.nonzero(bits)
    order = np.lexsort((jj, ii, level[ii, jj]))
    ii, jj = ii[order], jj[order]

    h, w = bits.shape
    r = int(radius)
    span = np.arange(-r, r + 1)
    dist = np.hypot(span[:, None], span[None, :])
    in_disk = (dist <= r) & (dist > 0)

    for i, j in zip(ii.tolist(), jj.tolist()):
        t0 = max(0, i - r)
        b0 = min(h, i + r + 1)
        l0 = max(0, j - r)
        r0 = min(w, j + r + 1)
        wt = slice(t0 - (i - r), 2 * r + 1 - ((i + r + 1) - b0))
        wl = slice(l0 - (j - r), 2 * r + 1 - ((j + r + 1) - r0))
        usable = known[t0:b0, l0:r0] & in_disk[wt, wl]
        vals = color[t0:b0, l0:r0][usable]
        d = dist[wt, wl][usable]
        lev = np.abs(level[t0:b0, l0:r0][usable] - level[i, j])
        wgt = 1.0 / (d * d * (1.0 + lev))
        # subtract a reference sample so constant regions reproduce exactly,
        # then clamp to the window range to keep the convex-combination
        # guarantee through float roundoff
        ref = vals[0]
        filled = ref + (wgt[:, None] * (vals - ref)).sum(axis=0) / wgt.sum()
        color[i, j] = np.clip(filled, vals.min(axis=0), vals.max(axis=0))
        known[i, j] = True
    return RasterImage(out)


def composite_foreground(filled: RasterImage, original: RasterImage,
                         foreground: BinaryMask) -> RasterImage:
    """Per-pixel select: filled where the foreground mask is set, else original."""
    _check_dims(filled, original, "filled vs original image")
    _check_dims(filled, foreground, "image vs foreground mask")
    if filled.channels != original.channels:
        raise DimensionError("channel counts differ")
    return RasterImage(np.where(foreground.bits[:, :, None],
                                filled.data, original.data))


def fallback_contour_mask(image: RasterImage, foreground: BinaryMask,
                          band: int = 4, darkness: float = 0.3) -> BinaryMask:
    """Heuristic contour mask: dark strokes in a silhouette-adjacent band.

    Selects foreground pixels whose interior distance is at most `band` and
    whose luminance is at most `darkness`. Stands in when no predicted
    contour mask is supplied.
    """
    if band < 1:
        raise ParameterError("band must be >= 1")
    if not 0.0 < darkness < 1.0:
        raise ParameterError("darkness must be in (0, 1)")
    _check_dims(image, foreground, "image vs foreground mask")
    depth = distance_transform(foreground).values
    return BinaryMask(foreground.bits & (depth <= band)
                      & (luminance(image) <= darkness))
