import numpy as np
import pytest
from scipy import ndimage

from charanim.errors import DegenerateMaskError, DimensionError, ParameterError
from charanim.raster import (BinaryMask, RasterImage, canny, dilate,
                             distance_transform, erode, signed_distance_2d,
                             skeletonize)

EIGHT = np.ones((3, 3), dtype=bool)


def brute_force_dt(bits):
    """O(N^2) oracle: per foreground pixel, min distance over all background."""
    h, w = bits.shape
    out = np.zeros((h, w))
    bi, bj = np.nonzero(~bits)
    if bi.size == 0:
        out[bits] = np.inf
        return out
    gi, gj = np.nonzero(bits)
    for i, j in zip(gi, gj):
        out[i, j] = np.sqrt(((bi - i) ** 2 + (bj - j) ** 2).min())
    return out


def rect_mask(h, w, top, left, rh, rw):
    bits = np.zeros((h, w), dtype=bool)
    bits[top:top + rh, left:left + rw] = True
    return BinaryMask(bits)


def disk_mask(h, w, cy, cx, r):
    yy, xx = np.mgrid[0:h, 0:w]
    return BinaryMask((yy - cy) ** 2 + (xx - cx) ** 2 <= r * r)


class TestDistanceTransform:
    def test_all_false_is_all_zero(self):
        out = distance_transform(BinaryMask(np.zeros((5, 7), dtype=bool)))
        assert np.array_equal(out.values, np.zeros((5, 7)))

    def test_single_pixel(self):
        bits = np.zeros((5, 5), dtype=bool)
        bits[2, 2] = True
        out = distance_transform(BinaryMask(bits))
        assert out.values[2, 2] == 1.0
        assert out.values.sum() == 1.0

    def test_solid_rectangle_center(self):
        # 41x11 rectangle inside a padded frame; center row is 6 px from the
        # nearest background row (pixel-center metric).
        mask = rect_mask(15, 45, 2, 2, 11, 41)
        out = distance_transform(mask)
        assert out.values[2 + 5, 2 + 20] == 6.0
        assert np.array_equal(out.values, brute_force_dt(mask.bits))

    def test_matches_oracle_on_random_masks(self):
        rng = np.random.default_rng(7)
        for _ in range(25):
            bits = rng.random((32, 32)) < rng.uniform(0.2, 0.8)
            got = distance_transform(BinaryMask(bits)).values
            assert np.array_equal(got, brute_force_dt(bits))

    def test_zero_sized_mask_raises(self):
        with pytest.raises(DimensionError):
            distance_transform(BinaryMask(np.zeros((0, 4), dtype=bool)))

    def test_background_is_exactly_zero(self):
        rng = np.random.default_rng(3)
        bits = rng.random((20, 20)) < 0.5
        out = distance_transform(BinaryMask(bits)).values
        assert (out[~bits] == 0.0).all()
        assert (out[bits] > 0.0).all()


class TestSignedDistance:
    def test_disk_centroid_depth(self):
        mask = disk_mask(31, 31, 15, 15, 10)
        sd = signed_distance_2d(mask)
        # brute-force boundary search puts the center about one radius inside
        assert sd[15, 15] == pytest.approx(-10.0, abs=0.8)

    def test_boundary_pixel_magnitude(self):
        mask = disk_mask(31, 31, 15, 15, 10)
        sd = signed_distance_2d(mask)
        assert abs(sd[15, 15 + 10]) <= 1.0

    def test_far_corner_matches_circle_distance(self):
        mask = disk_mask(41, 41, 20, 20, 5)
        sd = signed_distance_2d(mask)
        analytic = np.hypot(20, 20) - 5
        assert sd[0, 0] == pytest.approx(analytic, abs=1.0)
        assert sd[0, 0] > 0

    def test_degenerate_masks_raise(self):
        with pytest.raises(DegenerateMaskError):
            signed_distance_2d(BinaryMask(np.ones((4, 4), dtype=bool)))
        with pytest.raises(DegenerateMaskError):
            signed_distance_2d(BinaryMask(np.zeros((4, 4), dtype=bool)))

    def test_sign_split(self):
        mask = disk_mask(21, 21, 10, 10, 6)
        sd = signed_distance_2d(mask)
        assert (sd[mask.bits] < 0).all()
        assert (sd[~mask.bits] > 0).all()


class TestSkeletonize:
    def test_thin_line_unchanged(self):
        bits = np.zeros((7, 30), dtype=bool)
        bits[3, 4:26] = True
        out = skeletonize(BinaryMask(bits))
        assert np.array_equal(out.bits, bits)

    def test_rectangle_midline(self):
        mask = rect_mask(15, 45, 2, 2, 11, 41)
        out = skeletonize(mask)
        ii, jj = np.nonzero(out.bits)
        assert ii.size > 0
        # within 1 px of the horizontal midline (row 2 + 5)
        assert np.abs(ii - 7).max() <= 1
        _, n = ndimage.label(out.bits, structure=EIGHT)
        assert n == 1

    def test_disk_collapses_to_center_cluster(self):
        mask = disk_mask(31, 31, 15, 15, 10)
        out = skeletonize(mask)
        ii, jj = np.nonzero(out.bits)
        assert 1 <= ii.size <= 5
        assert np.hypot(ii - 15, jj - 15).max() <= 3.0

    def test_subset_and_component_preservation(self):
        rng = np.random.default_rng(11)
        for _ in range(12):
            blob = rng.random((40, 40)) < 0.35
            blob = ndimage.binary_closing(blob, structure=EIGHT)
            out = skeletonize(BinaryMask(blob))
            assert not (out.bits & ~blob).any()
            _, n_in = ndimage.label(blob, structure=EIGHT)
            _, n_out = ndimage.label(out.bits, structure=EIGHT)
            assert n_in == n_out

    def test_empty_in_empty_out(self):
        out = skeletonize(BinaryMask(np.zeros((6, 6), dtype=bool)))
        assert not out.bits.any()


class TestCanny:
    def test_constant_image_empty(self):
        img = RasterImage(np.full((32, 32, 1), 0.6))
        assert not canny(img).bits.any()

    def test_vertical_step_edge(self):
        img = np.zeros((40, 40, 1))
        img[:, 20:] = 1.0
        edges = canny(RasterImage(img))
        ii, jj = np.nonzero(edges.bits)
        assert ii.size > 0
        # localized within 1 px of the step at column 20 (edge line at 19.5)
        assert np.abs(jj - 19.5).max() <= 1.0
        # recall over interior rows
        rows = np.unique(ii)
        assert rows.size >= 0.95 * (40 - 2)

    def test_sphere_depth_ring(self):
        # synthetic depth render: sphere radius 12 in front of a plane
        h = w = 48
        yy, xx = np.mgrid[0:h, 0:w] - 23.5
        rr = np.hypot(yy, xx)
        depth = np.where(rr <= 12.0, 0.5 + np.sqrt(np.maximum(144 - rr ** 2, 0)) / 48,
                         0.25)
        edges = canny(RasterImage(depth[:, :, None]), sigma=1.0)
        ii, jj = np.nonzero(edges.bits)
        assert ii.size > 0
        d = np.hypot(ii - 23.5, jj - 23.5)
        assert np.abs(d - 12.0).max() <= 1.5

    def test_translation_equivariance(self):
        rng = np.random.default_rng(5)
        base = ndimage.gaussian_filter(rng.random((50, 50)), 2.0)
        base = (base - base.min()) / (base.max() - base.min())
        a = canny(RasterImage(base[:, :, None]), sigma=1.0, low=0.01, high=0.02)
        shifted = np.roll(base, (3, 4), axis=(0, 1))
        b = canny(RasterImage(shifted[:, :, None]), sigma=1.0, low=0.01, high=0.02)
        interior = np.zeros((50, 50), dtype=bool)
        interior[10:-10, 10:-10] = True
        moved = np.roll(a.bits, (3, 4), axis=(0, 1))
        assert np.array_equal(moved & interior, b.bits & interior)

    def test_threshold_validation(self):
        img = RasterImage(np.zeros((8, 8, 1)))
        with pytest.raises(ParameterError):
            canny(img, low=0.3, high=0.2)
        with pytest.raises(ParameterError):
            canny(img, low=0.2, high=0.2)

    def test_deterministic(self):
        rng = np.random.default_rng(9)
        img = RasterImage(rng.random((30, 30, 1)))
        a = canny(img, sigma=1.0)
        b = canny(img, sigma=1.0)
        assert np.array_equal(a.bits, b.bits)


class TestMorphology:
    def test_dilate_zero_identity(self):
        rng = np.random.default_rng(2)
        bits = rng.random((20, 20)) < 0.4
        out = dilate(BinaryMask(bits), 0)
        assert np.array_equal(out.bits, bits)

    def test_single_pixel_radius_two(self):
        bits = np.zeros((9, 9), dtype=bool)
        bits[4, 4] = True
        out = dilate(BinaryMask(bits), 2)
        # enumerate offsets with dx^2 + dy^2 <= 4
        expected = np.zeros((9, 9), dtype=bool)
        for dy in range(-2, 3):
            for dx in range(-2, 3):
                if dx * dx + dy * dy <= 4:
                    expected[4 + dy, 4 + dx] = True
        assert np.array_equal(out.bits, expected)
        assert out.bits.sum() == 13

    def test_closing_contains_original(self):
        rng = np.random.default_rng(4)
        for r in (1, 2, 3):
            bits = rng.random((30, 30)) < 0.3
            closed = erode(dilate(BinaryMask(bits), r), r)
            assert (bits & ~closed.bits).sum() == 0

    def test_dilation_monotone_extensive(self):
        rng = np.random.default_rng(6)
        a = rng.random((25, 25)) < 0.3
        b = a | (rng.random((25, 25)) < 0.2)
        da = dilate(BinaryMask(a), 2).bits
        db = dilate(BinaryMask(b), 2).bits
        assert (a & ~da).sum() == 0            # extensive
        assert (da & ~db).sum() == 0           # monotone
        ea = erode(BinaryMask(a), 2).bits
        assert (ea & ~a).sum() == 0            # anti-extensive

    def test_opening_closing_idempotent(self):
        rng = np.random.default_rng(8)
        bits = rng.random((30, 30)) < 0.4
        m = BinaryMask(bits)
        r = 2

        def closing(x):
            return erode(dilate(x, r), r)

        def opening(x):
            return dilate(erode(x, r), r)

        c1 = closing(m)
        c2 = closing(c1)
        assert np.array_equal(c1.bits, c2.bits)
        o1 = opening(m)
        o2 = opening(o1)
        assert np.array_equal(o1.bits, o2.bits)

    def test_negative_radius_raises(self):
        with pytest.raises(ParameterError):
            dilate(BinaryMask(np.zeros((4, 4), dtype=bool)), -1)
