import numpy as np
import pytest

from charanim.deform import (HandleSet, biharmonic_deform, laplacian_smooth,
                             select_handles, thinning_displacements,
                             uniform_laplacian, view_ray_intervals)
from charanim.errors import ParameterError, SingularSystemError
from charanim.fixtures import (biped_bundle, box_mesh, grid_mesh, icosphere,
                               noisy_sphere, tube_mesh)
from charanim.mesh import TriMesh
from charanim.raster import BinaryMask
from charanim.volume import FrontProjection, marching_cubes, mesh_to_sdf


def disk_mask(h, w, cy, cx, r):
    yy, xx = np.mgrid[0:h, 0:w]
    return BinaryMask((yy - cy) ** 2 + (xx - cx) ** 2 <= r * r)


class TestSelectHandles:
    def test_threshold_order_enforced(self):
        mesh = icosphere(1)
        proj = FrontProjection(1.0, (0.0, 0.0), 8, 8)
        with pytest.raises(ParameterError):
            select_handles(mesh, BinaryMask(np.ones((8, 8), dtype=bool)), proj,
                           theta1=6, theta2=11)

    def test_circle_mask_fix_region(self):
        # disk of radius 20: interior distance D ~ 21 - r(pixel), so the
        # fixed region D >= 11 is a disk of radius ~9 at the center
        mask = disk_mask(64, 64, 32, 32, 20)
        mesh = icosphere(1)  # vertices irrelevant for the mask algebra
        proj = FrontProjection(1.0, (0.0, 63.0), 64, 64)
        regions = select_handles(mesh, mask, proj, 11, 6, 5, 2)
        ii, jj = np.nonzero(regions.m_fix.bits)
        assert ii.size > 0
        rr = np.hypot(ii - 32, jj - 32)
        assert rr.max() <= 10.5
        # contains the sub-disk of radius 8
        sub = disk_mask(64, 64, 32, 32, 8)
        assert (sub.bits & ~regions.m_fix.bits).sum() == 0

    def test_stick_limb_all_moving(self):
        bits = np.zeros((32, 64), dtype=bool)
        bits[16, 8:56] = True  # 1-px-wide limb: D = 1 everywhere on it
        mask = BinaryMask(bits)
        verts = np.stack([np.arange(10, 54, 4, dtype=float),
                          np.full(11, 15.0), np.zeros(11)], axis=1)
        mesh = TriMesh(verts, np.array([[i, i + 1, (i + 2) % 11]
                                        for i in range(9)]))
        proj = FrontProjection(1.0, (0.0, 31.0), 64, 32)
        regions = select_handles(mesh, mask, proj, 11, 6, 5, 2)
        assert not regions.m_fix.bits.any()
        assert np.array_equal(regions.s_mov.bits, bits)
        assert len(regions.moving_vertices) == len(verts)
        assert len(regions.fixed_vertices) == 0

    def test_biped_classification(self, biped):
        # paper thresholds on the capsule biped: fixed handles only on the
        # wide torso/head core, moving handles only on the thin limbs
        mesh = biped["mesh"]
        regions = select_handles(mesh, biped["mask"], biped["projection"],
                                 11, 6, 5, 2)
        assert len(regions.fixed_vertices) > 0
        assert len(regions.moving_vertices) > 0
        fixed_xy = mesh.vertices[regions.fixed_vertices][:, :2]
        # torso/neck/head occupy |x| <= 45 (plus head radius): never on limbs
        assert np.abs(fixed_xy[:, 0]).max() <= 50.0
        moving = mesh.vertices[regions.moving_vertices]
        on_arm = (np.abs(moving[:, 1] - 70.0) < 12) & (np.abs(moving[:, 0]) > 40)
        on_leg = moving[:, 1] < -72.0
        assert np.all(on_arm | on_leg)
        assert on_arm.any() and on_leg.any()

    def test_guard_clears_skeleton_near_fixed(self, biped):
        regions = select_handles(biped["mesh"], biped["mask"],
                                 biped["projection"], 11, 6, 5, 2)
        from charanim.raster import dilate
        guard_zone = dilate(regions.m_fix, 5.0)
        assert not (regions.s_mov.bits & guard_zone.bits).any()


class TestThinningDisplacements:
    def test_formula_cases(self):
        # box spanning z in [-4, 4]: ray mid-depth 0 everywhere
        mesh = box_mesh((10.0, 10.0, 4.0))
        proj = FrontProjection(1.0, (-10.0, 10.0), 21, 21)
        from charanim.raster import DistanceField
        depth = DistanceField(np.full((21, 21), 2.0))  # target half-thickness 2

        probe = TriMesh(np.array([
            [0.0, 0.0, 4.0],    # |z - z_c| = 4 > 2: moves in by 2
            [0.0, 0.0, -4.0],   # same from behind: moves +2
            [0.0, 0.0, 2.0],    # already at target: zero
            [0.0, 0.0, 0.0],    # on the mid-plane: zero
        ]), np.zeros((0, 3), dtype=int))
        combined = TriMesh(
            np.vstack([mesh.vertices, probe.vertices]),
            mesh.faces)
        idx, disp, missed = thinning_displacements(
            combined, [8, 9, 10, 11], depth, proj)
        assert missed == 0
        assert np.array_equal(idx, [8, 9, 10, 11])
        assert np.allclose(disp[:, :2], 0.0)
        assert disp[0, 2] == pytest.approx(-2.0, abs=1e-9)
        assert disp[1, 2] == pytest.approx(2.0, abs=1e-9)
        assert disp[2, 2] == pytest.approx(0.0, abs=1e-9)
        assert disp[3, 2] == pytest.approx(0.0, abs=1e-9)

    def test_never_thickens(self):
        rng = np.random.default_rng(0)
        mesh = icosphere(3, 5.0)
        proj = FrontProjection(1.0, (-8.0, 8.0), 17, 17)
        from charanim.raster import DistanceField
        depth = DistanceField(rng.uniform(0.5, 3.0, (17, 17)))
        moving = rng.choice(mesh.n_vertices, 200, replace=False)
        idx, disp, _ = thinning_displacements(mesh, moving, depth, proj)
        z = mesh.vertices[idx, 2]
        counts, zmin, zmax = view_ray_intervals(
            mesh, mesh.vertices[idx, 0], mesh.vertices[idx, 1])
        z_c = (zmin + zmax) / 2
        assert np.all(np.abs(z + disp[:, 2] - z_c) <= np.abs(z - z_c) + 1e-9)

    def test_ray_miss_demotes(self):
        mesh = box_mesh((1.0, 1.0, 1.0))
        outside = TriMesh(np.vstack([mesh.vertices, [[50.0, 50.0, 0.0]]]),
                          mesh.faces)
        proj = FrontProjection(1.0, (-60.0, 60.0), 121, 121)
        from charanim.raster import DistanceField
        depth = DistanceField(np.full((121, 121), 1.0))
        idx, disp, missed = thinning_displacements(outside, [8], depth, proj)
        assert missed == 1
        assert idx.size == 0


class TestBiharmonic:
    def test_zero_displacement_identity(self):
        mesh = icosphere(2)
        handles = HandleSet([0, 5, 9], [10, 20], np.zeros((2, 3)))
        out = biharmonic_deform(mesh, handles)
        assert np.allclose(out.vertices, mesh.vertices, atol=1e-12)

    def test_constant_displacement_reproduced(self):
        mesh = icosphere(2)
        c = np.array([0.3, -0.2, 0.7])
        fixed = np.array([], dtype=int)
        moving = np.array([0, 7, 40, 100])
        handles = HandleSet(fixed, moving, np.tile(c, (4, 1)))
        out = biharmonic_deform(mesh, handles)
        assert np.abs(out.vertices - (mesh.vertices + c)).max() <= 1e-10

    def test_grid_matches_dense_solve(self):
        mesh = grid_mesh(12, 12)
        n = mesh.n_vertices
        boundary = mesh.boundary_vertices()
        interior_handle = 5 * 12 + 5
        d_h = np.zeros((1, 3))
        d_h[0] = (0.0, 0.0, 0.1)
        handles = HandleSet(boundary, [interior_handle], d_h)
        out = biharmonic_deform(mesh, handles)

        lap = uniform_laplacian(mesh).toarray()
        lap2 = lap @ lap
        h = np.concatenate([boundary, [interior_handle]])
        free = np.setdiff1d(np.arange(n), h)
        dvals = np.zeros((n, 3))
        dvals[interior_handle] = d_h[0]
        dense = np.linalg.solve(lap2[np.ix_(free, free)],
                                -lap2[np.ix_(free, h)] @ dvals[h])
        got = out.vertices[free] - mesh.vertices[free]
        assert np.abs(got - dense).max() <= 1e-8

    def test_handle_constraints_exact(self):
        mesh = icosphere(2)
        rng = np.random.default_rng(1)
        moving = np.array([3, 77, 150])
        disp = rng.normal(size=(3, 3)) * 0.1
        handles = HandleSet([0, 50], moving, disp)
        out = biharmonic_deform(mesh, handles)
        assert np.array_equal(out.vertices[moving], mesh.vertices[moving] + disp)
        assert np.array_equal(out.vertices[[0, 50]], mesh.vertices[[0, 50]])

    def test_residual_invariant(self):
        mesh = icosphere(3)
        rng = np.random.default_rng(2)
        moving = rng.choice(mesh.n_vertices, 40, replace=False)
        disp = rng.normal(size=(40, 3)) * 0.05
        handles = HandleSet([], moving, disp)
        out = biharmonic_deform(mesh, handles)
        lap = uniform_laplacian(mesh)
        lap2 = lap @ lap
        d = out.vertices - mesh.vertices
        free = np.setdiff1d(np.arange(mesh.n_vertices), moving)
        resid = np.abs((lap2 @ d)[free]).max()
        assert resid <= 1e-8 * np.abs(disp).max()

    def test_component_without_handles_raises(self):
        a = icosphere(1)
        b = icosphere(1, center=(5.0, 0.0, 0.0))
        two = TriMesh(np.vstack([a.vertices, b.vertices]),
                      np.vstack([a.faces, b.faces + a.n_vertices]))
        handles = HandleSet([0, 1], [], np.zeros((0, 3)))
        with pytest.raises(SingularSystemError, match="component"):
            biharmonic_deform(two, handles)

    def test_empty_handles_rejected(self):
        with pytest.raises(ParameterError):
            biharmonic_deform(icosphere(1), HandleSet([], [], np.zeros((0, 3))))

    def test_zonly_displacement_keeps_projected_xy(self):
        mesh = icosphere(2)
        rng = np.random.default_rng(3)
        moving = rng.choice(mesh.n_vertices, 30, replace=False)
        disp = np.zeros((30, 3))
        disp[:, 2] = rng.normal(size=30) * 0.1
        out = biharmonic_deform(mesh, HandleSet([], moving, disp))
        assert np.array_equal(out.vertices[:, :2], mesh.vertices[:, :2])


class TestLaplacianSmooth:
    def test_zero_iterations_identity(self):
        mesh = noisy_sphere(2)
        out = laplacian_smooth(mesh, iterations=0)
        assert np.array_equal(out.vertices, mesh.vertices)

    def test_planar_grid_fixed_point(self):
        mesh = grid_mesh(10, 10)
        out = laplacian_smooth(mesh, iterations=5, strength=0.8)
        assert np.abs(out.vertices - mesh.vertices).max() <= 1e-9

    def test_noisy_sphere_denoised_without_shrink(self):
        mesh = noisy_sphere(3, radius=1.0, noise=0.05, seed=0)
        before = np.abs(np.linalg.norm(mesh.vertices, axis=1) - 1.0)
        out = laplacian_smooth(mesh, iterations=10)
        radii = np.linalg.norm(out.vertices, axis=1)
        after = np.abs(radii - 1.0)
        assert after.max() <= 0.5 * before.max()
        assert abs(radii.mean() - 1.0) <= 0.01

    def test_region_restricted(self):
        mesh = noisy_sphere(2, seed=1)
        region = np.arange(40)
        out = laplacian_smooth(mesh, iterations=3, strength=0.5, region=region)
        untouched = np.setdiff1d(np.arange(mesh.n_vertices), region)
        assert np.array_equal(out.vertices[untouched], mesh.vertices[untouched])

    def test_parameter_validation(self):
        mesh = grid_mesh(4, 4)
        with pytest.raises(ParameterError):
            laplacian_smooth(mesh, iterations=-1)
        with pytest.raises(ParameterError):
            laplacian_smooth(mesh, strength=0.0)

    def test_connectivity_unchanged(self):
        mesh = noisy_sphere(2, seed=2)
        out = laplacian_smooth(mesh, iterations=4)
        assert np.array_equal(out.faces, mesh.faces)
