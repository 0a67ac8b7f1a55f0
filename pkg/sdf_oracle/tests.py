import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase, tag

from coord_field.grid import VoxelGrid, build_grid
from geom_core.exceptions import EmptyMesh
from geom_core.mesh import TriangleMesh
from geom_core.primitives import box, icosphere, plane_slab, single_triangle

from .distance import MeshSdf, exhaustive_sdf, mesh_sdf, ray_parity_inside
from .exceptions import NoSurfaceInVoxel, SampleFormatError
from .geometry import EDGE_AB, FACE, VERTEX_A, closest_point_on_triangles
from .gradient import estimate_gradients, sdf_gradient
from .sampling import build_sample_set, sample_voxel_points
from .storage import HEADER, load_sample_set, sample_set_bytes, save_sample_set


def bumpy_sphere(seed=0):
    """Watertight, non-convex icosphere with radial noise."""
    sphere = icosphere(2, 0.5)
    rng = np.random.default_rng(seed)
    scale = 1.0 + 0.15 * rng.uniform(-1.0, 1.0, len(sphere.vertices))
    return TriangleMesh(sphere.vertices * scale[:, None], sphere.triangles)


class ClosestPointTests(SimpleTestCase):
    def test_features(self):
        a, b, c = np.array([0.0, 0, 0]), np.array([1.0, 0, 0]), np.array([0.0, 1, 0])
        points = np.array([[0.2, 0.2, 1.0], [0.5, -1.0, 0.0], [-1.0, -1.0, 0.0]])
        closest, feature = closest_point_on_triangles(points, a, b, c)
        np.testing.assert_allclose(closest, [[0.2, 0.2, 0.0], [0.5, 0.0, 0.0], [0.0, 0.0, 0.0]])
        self.assertEqual(list(feature), [FACE, EDGE_AB, VERTEX_A])


class MeshSdfTests(SimpleTestCase):
    def test_cube(self):
        cube = box()
        self.assertAlmostEqual(mesh_sdf(cube, (0.0, 0.0, 0.0)), -0.5, places=12)
        self.assertAlmostEqual(mesh_sdf(cube, (1.0, 0.0, 0.0)), 0.5, places=12)

    def test_corner_region_sign(self):
        # Closest feature is a vertex; the pseudonormal gives the outside sign
        self.assertAlmostEqual(mesh_sdf(box(), (1.0, 1.0, 1.0)), np.sqrt(3 * 0.25), places=12)

    def test_matches_exhaustive_scan(self):
        mesh = bumpy_sphere(1)
        points = np.random.default_rng(2).uniform(-1.0, 1.0, (400, 3))
        fast = MeshSdf(mesh)(points)
        slow = exhaustive_sdf(mesh, points)
        np.testing.assert_allclose(fast, slow, atol=1e-9)

    def test_open_mesh_uses_parity(self):
        mesh = single_triangle()
        oracle = MeshSdf(mesh)
        self.assertFalse(oracle.watertight)
        points = np.random.default_rng(4).uniform(-1.0, 1.0, (50, 3))
        np.testing.assert_allclose(oracle(points), exhaustive_sdf(mesh, points), atol=1e-12)

    def test_empty_mesh(self):
        with self.assertRaises(EmptyMesh):
            mesh_sdf(TriangleMesh(np.zeros((0, 3)), np.zeros((0, 3))), (0.0, 0.0, 0.0))

    def test_sphere_faceting_error(self):
        sphere = icosphere(3, 0.5)
        points = np.random.default_rng(5).uniform(-0.9, 0.9, (2000, 3))
        error = np.abs(MeshSdf(sphere)(points) - (np.linalg.norm(points, axis=1) - 0.5))
        self.assertLessEqual(error.max(), 2.0 * sphere.max_edge_length)

    def test_sign_consistency(self):
        self._check_sign_consistency(2000)

    @tag('slow')
    def test_sign_consistency_full(self):
        self._check_sign_consistency(100000)

    def _check_sign_consistency(self, count):
        mesh = bumpy_sphere(3)
        points = np.random.default_rng(6).uniform(-1.0, 1.0, (count, 3))
        values = MeshSdf(mesh)(points)
        parity_inside = ray_parity_inside(mesh, points)
        disagree = (values < 0) != parity_inside
        self.assertGreaterEqual(1.0 - disagree.mean(), 0.999)
        self.assertTrue(np.all(np.abs(values[disagree]) <= 1e-6))


class GradientTests(SimpleTestCase):
    def test_height_oracle(self):
        gradient = sdf_gradient(lambda p: p[..., 2], np.array([0.3, -0.2, 0.5]), 1e-4)
        np.testing.assert_allclose(gradient, (0.0, 0.0, 1.0), atol=1e-12)

    def test_radial_oracle(self):
        gradient = sdf_gradient(lambda p: np.linalg.norm(p, axis=-1) - 0.5, np.array([0.6, 0.0, 0.0]), 1e-4)
        np.testing.assert_allclose(gradient, (1.0, 0.0, 0.0), atol=1e-6)

    def test_cube_face_normal(self):
        gradient = sdf_gradient(MeshSdf(box()), np.array([0.8, 0.1, 0.1]), 1e-4)
        np.testing.assert_allclose(gradient, (1.0, 0.0, 0.0), atol=1e-3)

    def test_unit_norm_away_from_surface(self):
        sphere = icosphere(3, 0.5)
        oracle = MeshSdf(sphere)
        h = 1e-4 * 2.0 / 32
        points = np.random.default_rng(7).uniform(-1.0, 1.0, (500, 3))
        points = points[oracle(points) > 2 * h]
        norms = np.linalg.norm(sdf_gradient(oracle, points, h), axis=1)
        np.testing.assert_allclose(norms, 1.0, atol=5e-2)

    def test_estimate_from_plane_samples(self):
        rng = np.random.default_rng(8)
        positions = rng.uniform(-0.1, 0.1, (40, 3))
        gradients = estimate_gradients(positions, positions[:, 2])
        np.testing.assert_allclose(gradients, np.tile([0.0, 0.0, 1.0], (40, 1)), atol=1e-9)


class VoxelSamplingTests(SimpleTestCase):
    def setUp(self):
        self.grid = VoxelGrid(32)

    def test_plane_samples(self):
        voxel = self.grid.ravel((16, 16, 16))
        samples = sample_voxel_points(plane_slab(), self.grid, voxel, 24, seed=3)
        self.assertEqual(len(samples), 24)
        np.testing.assert_allclose(samples.sdf, samples.positions[:, 2], atol=1e-9)

    def test_samples_within_ball(self):
        sphere = icosphere(3, 0.5)
        grid = build_grid(sphere, 16)
        radius = 1.5 * grid.cell_half_diagonal
        for voxel in grid.valid[::25]:
            samples = sample_voxel_points(sphere, grid, voxel, 24, seed=1)
            offsets = np.linalg.norm(samples.positions - grid.cell_center(voxel), axis=1)
            self.assertTrue(np.all(offsets <= radius + 1e-12))
            np.testing.assert_allclose(
                samples.sdf, np.linalg.norm(samples.positions, axis=1) - 0.5, atol=2 * sphere.max_edge_length,
            )

    def test_deterministic_per_voxel(self):
        voxel = self.grid.ravel((16, 16, 15))
        first = sample_voxel_points(plane_slab(), self.grid, voxel, 24, seed=9)
        second = sample_voxel_points(plane_slab(), self.grid, voxel, 24, seed=9)
        np.testing.assert_array_equal(first.positions, second.positions)

    def test_empty_voxel(self):
        with self.assertRaises(NoSurfaceInVoxel):
            sample_voxel_points(plane_slab(), self.grid, self.grid.ravel((0, 0, 0)), 24, seed=0)


class SampleSetTests(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)
        self.sphere = icosphere(3, 0.5)

    def tearDown(self):
        self.tmp.cleanup()

    def test_every_voxel_has_per_voxel_samples(self):
        samples = build_sample_set(self.sphere, VoxelGrid(16), 24, seed=0)
        _, _, counts = samples.group_bounds
        self.assertTrue(np.all(counts == 24))
        np.testing.assert_array_equal(samples.cells, build_grid(self.sphere, 16).valid)

    def test_same_seed_same_bytes(self):
        first = build_sample_set(self.sphere, VoxelGrid(8), 24, seed=5)
        second = build_sample_set(self.sphere, VoxelGrid(8), 24, seed=5)
        self.assertEqual(sample_set_bytes(first), sample_set_bytes(second))

    def test_file_round_trip(self):
        samples = build_sample_set(self.sphere, VoxelGrid(8), 8, seed=2)
        path = self.dir / 'sphere.cfsm'
        save_sample_set(samples, path)
        loaded = load_sample_set(path)
        np.testing.assert_array_equal(loaded.voxels, samples.voxels)
        np.testing.assert_allclose(loaded.positions, samples.positions, rtol=1e-6, atol=1e-7)
        self.assertEqual(loaded.resolution, 8)

    def test_truncated_file(self):
        samples = build_sample_set(self.sphere, VoxelGrid(8), 8, seed=2)
        path = self.dir / 'short.cfsm'
        path.write_bytes(sample_set_bytes(samples)[:-3])
        with self.assertRaises(SampleFormatError):
            load_sample_set(path)

    def test_unknown_version(self):
        samples = build_sample_set(self.sphere, VoxelGrid(8), 8, seed=2)
        data = bytearray(sample_set_bytes(samples))
        data[4:8] = (2).to_bytes(4, 'little')
        path = self.dir / 'v2.cfsm'
        path.write_bytes(bytes(data))
        with self.assertRaises(SampleFormatError):
            load_sample_set(path)
        self.assertEqual(HEADER.size, 44)
