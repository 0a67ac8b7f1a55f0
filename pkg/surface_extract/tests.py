import numpy as np
from django.test import SimpleTestCase, tag

from coord_field.field import CoordinateField
from coord_field.grid import VoxelGrid
from geom_core.primitives import box, icosphere, plane_slab
from neural_sdf.mlp import MlpConfig, init_params, mlp_forward
from trainer.checkpoint import Checkpoint
from trainer.config import TrainConfig
from trainer.training import prepare_shape, train

from .exceptions import EmptySet
from .field_sdf import FieldSdf, blended_sdf
from .marching import marching_cubes
from .metrics import EvalReport, chamfer_l2, evaluate, evaluate_meshes
from .serializers import EvalReportSerializer


def sphere_sdf(points):
    return np.linalg.norm(points, axis=1) - 0.5


def radial_error(mesh):
    return float(np.abs(np.linalg.norm(mesh.vertices, axis=1) - 0.5).max())


def distance_field(latent_size=3):
    """Decoder returning the first local coordinate, shifted by 0.05."""
    config = MlpConfig((3 + latent_size, 4, 1), quadratic_layers=0)
    params = init_params(config).astype(np.float64)
    params.layers[0].A[:] = 0.0
    params.layers[0].A[0, 0] = 1.0
    params.layers[0].b[:] = [2.0, 0.0, 0.0, 0.0]
    params.layers[1].A[:] = [[1.0, 0.0, 0.0, 0.0]]
    params.layers[1].b[:] = [-1.95]
    return Checkpoint(params)


class BlendedSdfTests(SimpleTestCase):
    def setUp(self):
        self.grid = VoxelGrid(4, valid=[21, 22])
        self.field = CoordinateField.identity(self.grid, latent_size=3, seed=0)
        self.field.quaternions[1] = [0.0, 0.0, 0.0, 1.0]
        self.checkpoint = distance_field()

    def test_valid_voxel_uses_its_frame(self):
        center = self.grid.cell_center(22)
        point = center + [0.1, 0.05, -0.02]
        expected = mlp_forward(self.checkpoint.params, self.field.to_local([1], point[None])[0], self.field.latents[1])
        self.assertEqual(blended_sdf(self.field, self.checkpoint, point), expected)
        # 180 degrees about z flips the first local axis
        self.assertAlmostEqual(expected, -0.1 + 0.05, places=12)

    def test_invalid_voxel_uses_nearest_ring_neighbour(self):
        point = self.grid.cell_center(20) + [0.0, 0.2, 0.0]
        rows = FieldSdf(self.field, self.checkpoint.params).owner_rows(point[None])
        self.assertEqual(rows[0], 0)

    def test_far_voxel_gets_sentinel(self):
        self.assertEqual(blended_sdf(self.field, self.checkpoint, [0.9, 0.9, 0.9]), self.grid.cell_size)
        self.assertEqual(blended_sdf(self.field, self.checkpoint, [3.0, 0.0, 0.0]), self.grid.cell_size)

    def test_batch_matches_single(self):
        points = np.random.default_rng(0).uniform(-1, 1, (50, 3))
        batch = blended_sdf(self.field, self.checkpoint, points)
        singles = [blended_sdf(self.field, self.checkpoint, point) for point in points]
        np.testing.assert_allclose(batch, singles, atol=1e-12)


class MarchingCubesTests(SimpleTestCase):
    def test_positive_field_is_empty(self):
        mesh = marching_cubes(lambda points: np.ones(len(points)), 8)
        self.assertTrue(mesh.is_empty)

    def test_sphere(self):
        mesh = marching_cubes(sphere_sdf, 64)
        self.assertTrue(mesh.is_watertight)
        self.assertLess(radial_error(mesh), 2 * (2.0 / 64))
        self.assertGreater(np.einsum('ij,ij->', mesh.face_normals, mesh.corners.mean(axis=1)), 0)

    def test_plane_area(self):
        mesh = marching_cubes(lambda points: points[:, 2], 32)
        self.assertAlmostEqual(mesh.area, 4.0, delta=0.08)

    def test_offset_plane_area(self):
        mesh = marching_cubes(lambda points: points[:, 2] - 0.013, 32)
        self.assertAlmostEqual(mesh.area, 4.0, delta=0.08)
        np.testing.assert_allclose(mesh.vertices[:, 2], 0.013, atol=1e-12)

    def test_resolution_check(self):
        with self.assertRaises(ValueError):
            marching_cubes(sphere_sdf, 4)

    @tag('slow')
    def test_refinement_shrinks_error(self):
        coarse = radial_error(marching_cubes(sphere_sdf, 64))
        fine = radial_error(marching_cubes(sphere_sdf, 128))
        self.assertLessEqual(fine, 0.55 * coarse)


class ChamferTests(SimpleTestCase):
    def test_identical_sets(self):
        points = np.random.default_rng(0).random((100, 3))
        self.assertEqual(chamfer_l2(points, points), 0.0)

    def test_single_points(self):
        self.assertEqual(chamfer_l2([[0.0, 0.0, 0.0]], [[1.0, 0.0, 0.0]]), 2.0)

    def test_matches_exhaustive_scan(self):
        rng = np.random.default_rng(1)
        a, b = rng.random((500, 3)), rng.random((450, 3))
        squared = ((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=2)
        expected = squared.min(axis=1).mean() + squared.min(axis=0).mean()
        self.assertAlmostEqual(chamfer_l2(a, b), expected, delta=1e-12)

    def test_symmetry_and_scale(self):
        rng = np.random.default_rng(2)
        a, b = rng.random((200, 3)), rng.random((300, 3))
        self.assertEqual(chamfer_l2(a, b), chamfer_l2(b, a))
        self.assertAlmostEqual(chamfer_l2(3 * a, 3 * b), 9 * chamfer_l2(a, b), delta=1e-12)

    def test_empty(self):
        with self.assertRaises(EmptySet):
            chamfer_l2(np.zeros((0, 3)), [[0.0, 0.0, 0.0]])


class EvaluateTests(SimpleTestCase):
    def test_self_comparison(self):
        mesh = icosphere(3, radius=0.5)
        report = evaluate_meshes(mesh, mesh, n_points=2000, seed=4)
        self.assertLess(report.chamfer, 1e-4)
        self.assertEqual(report.points, 2000)

    def test_empty_extraction_reported(self):
        grid = VoxelGrid(8, valid=[0])
        field = CoordinateField.identity(grid, latent_size=3)
        checkpoint = distance_field()
        checkpoint.params.layers[1].b[:] = 10.0
        report = evaluate(field, checkpoint, box(), mc_resolution=8, n_points=100)
        self.assertFalse(report.ok)
        self.assertIn('EmptySet', report.error)
        self.assertIsNone(report.chamfer)

    def test_serializer(self):
        data = EvalReportSerializer(EvalReport(chamfer=2e-4, points=10, reference_points=10, resolution=64)).data
        self.assertAlmostEqual(data['chamfer_x1e4'], 2.0)
        self.assertIsNone(data['error'])


@tag('slow')
class TrainedPlaneTests(SimpleTestCase):
    """Plane z = 0.3 fitted on an 8^3 grid."""

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        data = prepare_shape(plane_slab(height=0.3), 8, 24, latent_size=4)
        cfg = TrainConfig(
            shapes_per_batch=1, voxels_per_shape=64, points_per_voxel=24, iterations=2000, halving_period=400,
            lr_mlp=2e-3, lr_frames=4e-3, lr_latents=4e-3, latent_size=4, hidden=32, depth=3, quadratic_layers=1,
        )
        result = train([data], cfg)
        cls.checkpoint, cls.field = result.checkpoint, result.fields[0]
        cls.cell = cls.field.grid.cell_size

    def test_values_on_plane_are_small(self):
        rng = np.random.default_rng(0)
        points = np.column_stack([rng.uniform(-0.95, 0.95, (500, 2)), np.full(500, 0.3)])
        values = blended_sdf(self.field, self.checkpoint, points)
        self.assertLess(np.abs(values).max(), 1e-2)

    def test_consistent_across_cell_faces(self):
        rng = np.random.default_rng(1)
        step = 1e-7
        jumps = []
        for axis in (0, 1):
            # 500 points on faces shared by neighbouring cells of the plane layer
            points = np.empty((500, 3))
            points[:, axis] = -1.0 + self.cell * rng.integers(1, 8, 500)
            points[:, 1 - axis] = rng.uniform(-0.99, 0.99, 500)
            points[:, 2] = rng.uniform(0.26, 0.49, 500)
            offset = np.zeros(3)
            offset[axis] = step
            below = blended_sdf(self.field, self.checkpoint, points - offset)
            above = blended_sdf(self.field, self.checkpoint, points + offset)
            self.assertTrue(np.all(FieldSdf(self.field, self.checkpoint.params).owner_rows(points - offset) >= 0))
            jumps.append(np.abs(above - below))
        self.assertEqual(sum(len(jump) for jump in jumps), 1000)
        self.assertLess(max(jump.max() for jump in jumps), 0.1 * self.cell)
