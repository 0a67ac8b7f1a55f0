import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase, tag

from geom_core.exceptions import EmptyMesh
from geom_core.mesh import TriangleMesh
from geom_core.primitives import icosphere, plane_slab, single_triangle
from geom_core.quaternions import axis_angle_to_quaternion, quaternion_to_rotation, random_quaternion, rotation_jacobian
from sdf_oracle.sampling import SampleSet

from .exceptions import DegenerateCell, FieldFormatError
from .field import CoordinateField, CoordinateFrame, batch_world_to_local, local_to_world, world_to_local
from .frames import identity_frames, init_frames
from .grid import VoxelGrid, build_grid, triangle_box_overlap, voxel_of
from .storage import field_bytes, load_field, save_field


def exhaustive_valid_cells(mesh, grid):
    """Every (cell, triangle) pair through the separating-axis test."""
    cells = np.arange(grid.cell_count)
    centers = grid.cell_center(cells)
    hit = np.zeros(len(cells), dtype=bool)
    for corners in mesh.corners:
        hit |= triangle_box_overlap(np.broadcast_to(corners, (len(cells), 3, 3)), centers, 0.5 * grid.cell_sizes)
    return cells[hit]


def ball_samples(grid, cell, oracle, count=3000, seed=0):
    """Uniform samples in the 1.5x ball of one cell, as a single-voxel SampleSet."""
    rng = np.random.default_rng(seed)
    directions = rng.standard_normal((count, 3))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    radius = 1.5 * grid.cell_half_diagonal * rng.random(count) ** (1.0 / 3.0)
    positions = grid.cell_center(cell) + directions * radius[:, None]
    return SampleSet(grid.resolution, grid.bounds, np.full(count, cell), positions, oracle(positions))


class VoxelGridTests(SimpleTestCase):
    def setUp(self):
        self.grid = VoxelGrid(32)

    def test_voxel_of(self):
        self.assertEqual(self.grid.cell_ijk(voxel_of(self.grid, (-1.0, -1.0, -1.0))), (0, 0, 0))
        self.assertEqual(self.grid.cell_ijk(voxel_of(self.grid, (0.0, 0.0, 0.0))), (16, 16, 16))
        self.assertEqual(self.grid.cell_ijk(voxel_of(self.grid, (1.0, 1.0, 1.0))), (31, 31, 31))
        self.assertIsNone(voxel_of(self.grid, (1.5, 0.0, 0.0)))

    def test_invalid_resolution(self):
        with self.assertRaises(ValueError):
            VoxelGrid(1)

    def test_plane_layers(self):
        grid = build_grid(plane_slab(), 32)
        self.assertIn(len(grid.valid), (32 * 32, 2 * 32 * 32))

    def test_tiny_triangle(self):
        mesh = single_triangle((0.01, 0.01, 0.01), (0.02, 0.01, 0.01), (0.01, 0.02, 0.01))
        grid = build_grid(mesh, 32)
        self.assertEqual(len(grid.valid), 1)

    def test_matches_exhaustive_small(self):
        sphere = icosphere(2, 0.5)
        grid = build_grid(sphere, 8)
        np.testing.assert_array_equal(grid.valid, exhaustive_valid_cells(sphere, grid))

    @tag('slow')
    def test_matches_exhaustive_sphere(self):
        sphere = icosphere(3, 0.5)
        grid = build_grid(sphere, 32)
        np.testing.assert_array_equal(grid.valid, exhaustive_valid_cells(sphere, grid))

    def test_empty_mesh(self):
        with self.assertRaises(EmptyMesh):
            build_grid(TriangleMesh(np.zeros((0, 3)), np.zeros((0, 3))), 8)


class TransformTests(SimpleTestCase):
    def test_identity_frame(self):
        frame = CoordinateFrame.identity()
        np.testing.assert_array_equal(world_to_local(frame, (1.0, 2.0, 3.0)), (1.0, 2.0, 3.0))

    def test_translated_frame(self):
        frame = CoordinateFrame.identity((1.0, 0.0, 0.0))
        np.testing.assert_array_equal(world_to_local(frame, (1.0, 2.0, 3.0)), (0.0, 2.0, 3.0))

    def test_half_turn(self):
        frame = CoordinateFrame(axis_angle_to_quaternion((0, 0, 1), np.pi), np.zeros(3))
        np.testing.assert_allclose(world_to_local(frame, (1.0, 2.0, 3.0)), (-1.0, -2.0, 3.0), atol=1e-15)

    def test_isometry_and_round_trip(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            frame = CoordinateFrame(random_quaternion(rng), rng.normal(size=3))
            p, q = rng.normal(size=(2, 3))
            self.assertAlmostEqual(
                np.linalg.norm(world_to_local(frame, p) - world_to_local(frame, q)), np.linalg.norm(p - q), delta=1e-12,
            )
            np.testing.assert_allclose(local_to_world(frame, world_to_local(frame, p)), p, atol=1e-12)

    def test_gradient_through_frame(self):
        rng = np.random.default_rng(4)
        q = random_quaternion(rng)
        origin = rng.normal(size=3)
        point = rng.normal(size=3)
        weights = rng.normal(size=3)

        def objective(q, origin):
            return weights @ batch_world_to_local(q[None], origin[None], point[None])[0]

        rotation = quaternion_to_rotation(q)
        diff = point - origin
        grad_rotation = diff[:, None] * weights[None, :]
        grad_q = np.einsum('cij,ij->c', rotation_jacobian(q), grad_rotation)
        grad_o = -rotation @ weights
        h = 1e-6
        for i in range(4):
            step = np.zeros(4)
            step[i] = h
            numeric = (objective(q + step, origin) - objective(q - step, origin)) / (2 * h)
            self.assertLess(abs(numeric - grad_q[i]), 1e-4 * max(abs(numeric), 1e-4))
        for i in range(3):
            step = np.zeros(3)
            step[i] = h
            numeric = (objective(q, origin + step) - objective(q, origin - step)) / (2 * h)
            self.assertLess(abs(numeric - grad_o[i]), 1e-4 * max(abs(numeric), 1e-4))


class InitFramesTests(SimpleTestCase):
    def setUp(self):
        # Odd resolution puts a cell center on the origin
        self.grid = VoxelGrid(3, (-0.15, -0.15, -0.15, 0.15, 0.15, 0.15), [13])

    def init(self, oracle):
        field = CoordinateField.identity(self.grid, latent_size=4, seed=0)
        return init_frames(field, ball_samples(self.grid, 13, oracle), oracle)

    def test_horizontal_plane(self):
        field = self.init(lambda p: p[:, 2] - 0.03)
        frame = field.frame(13)
        np.testing.assert_allclose(frame.normal, (0.0, 0.0, 1.0), atol=1e-6)
        np.testing.assert_allclose(frame.origin, self.grid.cell_center(13))

    def test_tilted_plane(self):
        normal = np.ones(3) / np.sqrt(3.0)
        field = self.init(lambda p: p @ normal)
        np.testing.assert_allclose(field.frame(13).normal, normal, atol=1e-3)

    def test_wedge_bisector(self):
        def wedge(p):
            x, z = p[:, 0], p[:, 2]
            return np.where(z > np.abs(x), np.hypot(x, z), np.maximum((z - x) / np.sqrt(2), (z + x) / np.sqrt(2)))

        normal = self.init(wedge).frame(13).normal
        angle = np.degrees(np.arccos(np.clip(normal @ (0.0, 0.0, 1.0), -1.0, 1.0)))
        self.assertLess(angle, 5.0)

    def test_frames_orthonormal(self):
        frame = self.init(lambda p: np.linalg.norm(p - 0.3, axis=1) - 0.4).frame(13)
        rotation = frame.matrix
        np.testing.assert_allclose(rotation.T @ rotation, np.eye(3), atol=1e-7)
        self.assertAlmostEqual(np.linalg.norm(frame.rotation), 1.0, delta=1e-9)

    def test_degenerate_cell(self):
        field = CoordinateField.identity(self.grid, latent_size=2)
        samples = ball_samples(self.grid, 13, lambda p: np.zeros(len(p)))
        result = init_frames(field, samples, lambda p: np.zeros(len(p)))
        np.testing.assert_array_equal(result.degenerate, [13])
        np.testing.assert_array_equal(result.quaternions[0], [1.0, 0.0, 0.0, 0.0])
        with self.assertRaises(DegenerateCell):
            init_frames(field, samples, lambda p: np.zeros(len(p)), strict=True)

    def test_without_oracle(self):
        field = CoordinateField.identity(self.grid, latent_size=2)
        samples = ball_samples(self.grid, 13, lambda p: p[:, 1])
        result = init_frames(field, samples)
        np.testing.assert_allclose(result.frame(13).normal, (0.0, 1.0, 0.0), atol=1e-6)

    def test_latents_kept(self):
        field = CoordinateField.identity(self.grid, latent_size=200, seed=3)
        result = init_frames(field, ball_samples(self.grid, 13, lambda p: p[:, 0]), lambda p: p[:, 0])
        np.testing.assert_array_equal(result.latents, field.latents)
        self.assertLess(abs(field.latents.std() - 0.01), 0.01)
        np.testing.assert_array_equal(identity_frames(result).quaternions, [[1.0, 0.0, 0.0, 0.0]])


class FieldFileTests(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)
        grid = VoxelGrid(8, valid=[3, 17, 200])
        rng = np.random.default_rng(5)
        self.field = CoordinateField(grid, random_quaternion(rng, 3), rng.normal(size=(3, 3)), rng.normal(size=(3, 6)))

    def tearDown(self):
        self.tmp.cleanup()

    def test_round_trip(self):
        path = self.dir / 'shape.cffd'
        save_field(self.field, path)
        loaded = load_field(path)
        np.testing.assert_array_equal(loaded.cells, [3, 17, 200])
        np.testing.assert_allclose(loaded.latents, self.field.latents, rtol=1e-6)
        np.testing.assert_allclose(np.linalg.norm(loaded.quaternions, axis=1), 1.0, atol=1e-12)

    def test_bad_magic(self):
        path = self.dir / 'bad.cffd'
        path.write_bytes(b'XXXX' + field_bytes(self.field)[4:])
        with self.assertRaises(FieldFormatError):
            load_field(path)
