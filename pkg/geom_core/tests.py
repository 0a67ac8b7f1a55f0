import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from .exceptions import EmptyMesh, IoError, NonUnitQuaternion, ParseError, ZeroQuaternion
from .mesh import TriangleMesh, mesh_load, mesh_normalize, mesh_sample_surface, mesh_save
from .patches import (
    QuadraticPatch, SharpEdgePatch, patch_sample_surface, patch_sdf_approx,
    patch_sdf_exact, sharp_edge_sdf_approx,
)
from .primitives import box, icosphere, single_triangle
from .quaternions import (
    axis_angle_to_quaternion, normalize_quaternion, quaternion_to_rotation, random_quaternion, rotation_jacobian,
    rotation_to_quaternion,
)
from .transforms import RigidTransform


class PatchApproxTests(SimpleTestCase):
    def test_plane_is_height(self):
        self.assertEqual(patch_sdf_approx(QuadraticPatch(), (0.3, -0.1, 0.7)), 0.7)

    def test_direct_evaluation(self):
        patch = QuadraticPatch(a=1.0, c=0.5)
        self.assertAlmostEqual(patch_sdf_approx(patch, (0.1, 0.05, 0.2)), 0.194375, places=14)

    def test_surface_point_is_zero(self):
        patch = QuadraticPatch(a=1.0, c=0.5)
        u, v = 0.1, 0.05
        point = (u, v, 0.5 * (u * u + 0.5 * v * v))
        self.assertAlmostEqual(patch_sdf_approx(patch, point), 0.0, places=15)

    def test_vectorized_points(self):
        patch = QuadraticPatch(a=1.0)
        values = patch_sdf_approx(patch, np.array([[0.0, 0.0, 1.0], [1.0, 0.0, 0.5]]))
        np.testing.assert_allclose(values, [1.0, 0.0])

    def test_invalid_radius(self):
        with self.assertRaises(ValueError):
            QuadraticPatch(radius=0.0)


class SharpEdgeApproxTests(SimpleTestCase):
    def test_plane(self):
        self.assertAlmostEqual(sharp_edge_sdf_approx(SharpEdgePatch(), (0.1, 0.0, 0.3)), 0.3)

    def test_wedge_branches(self):
        patch = SharpEdgePatch(e1=1.0, e2=-1.0)
        self.assertAlmostEqual(sharp_edge_sdf_approx(patch, (0.1, 0.0, 0.0)), 0.1, places=15)
        self.assertAlmostEqual(sharp_edge_sdf_approx(patch, (-0.1, 0.0, 0.0)), 0.1, places=15)


class PatchExactTests(SimpleTestCase):
    def test_plane(self):
        self.assertAlmostEqual(patch_sdf_exact(QuadraticPatch(), (0.2, 0.2, 0.4), 1e-12), 0.4, places=12)

    def test_symmetric_point(self):
        patch = QuadraticPatch(a=1.0, c=1.0)
        self.assertAlmostEqual(patch_sdf_exact(patch, (0.0, 0.0, 0.1), 1e-12), 0.1, places=12)

    def test_matches_dense_grid_search(self):
        patch = QuadraticPatch(a=1.0, c=0.5)
        point = np.array([0.1, 0.05, 0.2])
        # Closest point lies near (0.12, 0.055)
        u, v = np.meshgrid(np.arange(0.05, 0.2, 1e-4), np.arange(0.0, 0.1, 1e-4), indexing='ij')
        surface = np.stack([u, v, patch.height(u, v)], axis=-1)
        brute = np.sqrt(((surface - point) ** 2).sum(axis=-1).min())
        exact = patch_sdf_exact(patch, point, 1e-12)
        self.assertAlmostEqual(exact, brute, delta=1e-6)
        self.assertLess(abs(exact - patch_sdf_approx(patch, point)), 0.25 ** 3)

    def test_plane_exactness(self):
        rng = np.random.default_rng(3)
        for point in rng.uniform(-0.45, 0.45, (50, 3)):
            self.assertAlmostEqual(
                patch_sdf_exact(QuadraticPatch(), point), patch_sdf_approx(QuadraticPatch(), point), delta=1e-12,
            )

    def test_sign_along_normal(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            a, b, c = rng.uniform(-2.0, 2.0, 3)
            patch = QuadraticPatch(a, b, c)
            u, v = rng.uniform(-0.2, 0.2, 2)
            fu, fv = a * u + b * v, b * u + c * v
            normal = np.array([-fu, -fv, 1.0]) / np.sqrt(1.0 + fu * fu + fv * fv)
            surface = np.array([u, v, patch.height(u, v)])
            delta = 0.1 / max(abs(a), abs(c), 1.0)
            self.assertGreater(patch_sdf_exact(patch, surface + delta * normal), 0.0)
            self.assertLess(patch_sdf_exact(patch, surface - delta * normal), 0.0)

    def test_rigid_invariance(self):
        rng = np.random.default_rng(11)
        pose = RigidTransform.random(rng, translation_scale=0.5)
        base = QuadraticPatch(a=1.5, b=-0.4, c=0.7)
        posed = QuadraticPatch(a=1.5, b=-0.4, c=0.7, pose=pose)
        for point in rng.uniform(-0.3, 0.3, (10, 3)):
            self.assertAlmostEqual(
                patch_sdf_exact(posed, pose.apply(point)), patch_sdf_exact(base, point), delta=1e-9,
            )

    def test_point_beyond_rim(self):
        # Closest point is on the disc boundary at (1, 0, 0)
        self.assertAlmostEqual(patch_sdf_exact(QuadraticPatch(), (2.0, 0.0, 0.0)), 1.0, places=9)

    def test_sharp_edge_ridge(self):
        # Above the ridge of a 90 degree wedge the closest point is on the crease
        patch = SharpEdgePatch(e1=1.0, e2=-1.0)
        self.assertAlmostEqual(patch_sdf_exact(patch, (0.0, 0.0, 0.2)), 0.2, places=9)
        self.assertAlmostEqual(patch_sdf_exact(patch, (0.0, 0.0, -0.2)), -0.2 / np.sqrt(2.0), places=9)


class PatchSamplingTests(SimpleTestCase):
    def test_plane_points(self):
        points = patch_sample_surface(QuadraticPatch(), 4, seed=7)
        self.assertEqual(points.shape, (4, 3))
        np.testing.assert_array_equal(points[:, 2], 0.0)

    def test_deterministic(self):
        patch = SharpEdgePatch(a1=1.0, e2=0.5, c1=-0.3)
        np.testing.assert_array_equal(patch_sample_surface(patch, 50, 3), patch_sample_surface(patch, 50, 3))

    def test_points_on_parabola(self):
        points = patch_sample_surface(QuadraticPatch(a=1.0), 1000, seed=1)
        np.testing.assert_allclose(points[:, 2], 0.5 * points[:, 0] ** 2, atol=1e-12, rtol=0)
        self.assertTrue(np.all(np.hypot(points[:, 0], points[:, 1]) <= 1.0))


class QuaternionTests(SimpleTestCase):
    def test_identity(self):
        np.testing.assert_array_equal(quaternion_to_rotation([1.0, 0.0, 0.0, 0.0]), np.eye(3))

    def test_quarter_turn_about_z(self):
        rotation = quaternion_to_rotation([np.cos(np.pi / 4), 0.0, 0.0, np.sin(np.pi / 4)])
        np.testing.assert_allclose(rotation @ [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], atol=1e-15)

    def test_random_orthonormal(self):
        rng = np.random.default_rng(0)
        for q in random_quaternion(rng, 50):
            rotation = quaternion_to_rotation(q * 1.0005)
            np.testing.assert_allclose(rotation.T @ rotation, np.eye(3), atol=1e-12)
            self.assertAlmostEqual(np.linalg.det(rotation), 1.0, places=12)

    def test_zero_quaternion(self):
        with self.assertRaises(ZeroQuaternion):
            quaternion_to_rotation([0.0, 0.0, 0.0, 0.0])

    def test_norm_must_be_near_one(self):
        q = np.array([1.0, 0.0, 0.0, 0.0])
        quaternion_to_rotation(q * (1.0 + 0.9e-3))
        for scale in (1.0 + 1.1e-3, 1.0 - 1.1e-3, 0.9, 2.0):
            with self.assertRaises(NonUnitQuaternion):
                quaternion_to_rotation(q * scale)
        batch = random_quaternion(np.random.default_rng(3), 5)
        batch[2] *= 1.5
        with self.assertRaises(ZeroQuaternion) as caught:
            quaternion_to_rotation(batch)
        self.assertAlmostEqual(caught.exception.context['norm'], 1.5, places=12)

    def test_rotation_round_trip(self):
        rng = np.random.default_rng(1)
        for q in random_quaternion(rng, 50):
            recovered = rotation_to_quaternion(quaternion_to_rotation(q))
            expected = q if q[0] >= 0 else -q
            np.testing.assert_allclose(recovered, expected, atol=1e-12)

    def test_jacobian_matches_finite_differences(self):
        rng = np.random.default_rng(2)
        q = random_quaternion(rng) * 1.3
        jacobian = rotation_jacobian(q)
        h = 1e-6
        for component in range(4):
            step = np.zeros(4)
            step[component] = h
            numeric = (quaternion_to_rotation(normalize_quaternion(q + step))
                       - quaternion_to_rotation(normalize_quaternion(q - step))) / (2 * h)
            np.testing.assert_allclose(jacobian[component], numeric, atol=1e-8)


class RigidTransformTests(SimpleTestCase):
    def test_round_trip(self):
        rng = np.random.default_rng(2)
        pose = RigidTransform.random(rng, translation_scale=1.0)
        points = rng.normal(size=(20, 3))
        np.testing.assert_allclose(pose.inverse_apply(pose.apply(points)), points, atol=1e-12)
        np.testing.assert_allclose(pose.inverse().apply(pose.apply(points)), points, atol=1e-12)

    def test_compose(self):
        rng = np.random.default_rng(4)
        first = RigidTransform.random(rng, 1.0)
        second = RigidTransform.random(rng, 1.0)
        points = rng.normal(size=(5, 3))
        np.testing.assert_allclose(
            second.compose(first).apply(points), second.apply(first.apply(points)), atol=1e-12,
        )

    def test_rotation_helpers_live_in_geom_core(self):
        self.assertEqual(RigidTransform().matrix.shape, (3, 3))
        self.assertEqual(quaternion_to_rotation.__module__, 'geom_core.quaternions')
        self.assertEqual(RigidTransform.__module__, 'geom_core.transforms')

    def test_quarter_turn(self):
        pose = RigidTransform(axis_angle_to_quaternion((0, 0, 1), np.pi / 2))
        np.testing.assert_allclose(pose.apply((1.0, 0.0, 0.0)), (0.0, 1.0, 0.0), atol=1e-15)


class MeshIoTests(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def test_unit_cube_counts(self):
        path = self.dir / 'cube.obj'
        mesh_save(box((0, 0, 0), (1, 1, 1)), path)
        mesh = mesh_load(path)
        self.assertEqual((len(mesh.vertices), len(mesh.triangles)), (8, 12))
        self.assertTrue(mesh.is_watertight)

    def test_zero_index_is_parse_error(self):
        path = self.dir / 'bad.obj'
        path.write_text('v 0 0 0\nv 1 0 0\nv 0 1 0\nf 0 1 2\n')
        with self.assertRaises(ParseError) as caught:
            mesh_load(path)
        self.assertEqual(caught.exception.line, 4)

    def test_index_past_end(self):
        path = self.dir / 'bad.obj'
        path.write_text('v 0 0 0\nf 1 2 3\nv 1 0 0\n')
        with self.assertRaises(ParseError) as caught:
            mesh_load(path)
        self.assertEqual(caught.exception.line, 2)

    def test_missing_file(self):
        with self.assertRaises(IoError):
            mesh_load(self.dir / 'missing.obj')

    def test_round_trip(self):
        rng = np.random.default_rng(9)
        mesh = TriangleMesh(rng.normal(size=(60, 3)), rng.permutation(60).reshape(20, 3))
        path = self.dir / 'random.obj'
        mesh_save(mesh, path)
        loaded = mesh_load(path)
        np.testing.assert_array_equal(loaded.triangles, mesh.triangles)
        np.testing.assert_allclose(loaded.vertices, mesh.vertices, rtol=1e-6)

    def test_cleanup_and_skipped_lines(self):
        path = self.dir / 'dup.obj'
        path.write_text(
            'o shape\n'
            'v 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 0 0\nv 2 0 0\n'
            'vn 0 0 1\n'
            'f 1 2 3\nf 4 2 5\n'
        )
        mesh = mesh_load(path)
        self.assertEqual(mesh.skipped_lines, 2)
        # The duplicate vertex merges and the collinear face is dropped
        self.assertEqual(len(mesh.vertices), 4)
        self.assertEqual(len(mesh.triangles), 1)


class MeshNormalizeTests(SimpleTestCase):
    def test_cube(self):
        mesh, scale, offset = mesh_normalize(box((0, 0, 0), (2, 2, 2)))
        lower, upper = mesh.bounds
        np.testing.assert_allclose(lower, -0.95)
        np.testing.assert_allclose(upper, 0.95)
        self.assertAlmostEqual(scale, 0.95)
        np.testing.assert_allclose(offset, -0.95)

    def test_random_mesh(self):
        rng = np.random.default_rng(1)
        mesh = TriangleMesh(rng.normal(size=(12, 3)) * 4 + 3, [[0, 1, 2], [3, 4, 5], [6, 7, 8], [9, 10, 11]])
        normalized, _, _ = mesh_normalize(mesh)
        self.assertAlmostEqual(np.abs(normalized.vertices).max(), 0.95, delta=1e-9)

    def test_already_normalized(self):
        mesh, _, _ = mesh_normalize(box((-0.95,) * 3, (0.95,) * 3))
        again, scale, offset = mesh_normalize(mesh)
        self.assertAlmostEqual(scale, 1.0)
        np.testing.assert_allclose(offset, 0.0, atol=1e-15)
        np.testing.assert_allclose(again.vertices, mesh.vertices)

    def test_empty(self):
        with self.assertRaises(EmptyMesh):
            mesh_normalize(TriangleMesh(np.zeros((0, 3)), np.zeros((0, 3))))


class MeshSamplingTests(SimpleTestCase):
    def test_points_in_triangle_plane(self):
        points = mesh_sample_surface(single_triangle(), 100, seed=0)
        np.testing.assert_allclose(points[:, 2], 0.0, atol=1e-12)
        self.assertTrue(np.all(points[:, :2] >= -1e-12))
        self.assertTrue(np.all(points[:, 0] + points[:, 1] <= 1.0 + 1e-12))

    def test_area_proportional(self):
        mesh = TriangleMesh(
            [[0, 0, 0], [3, 0, 0], [0, 3, 0], [10, 0, 0], [11, 0, 0], [10, 1, 0]],
            [[0, 1, 2], [3, 4, 5]],
        )
        _, faces = mesh_sample_surface(mesh, 100000, seed=2, return_faces=True)
        counts = np.bincount(faces, minlength=2)
        self.assertAlmostEqual(counts[0] / counts[1], 9.0, delta=9.0 * 0.02)

    def test_deterministic(self):
        sphere = icosphere(2, 0.5)
        np.testing.assert_array_equal(mesh_sample_surface(sphere, 64, 5), mesh_sample_surface(sphere, 64, 5))

    def test_empty(self):
        with self.assertRaises(EmptyMesh):
            mesh_sample_surface(TriangleMesh(np.zeros((0, 3)), np.zeros((0, 3))), 10, 0)


class PrimitiveTests(SimpleTestCase):
    def test_icosphere(self):
        sphere = icosphere(3, radius=0.5)
        self.assertEqual(len(sphere.triangles), 1280)
        self.assertTrue(sphere.is_watertight)
        np.testing.assert_allclose(np.linalg.norm(sphere.vertices, axis=1), 0.5)
        centroids = sphere.corners.mean(axis=1)
        self.assertTrue(np.all(np.einsum('ij,ij->i', sphere.face_normals, centroids) > 0))
