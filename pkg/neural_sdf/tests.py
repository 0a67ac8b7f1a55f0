import numpy as np
from django.test import SimpleTestCase, tag

from coord_field.field import CoordinateField, CoordinateFrame
from coord_field.grid import VoxelGrid
from geom_core.quaternions import normalize_quaternion
from sdf_oracle.sampling import SdfSample

from .exceptions import ShapeMismatch
from .gradcheck import grad_check
from .layers import linear_forward, quadratic_forward
from .mlp import (
    Layer, MlpConfig, MlpParams, backward, fit_affine_layer, fit_quadratic_layer, forward, init_params,
    loss_and_gradients, mlp_forward, parameter_count,
)
from .optim import AdamState, adam_step


def loop_linear(A, b, z):
    out = []
    for i in range(A.shape[0]):
        total = b[i]
        for j in range(A.shape[1]):
            total += A[i, j] * z[j]
        out.append(total)
    return np.array(out)


def loop_quadratic(T, A, b, z):
    out = loop_linear(A, b, z)
    for i in range(A.shape[0]):
        for j in range(len(z)):
            for k in range(len(z)):
                out[i] += z[j] * T[j, i, k] * z[k]
    return out


def loop_mlp(params, inputs):
    h = np.asarray(inputs, dtype=np.float64)
    for index, layer in enumerate(params.layers):
        A, b = layer.A.astype(np.float64), layer.b.astype(np.float64)
        if layer.T is not None:
            h = loop_quadratic(layer.T.astype(np.float64), A, b, h)
        else:
            h = loop_linear(A, b, h)
        if index < len(params.layers) - 1:
            h = np.maximum(h, 0.0)
    return h[0]


def random_params(config, seed, scale=0.3):
    rng = np.random.default_rng(seed)
    params = init_params(config, seed).astype(np.float64)
    for layer in params.layers:
        layer.b[:] = 0.1 * rng.standard_normal(layer.b.shape)
        if layer.T is not None:
            layer.T[:] = scale * rng.standard_normal(layer.T.shape)
    return params


class LayerTests(SimpleTestCase):
    def test_linear_identity(self):
        np.testing.assert_array_equal(linear_forward(np.eye(2), np.zeros(2), [3.0, -1.0]), [3.0, -1.0])

    def test_linear_bias_only(self):
        np.testing.assert_array_equal(linear_forward(np.zeros((1, 4)), [5.0], [1.0, 2.0, 3.0, 4.0]), [5.0])

    def test_linear_matches_loops(self):
        rng = np.random.default_rng(1)
        A, b, z = rng.standard_normal((5, 7)), rng.standard_normal(5), rng.standard_normal(7)
        np.testing.assert_allclose(linear_forward(A, b, z), loop_linear(A, b, z), rtol=1e-13, atol=1e-13)

    def test_linear_shape_mismatch(self):
        with self.assertRaises(ShapeMismatch):
            linear_forward(np.eye(3), np.zeros(3), [1.0, 2.0])

    def test_quadratic_zero_tensor_is_linear(self):
        rng = np.random.default_rng(2)
        A, b, z = rng.standard_normal((4, 6)), rng.standard_normal(4), rng.standard_normal((10, 6))
        np.testing.assert_array_equal(quadratic_forward(np.zeros((6, 4, 6)), A, b, z), linear_forward(A, b, z))

    def test_quadratic_hand_expansion(self):
        T = np.zeros((2, 1, 2))
        T[:, 0, :] = np.eye(2)
        self.assertEqual(quadratic_forward(T, [[1.0, 1.0]], [0.0], [1.0, 2.0])[0], 8.0)

    def test_quadratic_matches_loops(self):
        rng = np.random.default_rng(3)
        T, A = rng.standard_normal((5, 3, 5)), rng.standard_normal((3, 5))
        b, z = rng.standard_normal(3), rng.standard_normal(5)
        np.testing.assert_allclose(quadratic_forward(T, A, b, z), loop_quadratic(T, A, b, z), rtol=1e-12, atol=1e-12)

    def test_quadratic_shape_mismatch(self):
        with self.assertRaises(ShapeMismatch):
            quadratic_forward(np.zeros((3, 1, 3)), np.zeros((1, 2)), np.zeros(1), np.zeros(2))


class MlpTests(SimpleTestCase):
    def test_config_widths(self):
        config = MlpConfig.build(latent_size=125, hidden=128, depth=5, quadratic_layers=1)
        self.assertEqual(config.widths, (128, 128, 128, 128, 128, 1))
        self.assertEqual(config.latent_size, 125)
        self.assertTrue(config.is_quadratic(4))
        self.assertFalse(config.is_quadratic(3))

    def test_config_rejects_too_many_quadratic_layers(self):
        with self.assertRaises(ValueError):
            MlpConfig((5, 4, 1), quadratic_layers=3)

    def test_init_shapes(self):
        params = init_params(MlpConfig.build(latent_size=4, hidden=6, depth=3, quadratic_layers=1))
        self.assertEqual(params.layers[0].A.shape, (6, 7))
        self.assertEqual(params.layers[0].A.dtype, np.float32)
        self.assertIsNone(params.layers[1].T)
        self.assertEqual(params.layers[2].T.shape, (6, 1, 6))
        self.assertFalse(params.layers[2].T.any())

    def test_zero_params_give_zero(self):
        config = MlpConfig.build(latent_size=2, hidden=5, depth=3, quadratic_layers=1)
        params = init_params(config).astype(np.float64)
        for layer in params.layers:
            for _, array in layer.arrays():
                array[:] = 0.0
        self.assertEqual(mlp_forward(params, [0.3, -0.2, 0.9], [1.0, 2.0]), 0.0)

    def test_forward_matches_scalar_reference(self):
        config = MlpConfig.build(latent_size=3, hidden=5, depth=4, quadratic_layers=2)
        params = random_params(config, seed=4)
        rng = np.random.default_rng(5)
        for _ in range(5):
            x, z = rng.standard_normal(3), rng.standard_normal(3)
            np.testing.assert_allclose(mlp_forward(params, x, z), loop_mlp(params, np.r_[x, z]), rtol=1e-12, atol=1e-12)

    def test_linear_network_is_affine_between_kinks(self):
        config = MlpConfig.build(latent_size=2, hidden=16, depth=4, quadratic_layers=0)
        params = init_params(config, seed=6)
        rng = np.random.default_rng(7)
        tested = 0
        for _ in range(50):
            start, direction = rng.standard_normal(5), 1e-3 * rng.standard_normal(5)
            inputs = start + np.outer([0.0, 0.5, 1.0], direction)
            _, cache = forward(params, inputs)
            masks = [s > 0 for _, s in cache[:-1]]
            if not all((mask == mask[0]).all() for mask in masks):
                continue
            outputs = forward(params, inputs)[0]
            self.assertLess(abs(outputs[0] - 2 * outputs[1] + outputs[2]), 1e-9)
            tested += 1
        self.assertGreater(tested, 10)

    def test_params_validate_shapes(self):
        config = MlpConfig((4, 1), quadratic_layers=0)
        with self.assertRaises(ShapeMismatch):
            MlpParams(config, [Layer(np.zeros((1, 3)), np.zeros(1))])

    def test_parameter_count(self):
        quadratic = MlpConfig.build(latent_size=125, hidden=128, depth=5, quadratic_layers=1)
        linear = MlpConfig.build(latent_size=125, hidden=128, depth=6, quadratic_layers=0)
        self.assertEqual(parameter_count(quadratic), 4 * (128 * 128 + 128) + 128 + 1 + 128 * 128)
        self.assertLessEqual(abs(parameter_count(linear) - parameter_count(quadratic)), 128 + 1)
        self.assertEqual(
            parameter_count(quadratic) - parameter_count(MlpConfig.build(125, 128, 5, 0)), 128 * 1 * 128,
        )

    def test_quadratic_layer_represents_patch(self):
        rng = np.random.default_rng(8)
        inputs = rng.uniform(-0.5, 0.5, (200, 3))
        x, y, z = inputs.T
        targets = z - 0.5 * (x ** 2 + 0.5 * y ** 2)
        _, quadratic_residual = fit_quadratic_layer(inputs, targets)
        _, affine_residual = fit_affine_layer(inputs, targets)
        self.assertLess(quadratic_residual, 1e-10)
        self.assertGreater(affine_residual, 1e-4)


class BackwardTests(SimpleTestCase):
    def test_zero_residual_gives_zero_gradients(self):
        config = MlpConfig.build(latent_size=2, hidden=4, depth=2, quadratic_layers=1)
        params = random_params(config, seed=9)
        frame = CoordinateFrame(normalize_quaternion([0.9, 0.1, -0.2, 0.3]), np.array([0.1, 0.0, -0.1]))
        latent = np.array([0.5, -0.5])
        position = np.array([0.2, 0.3, 0.4])
        single = CoordinateField(VoxelGrid(2, valid=[0]), frame.rotation, frame.origin, latent)
        target = forward(params, np.r_[single.to_local([0], position[None])[0], latent][None])[0][0]
        grads, d_latent, d_quaternion, d_origin = backward(params, frame, latent, SdfSample(position, target, 0))
        for value in list(grads.values()) + [d_latent, d_quaternion, d_origin]:
            self.assertFalse(np.any(value))

    def test_single_linear_layer_closed_form(self):
        config = MlpConfig((5, 1), quadratic_layers=0)
        params = init_params(config, seed=10).astype(np.float64)
        latent = np.array([0.7, -0.3])
        position = np.array([0.2, -0.4, 0.6])
        sample = SdfSample(position, 5.0, 0)
        grads, _, _, _ = backward(params, CoordinateFrame.identity(), latent, sample)
        residual = mlp_forward(params, position, latent) - 5.0
        np.testing.assert_allclose(grads['layer0.A'][0], np.sign(residual) * np.r_[position, latent], atol=1e-15)
        np.testing.assert_allclose(grads['layer0.b'], [np.sign(residual)])

    def test_batch_gradients_sum_per_cell(self):
        config = MlpConfig.build(latent_size=2, hidden=4, depth=2, quadratic_layers=1)
        params = random_params(config, seed=11)
        rng = np.random.default_rng(12)
        field = CoordinateField(VoxelGrid(4, valid=[1, 2, 3]), np.tile([1.0, 0, 0, 0], (3, 1)),
                                rng.standard_normal((3, 3)), rng.standard_normal((3, 2)))
        rows = np.array([2, 0, 2, 2])
        points, targets = rng.standard_normal((4, 3)), rng.standard_normal(4)
        _, grads = loss_and_gradients(params, field, rows, points, targets)
        self.assertFalse(grads.latents[1].any())
        total = np.zeros(2)
        for index in np.flatnonzero(rows == 2):
            _, single = loss_and_gradients(params, field, rows[index:index + 1], points[index:index + 1],
                                           targets[index:index + 1])
            total += single.latents[2]
        np.testing.assert_allclose(grads.latents[2], total, atol=1e-13)

    def test_latent_size_mismatch(self):
        params = init_params(MlpConfig.build(latent_size=3, hidden=4, depth=2))
        field = CoordinateField.identity(VoxelGrid(2, valid=[0]), latent_size=2)
        with self.assertRaises(ShapeMismatch):
            loss_and_gradients(params, field, [0], [[0.0, 0.0, 0.0]], [0.0])


class GradCheckTests(SimpleTestCase):
    def test_default_config_passes(self):
        report = grad_check(MlpConfig.build(), seed=0)
        self.assertTrue(report.passed, report.describe())
        self.assertIn('layer4.T', report.groups)
        self.assertGreater(report.checked, 0)

    def test_linear_config_passes(self):
        report = grad_check(MlpConfig.build(latent_size=6, hidden=8, depth=3, quadratic_layers=0), seed=1)
        self.assertTrue(report.passed, report.describe())
        self.assertNotIn('layer2.T', report.groups)

    def test_corrupted_quadratic_backward_fails(self):
        def corrupted(params, field, rows, points, targets):
            result, grads = loss_and_gradients(params, field, rows, points, targets)
            for name in grads.params:
                if name.endswith('.T'):
                    grads.params[name] = grads.params[name] + 1.0
            return result, grads

        report = grad_check(MlpConfig.build(latent_size=4, hidden=6, depth=3, quadratic_layers=1), seed=2,
                            gradient_fn=corrupted)
        self.assertFalse(report.passed)
        self.assertGreaterEqual(report.groups['layer2.T'], 1e-4)

    def test_nothing_checked_fails(self):
        report = grad_check(MlpConfig.build(latent_size=4, hidden=6, depth=3, quadratic_layers=1), seed=3, entries=0)
        self.assertEqual(report.checked, 0)
        self.assertEqual(report.max_relative_error, 0.0)
        self.assertFalse(report.passed)
        self.assertEqual(report.unchecked, list(report.groups))
        self.assertIn('quaternions', report.describe()['unchecked'])

    def test_every_group_is_checked(self):
        report = grad_check(MlpConfig.build(latent_size=4, hidden=6, depth=3, quadratic_layers=1), seed=4)
        self.assertEqual(report.unchecked, [])
        self.assertGreaterEqual(report.checked, len(report.groups))

    @tag('slow')
    def test_random_configurations(self):
        rng = np.random.default_rng(13)
        for seed in range(50):
            depth = int(rng.integers(1, 5))
            config = MlpConfig.build(
                latent_size=int(rng.integers(1, 5)), hidden=int(rng.integers(2, 7)), depth=depth,
                quadratic_layers=int(rng.integers(0, depth + 1)),
            )
            report = grad_check(config, seed=seed)
            self.assertTrue(report.passed, (config, report.describe()))


class AdamTests(SimpleTestCase):
    def test_first_step_moves_by_learning_rate(self):
        params = {'x': np.array([1.0])}
        state = AdamState.for_params(params)
        updated = adam_step(state, params, {'x': np.array([0.1])}, lr=1e-3)
        self.assertAlmostEqual(updated['x'][0] - 1.0, -1e-3, places=9)
        self.assertEqual(state.step, 1)

    def test_zero_gradient_keeps_parameters(self):
        params = {'w': np.array([0.25, -1.5], dtype=np.float32)}
        state = AdamState.for_params(params)
        for _ in range(20):
            params = adam_step(state, params, {'w': np.zeros(2)}, lr=1e-2)
        np.testing.assert_array_equal(params['w'], np.array([0.25, -1.5], dtype=np.float32))
        self.assertEqual(params['w'].dtype, np.float32)

    def test_quadratic_descent(self):
        params = {'x': np.array([0.0])}
        state = AdamState.for_params(params)
        for _ in range(100):
            params = adam_step(state, params, {'x': 2.0 * (params['x'] - 3.0)}, lr=0.1)
        self.assertLess(abs(params['x'][0] - 3.0), 0.5)

    def test_unit_rows_renormalized(self):
        params = {'quaternions': np.array([[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]])}
        state = AdamState.for_params(params)
        updated = adam_step(state, params, {'quaternions': np.ones((2, 4))}, lr=0.1, unit_rows=('quaternions',))
        np.testing.assert_allclose(np.linalg.norm(updated['quaternions'], axis=1), 1.0, atol=1e-12)

    def test_shape_mismatch(self):
        params = {'x': np.zeros(3)}
        state = AdamState.for_params(params)
        with self.assertRaises(ShapeMismatch):
            adam_step(state, params, {'x': np.zeros(2)}, lr=1e-3)
