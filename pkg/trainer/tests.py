import struct
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase, tag

from coord_field.frames import init_frames
from geom_core.exceptions import IoError, ParseError
from geom_core.primitives import plane_slab
from neural_sdf.mlp import MlpConfig, forward, init_params
from sdf_oracle.distance import MeshSdf
from surface_extract.metrics import evaluate

from .ablation import VARIANTS, desk_config, run_ablation
from .checkpoint import HEADER, Checkpoint, checkpoint_bytes, load_checkpoint, meta_path, save_checkpoint
from .config import InferConfig, TrainConfig, parse_config_file
from .corpus import toy_corpus, train_test_split
from .exceptions import ConfigMismatch, VersionMismatch
from .serializers import InferConfigSerializer, TrainConfigSerializer
from .training import _Pool, infer_fit, mean_loss, prepare_shape, train, window_trend

SMALL = TrainConfig(
    shapes_per_batch=2, voxels_per_shape=16, points_per_voxel=4, iterations=3, halving_period=2,
    latent_size=4, hidden=8, depth=3, quadratic_layers=1,
)


def plane_shape(seed=0, latent_size=4, frame_init='pca'):
    return prepare_shape(plane_slab(height=0.3), 8, 24, seed=seed, latent_size=latent_size, frame_init=frame_init)


class ConfigTests(SimpleTestCase):
    def test_settings_defaults(self):
        cfg = TrainConfig.from_settings()
        self.assertEqual(cfg.points_per_voxel, 24)
        self.assertEqual(cfg.lr_mlp, 5e-4)
        self.assertEqual(cfg.model_config.widths, (128, 128, 128, 128, 128, 1))
        self.assertEqual(InferConfig.from_settings().iterations, 800)

    def test_serializer_coerces_strings(self):
        serializer = TrainConfigSerializer(data={'lr_mlp': '2.5e-4', 'iterations': '10', 'learn_frames': 'false'})
        self.assertTrue(serializer.is_valid(), serializer.errors)
        cfg = serializer.save()
        self.assertEqual(cfg.lr_mlp, 2.5e-4)
        self.assertEqual(cfg.iterations, 10)
        self.assertFalse(cfg.learn_frames)

    def test_serializer_rejects_unknown_key(self):
        serializer = TrainConfigSerializer(data={'learning_rate': '1e-3'})
        self.assertFalse(serializer.is_valid())
        self.assertIn('learning_rate', serializer.errors)

    def test_serializer_rejects_bad_values(self):
        for data in ({'lr_frames': '0'}, {'points_per_voxel': '0'}, {'depth': '2', 'quadratic_layers': '3'}):
            self.assertFalse(TrainConfigSerializer(data=data).is_valid(), data)

    def test_infer_serializer_uses_base(self):
        serializer = InferConfigSerializer(data={'iterations': '5'}, context={'base': InferConfig(lr=1e-2)})
        self.assertTrue(serializer.is_valid(), serializer.errors)
        cfg = serializer.save()
        self.assertEqual((cfg.iterations, cfg.lr), (5, 1e-2))

    def test_parse_config_file(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'train.cfg'
            path.write_text('# desk run\niterations = 200  # short\n\nlr_mlp=1e-3\n')
            self.assertEqual(parse_config_file(path), {'iterations': '200', 'lr_mlp': '1e-3'})
            path.write_text('iterations = 200\nhidden\n')
            with self.assertRaises(ParseError) as caught:
                parse_config_file(path)
            self.assertEqual(caught.exception.line, 2)


class CheckpointTests(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.path = Path(self.tmp.name) / 'model.cfck'
        config = MlpConfig.build(latent_size=3, hidden=6, depth=3, quadratic_layers=1)
        self.checkpoint = Checkpoint.initial(config, seed=1, iteration=7, loss_history=[0.5, 0.25], resolution=16)
        rng = np.random.default_rng(2)
        self.checkpoint.params.layers[-1].T[:] = rng.standard_normal(self.checkpoint.params.layers[-1].T.shape)

    def tearDown(self):
        self.tmp.cleanup()

    def test_round_trip(self):
        save_checkpoint(self.checkpoint, self.path)
        loaded = load_checkpoint(self.path)
        inputs = np.random.default_rng(3).standard_normal((100, 6))
        np.testing.assert_array_equal(forward(loaded.params, inputs)[0], forward(self.checkpoint.params, inputs)[0])
        self.assertEqual(checkpoint_bytes(loaded), checkpoint_bytes(self.checkpoint))
        self.assertEqual(loaded.iteration, 7)
        self.assertEqual(loaded.loss_history, [0.5, 0.25])
        self.assertEqual(loaded.resolution, 16)
        self.assertTrue(meta_path(self.path).exists())

    def test_truncated(self):
        self.path.write_bytes(checkpoint_bytes(self.checkpoint)[:-3])
        with self.assertRaises(IoError):
            load_checkpoint(self.path)

    def test_version_mismatch(self):
        data = bytearray(checkpoint_bytes(self.checkpoint))
        data[:HEADER.size] = HEADER.pack(b'CFCK', 2, 3, 1)
        self.path.write_bytes(bytes(data))
        with self.assertRaises(VersionMismatch):
            load_checkpoint(self.path)

    def test_bad_magic(self):
        self.path.write_bytes(b'XXXX' + checkpoint_bytes(self.checkpoint)[4:])
        with self.assertRaises(IoError):
            load_checkpoint(self.path)

    def test_header_layout(self):
        data = checkpoint_bytes(self.checkpoint)
        self.assertEqual(struct.unpack_from('<4sIII', data), (b'CFCK', 1, 3, 1))
        self.assertEqual(list(np.frombuffer(data, '<u4', 4, HEADER.size)), [6, 6, 6, 1])


class PoolTests(SimpleTestCase):
    def test_draw_stays_inside_voxels_without_repeats(self):
        data = plane_shape()
        pool = _Pool(data.samples, data.field)
        indices = pool.draw(50, 10, np.random.default_rng(0))
        self.assertEqual(len(indices), 500)
        groups = indices.reshape(50, 10)
        voxels = data.samples.voxels[groups]
        self.assertTrue(np.all(voxels == voxels[:, :1]))
        for group in groups:
            self.assertEqual(len(np.unique(group)), 10)

    def test_draw_caps_points_at_pool_size(self):
        data = plane_shape()
        indices = _Pool(data.samples, data.field).draw(3, 100, np.random.default_rng(1))
        self.assertEqual(len(indices), 3 * 24)


class TrainTests(SimpleTestCase):
    def test_zero_iterations_returns_initialization(self):
        data = plane_shape()
        result = train([data], SMALL.with_changes(iterations=0))
        self.assertEqual(checkpoint_bytes(result.checkpoint), checkpoint_bytes(Checkpoint.initial(SMALL.model_config, 0)))
        np.testing.assert_array_equal(result.fields[0].quaternions, data.field.quaternions)
        np.testing.assert_array_equal(result.fields[0].latents, data.field.latents)

    def test_inputs_not_modified_and_history_recorded(self):
        data = plane_shape()
        before = data.field.latents.copy()
        result = train([data, plane_shape(seed=1)], SMALL)
        np.testing.assert_array_equal(data.field.latents, before)
        self.assertEqual(len(result.checkpoint.loss_history), 3)
        self.assertEqual(result.checkpoint.iteration, 3)
        self.assertEqual(result.checkpoint.resolution, 8)
        self.assertFalse(np.array_equal(result.fields[0].latents, before))
        np.testing.assert_allclose(np.linalg.norm(result.fields[0].quaternions, axis=1), 1.0, atol=1e-12)

    def test_frozen_frames(self):
        data = plane_shape()
        result = train([data], SMALL.with_changes(learn_frames=False))
        np.testing.assert_array_equal(result.fields[0].quaternions, data.field.quaternions)
        np.testing.assert_array_equal(result.fields[0].origins, data.field.origins)

    def test_deterministic(self):
        shapes = [plane_shape(), plane_shape(seed=1)]
        first = train(shapes, SMALL)
        second = train(shapes, SMALL)
        self.assertEqual(checkpoint_bytes(first.checkpoint), checkpoint_bytes(second.checkpoint))
        np.testing.assert_array_equal(first.fields[1].latents, second.fields[1].latents)

    def test_latent_size_mismatch(self):
        with self.assertRaises(ConfigMismatch):
            train([plane_shape(latent_size=5)], SMALL)

    def test_resolution_mismatch(self):
        other = prepare_shape(plane_slab(height=0.3), 4, 8, latent_size=4)
        with self.assertRaises(ConfigMismatch):
            train([plane_shape(), other], SMALL)

    def test_window_trend(self):
        self.assertEqual(window_trend([4, 4, 3, 3, 2, 2, 1, 1], 2), 1.0)
        self.assertEqual(window_trend([1, 1, 2, 2, 1, 1], 2), 0.5)

    @tag('slow')
    def test_plane_reaches_small_error(self):
        data = plane_shape(latent_size=4)
        cfg = TrainConfig(
            shapes_per_batch=1, voxels_per_shape=64, points_per_voxel=24, iterations=2000, halving_period=400,
            lr_mlp=2e-3, lr_frames=4e-3, lr_latents=4e-3, latent_size=4, hidden=32, depth=3, quadratic_layers=1,
        )
        result = train([data], cfg)
        self.assertLess(mean_loss(result.checkpoint.params, result.fields[0], data.samples), 1e-3)


class InferTests(SimpleTestCase):
    def setUp(self):
        self.data = plane_shape()
        self.checkpoint = train([self.data], SMALL).checkpoint

    def test_zero_iterations_gives_pca_field(self):
        field, samples = infer_fit(self.checkpoint, plane_slab(height=0.3), InferConfig(iterations=0),
                                   return_samples=True)
        expected = init_frames(field, samples, MeshSdf(plane_slab(height=0.3)))
        np.testing.assert_allclose(field.quaternions, expected.quaternions, atol=1e-12)
        np.testing.assert_array_equal(field.origins, field.grid.cell_center(field.cells))

    def test_decoder_is_frozen(self):
        before = checkpoint_bytes(self.checkpoint)
        infer_fit(self.checkpoint, self.data.samples, InferConfig(iterations=5, voxels_per_step=16, points_per_voxel=4))
        self.assertEqual(checkpoint_bytes(self.checkpoint), before)

    def test_fit_moves_latents(self):
        cfg = InferConfig(iterations=3, voxels_per_step=16, points_per_voxel=4, lr=1e-2)
        initial = infer_fit(self.checkpoint, self.data.samples, cfg.with_changes(iterations=0))
        fitted = infer_fit(self.checkpoint, self.data.samples, cfg)
        self.assertFalse(np.array_equal(initial.latents, fitted.latents))
        self.assertEqual(fitted.latent_size, 4)

    def test_frames_follow_identity_training(self):
        cfg = SMALL.with_changes(frame_init='identity', learn_frames=False, quadratic_layers=0)
        checkpoint = train([plane_shape(frame_init='identity')], cfg).checkpoint
        fit = InferConfig(iterations=5, voxels_per_step=16, points_per_voxel=4, lr=1e-2)
        initial = infer_fit(checkpoint, plane_slab(height=0.3), fit.with_changes(iterations=0))
        fitted = infer_fit(checkpoint, plane_slab(height=0.3), fit)
        identity = np.tile([1.0, 0.0, 0.0, 0.0], (len(initial), 1))
        np.testing.assert_array_equal(initial.quaternions, identity)
        np.testing.assert_array_equal(fitted.quaternions, identity)
        np.testing.assert_array_equal(fitted.origins, initial.origins)
        self.assertFalse(np.array_equal(fitted.latents, initial.latents))

    def test_frame_settings_resolve_against_checkpoint(self):
        self.assertEqual(InferConfig().frames_for(self.checkpoint), ('pca', True))
        self.assertEqual(InferConfig(frame_init='identity', learn_frames=False).frames_for(self.checkpoint),
                         ('identity', False))
        self.checkpoint.train_config = None
        self.assertEqual(InferConfig().frames_for(self.checkpoint), ('pca', True))


class CorpusTests(SimpleTestCase):
    def test_corpus_is_deterministic_and_normalized(self):
        first, second = toy_corpus(6, seed=3), toy_corpus(6, seed=3)
        self.assertEqual([shape.kind for shape in first], ['sphere', 'box', 'wedge'] * 2)
        for a, b in zip(first, second):
            np.testing.assert_array_equal(a.mesh.vertices, b.mesh.vertices)
            self.assertTrue(a.mesh.is_watertight)
            self.assertLessEqual(np.abs(a.mesh.vertices).max(), 0.95 + 1e-9)

    def test_split_can_exclude_kinds(self):
        train_shapes, test_shapes = train_test_split(seed=0, train=4, test=2, kinds=('box', 'wedge'),
                                                     test_kinds=('sphere',))
        self.assertNotIn('sphere', {shape.kind for shape in train_shapes})
        self.assertEqual({shape.kind for shape in test_shapes}, {'sphere'})


class AblationTests(SimpleTestCase):
    def test_variants_report_in_order(self):
        train_shapes, test_shapes = train_test_split(seed=0, train=2, test=1)
        base = desk_config(iterations=2, shapes_per_batch=2, voxels_per_shape=8, points_per_voxel=4,
                           latent_size=4, hidden=8, depth=3)
        infer = InferConfig(iterations=2, voxels_per_step=8, points_per_voxel=4, per_voxel=8)
        results = run_ablation(train_shapes, test_shapes, base, infer, resolution=8, per_voxel=8,
                               mc_resolution=16, n_points=200)
        self.assertEqual([result.name for result in results], list(VARIANTS))
        for result in results:
            self.assertEqual(len(result.chamfers), 1)
            self.assertTrue(np.isfinite(result.mean_chamfer))
            self.assertGreaterEqual(result.mean_chamfer, 0.0)
            self.assertTrue(np.isfinite(result.final_loss))

    def test_desk_config_overrides(self):
        cfg = desk_config(iterations=5)
        self.assertEqual((cfg.iterations, cfg.latent_size, cfg.hidden), (5, 16, 64))


def first_axis_decoder(latent_size):
    """Decoder returning the first local coordinate, the normal axis of a PCA frame."""
    params = init_params(MlpConfig((3 + latent_size, 4, 1), quadratic_layers=0)).astype(np.float64)
    params.layers[0].A[:] = 0.0
    params.layers[0].A[0, 0] = 1.0
    params.layers[0].b[:] = [2.0, 0.0, 0.0, 0.0]
    params.layers[1].A[:] = [[1.0, 0.0, 0.0, 0.0]]
    params.layers[1].b[:] = [-2.0]
    return params


class FrameInitTests(SimpleTestCase):
    def test_pca_frames_lower_initial_loss(self):
        params = first_axis_decoder(4)
        pca, identity = [], []
        for index, shape in enumerate(toy_corpus(6, seed=2)):
            data = prepare_shape(shape.mesh, 8, 24, seed=index, latent_size=4)
            plain = prepare_shape(shape.mesh, 8, 24, seed=index, latent_size=4, frame_init='identity')
            np.testing.assert_array_equal(data.samples.positions, plain.samples.positions)
            pca.append(mean_loss(params, data.field, data.samples))
            identity.append(mean_loss(params, plain.field, plain.samples))
        self.assertLess(np.mean(pca), np.mean(identity))


@tag('slow')
class DeskScaleTests(SimpleTestCase):
    """Ablation on boxes and wedges; spheres stay unseen."""

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.train_shapes, cls.test_shapes = train_test_split(seed=0, train=10, test=5, kinds=('box', 'wedge'))
        cls.cfg = desk_config()
        cls.results = {result.name: result for result in run_ablation(cls.train_shapes, cls.test_shapes, cls.cfg)}

    def test_frames_and_quadratic_layer_improve_chamfer(self):
        identity = self.results['identity-linear'].mean_chamfer
        linear = self.results['pca-linear'].mean_chamfer
        quadratic = self.results['pca-quadratic'].mean_chamfer
        self.assertLess(quadratic, linear)
        self.assertLess(linear, identity)
        self.assertLessEqual(quadratic, 0.8 * identity)

    def test_training_loss_decreases_over_windows(self):
        history = self.results['pca-quadratic'].checkpoint.loss_history
        self.assertEqual(len(history), 20000)
        self.assertGreaterEqual(window_trend(history, 1000), 0.9)

    def test_refit_matches_training_loss(self):
        result = self.results['pca-quadratic']
        cfg = InferConfig.from_settings(iterations=3000, seed=self.cfg.seed, resolution=16, per_voxel=24)
        field, samples = infer_fit(result.checkpoint, self.train_shapes[0].mesh, cfg, return_samples=True)
        trained = mean_loss(result.checkpoint.params, result.fields[0], samples)
        refit = mean_loss(result.checkpoint.params, field, samples)
        self.assertLessEqual(refit, 2.0 * trained)

    def test_unseen_sphere(self):
        sphere = toy_corpus(1, seed=7, kinds=('sphere',))[0]
        self.assertNotIn('sphere', {shape.kind for shape in self.train_shapes})
        checkpoint = self.results['pca-quadratic'].checkpoint
        field = infer_fit(checkpoint, sphere.mesh, InferConfig.from_settings(iterations=800, lr=5e-4))
        report = evaluate(field, checkpoint, sphere.mesh, mc_resolution=128)
        self.assertTrue(report.ok, report.error)
        self.assertLessEqual(report.chamfer, 1e-3)
