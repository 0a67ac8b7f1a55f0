import io
import json
import tempfile
from pathlib import Path

import numpy as np
from django.core.management import call_command, load_command_class
from django.core.management.base import CommandError
from django.test import SimpleTestCase

from coord_field.storage import load_field
from geom_core.mesh import mesh_load, mesh_save
from geom_core.primitives import icosphere
from sdf_oracle.storage import load_sample_set
from trainer.checkpoint import load_checkpoint

from .management.commands.train import collect_sample_files, resolve_train_config

TINY_CONFIG = """\
# desk-scale smoke run
shapes_per_batch = 1
voxels_per_shape = 8
points_per_voxel = 4
iterations = 3
latent_size = 4
hidden = 8
depth = 3
"""


def run(*args):
    """call_command with captured output; returns (stdout, stderr)."""
    stdout, stderr = io.StringIO(), io.StringIO()
    call_command(*args, stdout=stdout, stderr=stderr)
    return stdout.getvalue(), stderr.getvalue()


def exit_code(*argv):
    command = load_command_class('cli', argv[0])
    command.stdout, command.stderr = io.StringIO(), io.StringIO()
    try:
        command.run_from_argv(['manage.py', *argv])
    except SystemExit as exc:
        return exc.code
    return 0


class CommandTestCase(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)
        self.sphere = self.dir / 'sphere.obj'
        mesh_save(icosphere(2, radius=0.5).transformed(3.0, np.array([1.0, -2.0, 0.5])), self.sphere)

    def tearDown(self):
        self.tmp.cleanup()

    def path(self, name):
        return str(self.dir / name)


class NormalizeSampleTests(CommandTestCase):
    def test_normalize(self):
        stdout, _ = run('normalize', str(self.sphere), self.path('unit.obj'))
        self.assertIn(f"# in_mesh = {self.sphere}", stdout)
        lower, upper = mesh_load(self.path('unit.obj')).bounds
        self.assertAlmostEqual(float((upper - lower).max()), 1.9, places=6)
        np.testing.assert_allclose(lower + upper, 0.0, atol=1e-6)

    def test_sample_is_deterministic(self):
        run('normalize', str(self.sphere), self.path('unit.obj'))
        for name in ('a.cfsm', 'b.cfsm'):
            run('sample', self.path('unit.obj'), self.path(name), '--grid', '8', '--per-voxel', '4', '--seed', '3')
        self.assertEqual(Path(self.path('a.cfsm')).read_bytes(), Path(self.path('b.cfsm')).read_bytes())
        samples = load_sample_set(self.path('a.cfsm'))
        self.assertEqual(samples.resolution, 8)
        self.assertEqual(len(samples) % 4, 0)

    def test_sample_rejects_tiny_grid(self):
        with self.assertRaises(CommandError) as caught:
            run('sample', str(self.sphere), self.path('a.cfsm'), '--grid', '1')
        self.assertEqual(caught.exception.returncode, 2)


class EvalCommandTests(CommandTestCase):
    def test_self_comparison(self):
        stdout, stderr = run('eval', str(self.sphere), str(self.sphere), '--points', '2000', '--json')
        report = json.loads(stdout)
        self.assertLess(report['chamfer'], 1e-4)
        self.assertEqual(report['points'], 2000)
        self.assertIn('# points = 2000', stderr)

    def test_plain_output(self):
        stdout, _ = run('eval', str(self.sphere), str(self.sphere), '--points', '500')
        self.assertIn('chamfer=0', stdout)

    def test_unknown_flag_is_usage_error(self):
        self.assertEqual(exit_code('eval', str(self.sphere), str(self.sphere), '--bogus'), 2)

    def test_missing_file_is_domain_error(self):
        missing = self.path('missing.obj')
        self.assertEqual(exit_code('eval', missing, missing), 1)
        with self.assertRaises(CommandError) as caught:
            run('eval', missing, missing)
        self.assertEqual(caught.exception.returncode, 1)
        self.assertIn('IoError', str(caught.exception))


class LabCommandTests(SimpleTestCase):
    def test_critical_defaults(self):
        stdout, _ = run('lab', 'critical')
        self.assertIn('is_critical=true', stdout)
        values = dict(line.split('=', 1) for line in stdout.splitlines() if '=' in line and not line.startswith('#'))
        self.assertGreater(float(values['hessian_min_eig']), 0.0)
        self.assertEqual(values['degenerate'], 'false')

    def test_critical_two_point_json(self):
        stdout, _ = run('lab', 'critical', '--x-law', 'two-point', '--json')
        report = json.loads(stdout)
        self.assertTrue(report['degenerate'])
        self.assertLessEqual(abs(report['cauchy_gap']), 1e-12)

    def test_critical_shifted_law(self):
        report = json.loads(run('lab', 'critical', '--x0', '-0.7', '--x1', '1.3', '--json')[0])
        self.assertFalse(report['is_critical'])

    def test_landscape(self):
        report = json.loads(run('lab', 'landscape', '--json')[0])
        self.assertAlmostEqual(report['r'], 4 * 0.02 ** 2 / 12, delta=1e-12)
        report = json.loads(run('lab', 'landscape', '--point', '1', '0', '0', '0', '--json')[0])
        self.assertLess(report['r'], 1e-28)

    def test_sweep(self):
        stdout, _ = run('lab', 'sweep', '--family', 'plane', '--trials', '5')
        self.assertIn('slope=exact', stdout)
        report = json.loads(run('lab', 'sweep', '--radii', '0.1,0.05,0.025', '--trials', '20', '--json')[0])
        self.assertEqual(report['radii'], [0.1, 0.05, 0.025])
        self.assertGreater(report['slope'], 2.0)

    def test_sweep_rejects_increasing_radii(self):
        with self.assertRaises(CommandError) as caught:
            run('lab', 'sweep', '--radii', '0.05,0.1,0.2', '--trials', '1')
        self.assertEqual(caught.exception.returncode, 2)

    def test_bad_law_is_usage_error(self):
        with self.assertRaises(CommandError) as caught:
            run('lab', 'critical', '--x0', '1', '--x1', '0')
        self.assertEqual(caught.exception.returncode, 2)

    def test_multistart(self):
        report = json.loads(run('lab', 'multistart', '--starts', '4', '--steps', '20', '--json')[0])
        self.assertEqual(report['starts'], 4)
        self.assertEqual(report['residuals'], sorted(report['residuals']))

    def test_missing_experiment(self):
        self.assertEqual(exit_code('lab'), 2)


class PipelineTests(CommandTestCase):
    def setUp(self):
        super().setUp()
        self.config = self.dir / 'train.cfg'
        self.config.write_text(TINY_CONFIG)

    def pipeline(self, prefix):
        unit, samples = self.path(f'{prefix}unit.obj'), self.path(f'{prefix}samples')
        Path(samples).mkdir()
        run('normalize', str(self.sphere), unit)
        run('sample', unit, str(Path(samples) / 'sphere.cfsm'), '--grid', '8', '--per-voxel', '8', '--seed', '1')
        checkpoint = self.path(f'{prefix}model.cfck')
        run('train', samples, checkpoint, '--config', str(self.config), '--seed', '2')
        run('fit', checkpoint, unit, self.path(f'{prefix}field.cffd'), '--iters', '2', '--lr', '1e-3')
        run('extract', checkpoint, self.path(f'{prefix}field.cffd'), self.path(f'{prefix}out.obj'), '--res', '16')
        return [Path(self.path(prefix + name)).read_bytes() for name in ('model.cfck', 'field.cffd', 'out.obj')]

    def test_pipeline_runs_and_is_deterministic(self):
        first = self.pipeline('a_')
        second = self.pipeline('b_')
        self.assertEqual(first, second)

        checkpoint = load_checkpoint(self.path('a_model.cfck'))
        self.assertEqual(checkpoint.iteration, 3)
        self.assertEqual(checkpoint.resolution, 8)
        self.assertEqual(checkpoint.config.latent_size, 4)
        self.assertEqual(load_field(self.path('a_field.cffd')).latent_size, 4)

        unit, extracted = self.path('a_unit.obj'), self.path('a_out.obj')
        try:
            report = json.loads(run('eval', extracted, unit, '--points', '1000', '--json')[0])
        except CommandError as exc:
            # An untrained decoder may not cross zero anywhere
            self.assertEqual(exc.returncode, 1)
        else:
            self.assertIsNotNone(report['chamfer'])

    def test_train_banner_echoes_config(self):
        unit = self.path('unit.obj')
        run('normalize', str(self.sphere), unit)
        run('sample', unit, self.path('s.cfsm'), '--grid', '8', '--per-voxel', '4')
        stdout, _ = run('train', self.path('s.cfsm'), self.path('m.cfck'), '--config', str(self.config))
        self.assertIn('# iterations = 3', stdout)
        self.assertIn('# hidden = 8', stdout)
        self.assertIn('# learn_frames = true', stdout)

    def test_unknown_config_key(self):
        self.config.write_text('learning_rate = 1e-3\n')
        with self.assertRaises(CommandError) as caught:
            run('train', str(self.sphere), self.path('m.cfck'), '--config', str(self.config))
        self.assertEqual(caught.exception.returncode, 2)
        self.assertIn('learning_rate', str(caught.exception))

    def test_malformed_config_is_domain_error(self):
        self.config.write_text('iterations\n')
        with self.assertRaises(CommandError) as caught:
            run('train', str(self.sphere), self.path('m.cfck'), '--config', str(self.config))
        self.assertEqual(caught.exception.returncode, 1)

    def test_config_resolution_order(self):
        cfg = resolve_train_config(str(self.config), seed=9)
        self.assertEqual((cfg.iterations, cfg.seed, cfg.hidden), (3, 9, 8))
        self.assertEqual(resolve_train_config().iterations, 20000)

    def test_collect_sample_files(self):
        unit = self.path('unit.obj')
        run('normalize', str(self.sphere), unit)
        run('sample', unit, self.path('b.cfsm'), '--grid', '8', '--per-voxel', '2')
        run('sample', unit, self.path('a.cfsm'), '--grid', '8', '--per-voxel', '2')
        self.assertEqual([path.name for path in collect_sample_files([self.tmp.name])], ['a.cfsm', 'b.cfsm'])
