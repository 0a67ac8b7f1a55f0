import math

import numpy as np
from django.test import SimpleTestCase, tag

from geom_core.patches import QuadraticPatch
from geom_core.transforms import RigidTransform

from .exceptions import RankDeficient
from .fitting import (
    PatchSamples, box_samples, cluster_residuals, fit_aligned, fit_unaligned, multistart, offset_samples, pack,
    unaligned_gradient, unaligned_objective,
)
from .landscape import (
    LandscapePoint, finite_difference_gradient, finite_difference_hessian, landscape_grad_hess, landscape_r,
    landscape_report, verify_critical_point,
)
from .laws import SampleLaw
from .serializers import (
    CriticalReportSerializer, LandscapeReportSerializer, MultistartReportSerializer, SampleLawSerializer,
    SweepReportSerializer,
)
from .sweep import approx_error_sweep

RADII = (0.2, 0.1, 0.05, 0.025)


def random_point(rng, k=2.0, shift=0.5, angle=math.pi):
    return LandscapePoint(rng.uniform(-k, k), rng.uniform(-shift, shift), rng.uniform(-shift, shift),
                          rng.uniform(-angle, angle))


class SampleLawTests(SimpleTestCase):
    def test_uniform_moments(self):
        law = SampleLaw.uniform()
        self.assertAlmostEqual(law.moment_x(1), 0.0, delta=1e-15)
        self.assertAlmostEqual(law.moment_x(2), 1 / 3, delta=1e-14)
        self.assertAlmostEqual(law.moment_x(4), 1 / 5, delta=1e-14)
        self.assertAlmostEqual(law.moment_x(6), 1 / 7, delta=1e-14)
        self.assertAlmostEqual(law.c, 0.01, delta=1e-15)
        self.assertAlmostEqual(law.variance_y, 0.02 ** 2 / 12, delta=1e-16)

    def test_two_point_is_cauchy_tight(self):
        self.assertEqual(SampleLaw.two_point().cauchy_gap, 0.0)

    def test_grid_weights_are_normalized(self):
        law = SampleLaw.grid([-1.0, 0.0, 2.0], [1.0, 2.0, 1.0])
        self.assertAlmostEqual(law.moment_x(1), 0.25, delta=1e-15)

    def test_low_order_rejected(self):
        with self.assertRaises(ValueError):
            SampleLaw.uniform(order=4)

    def test_serializer(self):
        serializer = SampleLawSerializer(data={'x_law': 'two-point', 'k0': '2'})
        self.assertTrue(serializer.is_valid(), serializer.errors)
        law = serializer.save()
        self.assertEqual(law.k0, 2.0)
        self.assertEqual(law.cauchy_gap, 0.0)
        self.assertFalse(SampleLawSerializer(data={'x0': '1', 'x1': '0'}).is_valid())


class LandscapeTests(SimpleTestCase):
    def setUp(self):
        self.law = SampleLaw.uniform()

    def test_global_minimum(self):
        for law in (self.law, SampleLaw.two_point(k0=0.5), SampleLaw.grid([-0.3, 0.2, 0.9], k0=2.0)):
            point = LandscapePoint.global_minimum(law)
            self.assertLess(landscape_r(point, law), 1e-28)
            gradient, _ = landscape_grad_hess(point, law)
            self.assertLess(np.linalg.norm(gradient), 1e-12)

    def test_value_at_critical_point(self):
        point = LandscapePoint.critical(self.law)
        self.assertEqual(point, (-1.0, 0.0, 2 * self.law.c, math.pi))
        self.assertAlmostEqual(landscape_r(point, self.law), 4 * 0.02 ** 2 / 12, delta=1e-15)

    def test_theta_step_increases_r(self):
        point = LandscapePoint.critical(self.law)
        center = landscape_r(point, self.law)
        for delta in (1e-3, -1e-3):
            self.assertGreater(landscape_r(point.moved([0, 0, 0, delta]), self.law), center)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            point = random_point(rng)
            gradient, _ = landscape_grad_hess(point, self.law)
            error = np.linalg.norm(gradient - finite_difference_gradient(point, self.law))
            self.assertLess(error / np.linalg.norm(gradient), 1e-6, point)

    def test_hessian_matches_finite_differences(self):
        rng = np.random.default_rng(1)
        for _ in range(5):
            point = random_point(rng, k=1.0, shift=0.2, angle=1.0)
            _, hessian = landscape_grad_hess(point, self.law)
            np.testing.assert_allclose(hessian, finite_difference_hessian(point, self.law), atol=1e-5)

    def test_report_serializer(self):
        data = LandscapeReportSerializer(landscape_report(LandscapePoint.critical(self.law), self.law)).data
        self.assertEqual(len(data['hessian']), 4)
        self.assertAlmostEqual(data['point']['theta'], math.pi)


class CriticalPointTests(SimpleTestCase):
    def test_uniform_law_gives_local_minimum(self):
        for k0 in (0.5, 1.0, 2.0):
            report = verify_critical_point(SampleLaw.uniform(k0=k0))
            self.assertTrue(report.is_critical, k0)
            self.assertLessEqual(report.gradient_norm, 1e-8)
            self.assertGreater(report.hessian_min_eig, 0.0, k0)
            self.assertFalse(report.degenerate)
            self.assertGreater(min(report.psd_margins.values()), 0.0)
            self.assertTrue(report.is_local_minimum)

    def test_two_point_law_is_degenerate(self):
        report = verify_critical_point(SampleLaw.two_point())
        self.assertTrue(report.is_critical)
        self.assertTrue(report.degenerate)
        self.assertLessEqual(abs(report.cauchy_gap), 1e-12)
        self.assertAlmostEqual(report.psd_margins['k_ty'], 0.0, delta=1e-12)
        self.assertFalse(report.is_local_minimum)

    def test_nonzero_mean_is_not_critical(self):
        for law in (SampleLaw.uniform(x0=-0.7, x1=1.3), SampleLaw.grid([-0.7, 1.3])):
            self.assertAlmostEqual(law.moment_x(1), 0.3, delta=1e-12)
            report = verify_critical_point(law)
            self.assertFalse(report.is_critical)
            self.assertGreater(report.gradient_norm, 1e-6)

    def test_odd_third_moment_couples_k_and_theta(self):
        law = SampleLaw.grid([-2.0, 1.0, 1.0])
        self.assertAlmostEqual(law.moment_x(1), 0.0, delta=1e-15)
        report = verify_critical_point(law)
        self.assertTrue(report.is_critical)
        _, hessian = landscape_grad_hess(report.point, law)
        self.assertGreater(abs(hessian[0, 3]), 1e-3)
        _, symmetric = landscape_grad_hess(LandscapePoint.critical(SampleLaw.uniform()), SampleLaw.uniform())
        self.assertLess(abs(symmetric[0, 3]), 1e-12)

    def test_serializer(self):
        data = CriticalReportSerializer(verify_critical_point(SampleLaw.uniform())).data
        self.assertTrue(data['is_critical'])
        self.assertEqual(set(data['psd_margins']), {'theta_tx', 'k_ty'})


class AlignedFitTests(SimpleTestCase):
    def test_exact_recovery(self):
        samples = box_samples(QuadraticPatch(2.0, -1.0, 0.5), 50, seed=0)
        fit = fit_aligned(samples)
        np.testing.assert_allclose((fit.a, fit.b, fit.c), (2.0, -1.0, 0.5), atol=1e-10)
        self.assertLess(fit.residual, 1e-20)

    def test_random_problems(self):
        rng = np.random.default_rng(0)
        for seed in range(100):
            coefficients = rng.uniform(-2, 2, 3)
            fit = fit_aligned(box_samples(QuadraticPatch(*coefficients), 30, seed=seed))
            np.testing.assert_allclose((fit.a, fit.b, fit.c), coefficients, atol=1e-8)

    def test_too_few_samples(self):
        with self.assertRaises(RankDeficient):
            fit_aligned([((0.1, 0.2, 0.3), 0.1), ((0.2, 0.1, 0.0), 0.0)])

    def test_collinear_samples(self):
        points = np.array([[t, 0.0, 0.0] for t in np.linspace(-1, 1, 10)])
        with self.assertRaises(RankDeficient):
            fit_aligned(PatchSamples(points, np.zeros(10)))

    def test_noisy_fit_matches_svd_pseudo_inverse(self):
        samples = box_samples(QuadraticPatch(0.7, 0.1, -1.2), 200, seed=3, noise=0.01)
        x, y, z = samples.points.T
        design = np.stack([0.5 * x * x, x * y, 0.5 * y * y], axis=-1)
        u, s, vt = np.linalg.svd(design, full_matrices=False)
        expected = vt.T @ ((u.T @ (z - samples.distances)) / s)
        fit = fit_aligned(samples)
        np.testing.assert_allclose((fit.a, fit.b, fit.c), expected, atol=1e-8)


class UnalignedFitTests(SimpleTestCase):
    def setUp(self):
        pose = RigidTransform.random(np.random.default_rng(3), translation_scale=0.2)
        self.patch = QuadraticPatch(1.0, 0.2, 0.6, radius=1.0, pose=pose)
        self.samples = offset_samples(self.patch, 200, seed=0)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(4)
        theta = pack(*rng.uniform(-1, 1, 3), RigidTransform.random(rng, 0.3))
        gradient = unaligned_gradient(theta, self.samples)
        numeric = np.zeros_like(theta)
        for index in range(len(theta)):
            step = np.zeros_like(theta)
            step[index] = 1e-6
            numeric[index] = (unaligned_objective(theta + step, self.samples)
                              - unaligned_objective(theta - step, self.samples)) / 2e-6
        np.testing.assert_allclose(gradient, numeric, rtol=1e-5, atol=1e-8)

    def test_ground_truth_is_stationary(self):
        init = (1.0, 0.2, 0.6, self.patch.pose.inverse())
        fit = fit_unaligned(self.samples, init, steps=50)
        self.assertLess(fit.residual, 1e-10)
        moved = pack(fit.a, fit.b, fit.c, fit.pose) - pack(*init)
        self.assertLess(np.abs(moved).max(), 1e-6)

    def test_aligned_start_on_aligned_data(self):
        samples = box_samples(QuadraticPatch(-0.4, 0.9, 1.5), 100, seed=1)
        aligned = fit_aligned(samples)
        fit = fit_unaligned(samples, (aligned.a, aligned.b, aligned.c, None), steps=50)
        np.testing.assert_allclose((fit.a, fit.b, fit.c), (aligned.a, aligned.b, aligned.c), atol=1e-6)

    def test_frozen_pose_reduces_to_aligned_fit(self):
        samples = box_samples(QuadraticPatch(0.5, -0.3, 1.1), 150, seed=2, noise=0.01)
        aligned = fit_aligned(samples)
        fit = fit_unaligned(samples, steps=2000, freeze_pose=True)
        self.assertAlmostEqual(fit.residual, aligned.residual, delta=1e-8)
        np.testing.assert_array_equal(fit.pose.rotation, [1.0, 0.0, 0.0, 0.0])
        np.testing.assert_array_equal(fit.pose.translation, np.zeros(3))

    def test_zero_steps(self):
        fit = fit_unaligned(self.samples, steps=0)
        self.assertEqual((fit.a, fit.b, fit.c, fit.steps), (0.0, 0.0, 0.0, 0))
        self.assertEqual(fit.history, [fit.residual])

    def test_residuals_never_increase(self):
        fit = fit_unaligned(self.samples, (0.0, 0.0, 0.0, RigidTransform.random(np.random.default_rng(5))), steps=100)
        self.assertTrue(all(later <= earlier for earlier, later in zip(fit.history, fit.history[1:])))

    def test_cluster_residuals(self):
        clusters, ratio, split = cluster_residuals([2e-4, 1e-12, 1e-4, 2e-12])
        self.assertEqual((clusters, split), (2, 2))
        self.assertAlmostEqual(ratio / 5e7, 1.0, places=12)
        self.assertEqual(cluster_residuals([1.0, 2.0, 3.0])[0], 1)
        self.assertEqual(cluster_residuals([0.0, 1e-3])[0], 2)
        self.assertEqual(cluster_residuals([]), (0, 1.0, 0))
        self.assertEqual(cluster_residuals([1e-20, 1e-18], floor=1e-14)[0], 1)

    def test_step_limit_leaves_fit_unconverged(self):
        start = (0.0, 0.0, 0.0, RigidTransform.random(np.random.default_rng(5)))
        fit = fit_unaligned(self.samples, start, steps=3, tolerance=1e-14, gradient_tolerance=1e-9, project=True)
        self.assertFalse(fit.converged)
        self.assertEqual(fit.steps, 3)

    def test_projected_fit_converges_at_ground_truth(self):
        init = (0.0, 0.0, 0.0, self.patch.pose.inverse())
        fit = fit_unaligned(self.samples, init, steps=50, tolerance=1e-14, gradient_tolerance=1e-9, project=True)
        self.assertTrue(fit.converged)
        self.assertLessEqual(fit.residual, 1e-14)
        np.testing.assert_allclose((fit.a, fit.b, fit.c), (1.0, 0.2, 0.6), atol=1e-6)

    def test_flipped_pose_settles_at_lift_variance(self):
        # Upside down the lift changes sign; only a constant offset is left to absorb it
        flip = RigidTransform([0.0, 1.0, 0.0, 0.0])
        init = (0.0, 0.0, 0.0, flip.compose(self.patch.pose.inverse()))
        fit = fit_unaligned(self.samples, init, steps=20000, tolerance=1e-14, gradient_tolerance=1e-9,
                            relative_tolerance=1e-12, project=True)
        expected = 4.0 * np.var(self.samples.distances)
        self.assertTrue(fit.converged)
        self.assertLessEqual(fit.residual, expected * (1 + 1e-6))
        self.assertGreater(fit.residual, 0.8 * expected)

    def test_multistart_finds_distinct_minima(self):
        report = multistart(self.samples, starts=20, seed=0)
        self.assertEqual(len(report.residuals), 20)
        self.assertGreaterEqual(report.converged, 2)
        self.assertEqual(len(report.low_cluster) + len(report.high_cluster), report.converged)
        self.assertGreaterEqual(report.clusters, 2)
        self.assertGreaterEqual(report.split_ratio, 10.0)
        self.assertGreaterEqual(report.high_cluster[0], 10 * report.low_cluster[-1])
        self.assertEqual(MultistartReportSerializer(report).data['converged'], report.converged)


class SweepTests(SimpleTestCase):
    def test_quadratic_family_is_third_order(self):
        report = approx_error_sweep('quadratic', RADII, trials=100, seed=0)
        self.assertFalse(report.exact)
        self.assertTrue(2.5 <= report.slope <= 3.5, report.slope)
        self.assertTrue(all(later < earlier for earlier, later in zip(report.errors, report.errors[1:])))

    def test_plane_family_is_exact(self):
        report = approx_error_sweep('plane', RADII, trials=20)
        self.assertTrue(report.exact)
        self.assertIsNone(report.slope)
        self.assertIsNone(SweepReportSerializer(report).data['slope'])

    def test_sharp_edge_family_is_third_order(self):
        report = approx_error_sweep('sharp-edge', RADII, trials=100, seed=1)
        self.assertTrue(2.5 <= report.slope <= 3.5, report.slope)

    def test_sloped_edge_family_is_first_order(self):
        report = approx_error_sweep('sloped-edge', RADII, trials=50, seed=2)
        self.assertLess(report.slope, 1.5)

    def test_deterministic(self):
        first = approx_error_sweep('quadratic', (0.1, 0.05, 0.025), trials=10, seed=5)
        second = approx_error_sweep('quadratic', (0.1, 0.05, 0.025), trials=10, seed=5)
        self.assertEqual(first.errors, second.errors)

    def test_bad_arguments(self):
        for radii in ((0.1, 0.2, 0.05), (0.2, 0.1)):
            with self.assertRaises(ValueError):
                approx_error_sweep('quadratic', radii, trials=1)
        with self.assertRaises(ValueError):
            approx_error_sweep('cubic', RADII, trials=1)

    @tag('slow')
    def test_full_sweeps(self):
        for family in ('quadratic', 'sharp-edge'):
            report = approx_error_sweep(family, RADII, trials=1000)
            self.assertTrue(2.5 <= report.slope <= 3.5, (family, report.slope))
