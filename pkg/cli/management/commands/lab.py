import numpy as np
from django.conf import settings

from cli.base import CofieCommand, add_json_flag
from geom_core.patches import QuadraticPatch
from geom_core.transforms import RigidTransform
from theory_lab.fitting import multistart, offset_samples
from theory_lab.landscape import LandscapePoint, landscape_report, verify_critical_point
from theory_lab.serializers import (
    CriticalReportSerializer, LandscapeReportSerializer, MultistartReportSerializer, SampleLawSerializer,
    SweepReportSerializer,
)
from theory_lab.sweep import FAMILIES, approx_error_sweep


def float_list(value):
    return [float(item) for item in value.split(',') if item.strip()]


def add_law_arguments(parser):
    parser.add_argument('--x-law', choices=['uniform', 'two-point'], default='uniform',
                        help='Distribution of x (default: %(default)s)')
    parser.add_argument('--x0', type=float, default=-1.0, help='Lower end of uniform x (default: %(default)s)')
    parser.add_argument('--x1', type=float, default=1.0, help='Upper end of uniform x (default: %(default)s)')
    parser.add_argument('--y0', type=float, default=0.0, help='Lower end of y (default: %(default)s)')
    parser.add_argument('--y1', type=float, default=0.02, help='Upper end of y (default: %(default)s)')
    parser.add_argument('--k0', type=float, default=1.0, help='Ground-truth curve coefficient (default: %(default)s)')
    parser.add_argument('--order', type=int, default=settings.COFIE_LAB['QUADRATURE_ORDER'],
                        help='Gauss-Legendre order per axis (default: %(default)s)')


class Command(CofieCommand):
    help = 'Numerical checks of the quadratic-patch analysis and the fitting landscape'

    def add_arguments(self, parser):
        subparsers = parser.add_subparsers(dest='experiment', required=True)

        sweep = subparsers.add_parser('sweep', help='Approximation error against patch radius')
        sweep.add_argument('--family', choices=FAMILIES, default='quadratic',
                           help='Patch family (default: %(default)s)')
        sweep.add_argument('--radii', type=float_list, default=list(settings.COFIE_LAB['RADII']),
                           help='Comma-separated decreasing radii')
        sweep.add_argument('--trials', type=int, default=settings.COFIE_LAB['TRIALS'],
                           help='Random (patch, point) pairs per radius (default: %(default)s)')
        sweep.add_argument('--seed', type=int, default=0, help='Base seed (default: %(default)s)')
        sweep.add_argument('--edge-slope', type=float, default=1.0,
                           help='Slope term of the sloped-edge family (default: %(default)s)')
        add_json_flag(sweep)

        landscape = subparsers.add_parser('landscape', help='Loss, gradient and Hessian at one point')
        add_law_arguments(landscape)
        landscape.add_argument('--point', type=float, nargs=4, metavar=('K', 'TX', 'TY', 'THETA'),
                               help='Landscape point (default: the spurious critical point)')
        add_json_flag(landscape)

        critical = subparsers.add_parser('critical', help='Certify the spurious critical point of a law')
        add_law_arguments(critical)
        critical.add_argument('--tolerance', type=float, default=settings.COFIE_LAB['CRITICAL_TOLERANCE'],
                              help='Gradient norm accepted as critical (default: %(default)s)')
        add_json_flag(critical)

        starts = subparsers.add_parser('multistart', help='Unaligned patch fits from random starts')
        starts.add_argument('--starts', type=int, default=20, help='Random starts (default: %(default)s)')
        starts.add_argument('--steps', type=int, default=20000, help='Step limit per start (default: %(default)s)')
        starts.add_argument('--lr', type=float, default=1.0, help='Initial step size (default: %(default)s)')
        starts.add_argument('--samples', type=int, default=200, help='Samples on the patch (default: %(default)s)')
        starts.add_argument('--patch', type=float, nargs=3, default=[1.0, 0.2, 0.6], metavar=('A', 'B', 'C'),
                            help='Ground-truth coefficients (default: 1.0 0.2 0.6)')
        starts.add_argument('--seed', type=int, default=0, help='Seed for the pose, samples and starts')
        add_json_flag(starts)

    def run(self, *args, **options):
        return getattr(self, f"run_{options['experiment']}")(options)

    def _law(self, options):
        serializer = SampleLawSerializer(data={
            key: options[key] for key in ('x0', 'x1', 'y0', 'y1', 'k0', 'order')
        } | {'x_law': options['x_law']})
        serializer.is_valid(raise_exception=True)
        return serializer.save()

    def run_sweep(self, options):
        for flag, value in (('--trials', options['trials']), ('--edge-slope', options['edge_slope'])):
            if not value > 0:
                self.usage_error(f"{flag} must be positive")
        self.echo_config({key: options[key] for key in ('family', 'radii', 'trials', 'seed', 'edge_slope')})
        try:
            report = approx_error_sweep(options['family'], options['radii'], options['trials'], options['seed'],
                                        options['edge_slope'])
        except ValueError as exc:
            self.usage_error(f"--radii: {exc}")
        lines = [f"{'radius':>10}  {'max_error':>12}"]
        lines += [f"{radius:>10.4g}  {error:>12.4e}" for radius, error in report.rows()]
        lines.append('slope=exact' if report.exact else f"slope={report.slope:.4f}")
        self.write_report(SweepReportSerializer(report).data, lines)

    def run_landscape(self, options):
        law = self._law(options)
        point = LandscapePoint(*options['point']) if options['point'] else LandscapePoint.critical(law)
        self.echo_config({'law': law.describe(), 'point': list(point)})
        report = landscape_report(point, law)
        lines = [f"r={report.r:.6e}", 'gradient=' + ' '.join(f"{value:.4e}" for value in report.gradient)]
        lines += ['hessian=' + ' '.join(f"{value:>12.5e}" for value in row) for row in report.hessian]
        self.write_report(LandscapeReportSerializer(report).data, lines)

    def run_critical(self, options):
        law = self._law(options)
        self.echo_config({'law': law.describe(), 'tolerance': options['tolerance']})
        report = verify_critical_point(law, options['tolerance'])
        data = CriticalReportSerializer(report).data
        lines = [
            f"is_critical={str(report.is_critical).lower()}",
            f"gradient_norm={report.gradient_norm:.3e}",
            f"hessian_min_eig={report.hessian_min_eig:.6e}",
            f"margin_theta_tx={report.psd_margins['theta_tx']:.6e}",
            f"margin_k_ty={report.psd_margins['k_ty']:.6e}",
            f"cauchy_gap={report.cauchy_gap:.3e}",
            f"degenerate={str(report.degenerate).lower()}",
        ]
        self.write_report(data, lines)

    def run_multistart(self, options):
        for flag in ('starts', 'samples'):
            if options[flag] < 2:
                self.usage_error(f"--{flag} must be at least 2")
        self.echo_config({key: options[key] for key in ('starts', 'steps', 'lr', 'samples', 'patch', 'seed')})
        rng = np.random.default_rng(options['seed'])
        patch = QuadraticPatch(*options['patch'], radius=1.0, pose=RigidTransform.random(rng, 0.2))
        samples = offset_samples(patch, options['samples'], seed=options['seed'])
        report = multistart(samples, options['starts'], options['seed'], options['steps'], options['lr'])
        lines = [f"residual[{index}]={value:.4e}" for index, value in enumerate(report.residuals)]
        lines += [f"converged={report.converged}", f"clusters={report.clusters}",
                  f"split_ratio={report.split_ratio:.4g}"]
        self.write_report(MultistartReportSerializer(report).data, lines)
