from django.conf import settings
from django.core.management.base import CommandError

from cli.base import DOMAIN_ERROR, CofieCommand, add_json_flag
from geom_core.mesh import mesh_load
from surface_extract.metrics import evaluate_meshes
from surface_extract.serializers import EvalReportSerializer


class Command(CofieCommand):
    help = 'Chamfer-L2 distance between an extracted mesh and a ground-truth mesh'

    def add_arguments(self, parser):
        parser.add_argument('extracted_mesh', help='Mesh produced by the extract command')
        parser.add_argument('gt_mesh', help='Ground-truth mesh')
        parser.add_argument('--points', type=int, default=settings.COFIE_EXTRACTION['POINTS'],
                            help='Surface samples per mesh (default: %(default)s)')
        parser.add_argument('--seed', type=int, default=0, help='Surface sampling seed (default: %(default)s)')
        add_json_flag(parser)

    def run(self, *args, **options):
        if options['points'] < 1:
            self.usage_error('--points must be positive')
        self.echo_config({
            'extracted_mesh': options['extracted_mesh'], 'gt_mesh': options['gt_mesh'],
            'points': options['points'], 'seed': options['seed'],
        })
        mesh = mesh_load(options['extracted_mesh'])
        reference = mesh_load(options['gt_mesh'])
        report = evaluate_meshes(mesh, reference, options['points'], options['seed'])
        data = EvalReportSerializer(report).data
        self.write_pairs(data)
        if not report.ok:
            raise CommandError(report.error, returncode=DOMAIN_ERROR)
