from django.conf import settings

from cli.base import CofieCommand
from coord_field.storage import load_field
from geom_core.mesh import mesh_save
from surface_extract.metrics import extract
from trainer.checkpoint import load_checkpoint


class Command(CofieCommand):
    help = 'Extract the zero level set of a fitted field as a triangle mesh'

    def add_arguments(self, parser):
        parser.add_argument('checkpoint', help='Trained checkpoint')
        parser.add_argument('field', help='Field file from the fit command')
        parser.add_argument('out_mesh', help='Mesh to write')
        parser.add_argument('--res', type=int, default=settings.COFIE_EXTRACTION['RESOLUTION'],
                            help='Marching cubes lattice resolution (default: %(default)s)')

    def run(self, *args, **options):
        if options['res'] < 8:
            self.usage_error('--res must be at least 8')
        self.echo_config({
            'checkpoint': options['checkpoint'], 'field': options['field'], 'res': options['res'],
        })
        checkpoint = load_checkpoint(options['checkpoint'])
        field = load_field(options['field'])
        mesh = extract(field, checkpoint, options['res'])
        mesh_save(mesh, options['out_mesh'])
        if mesh.is_empty:
            self.stdout.write(self.style.WARNING(f"Wrote {options['out_mesh']}: no surface crossed the lattice"))
            return
        self.stdout.write(self.style.SUCCESS(
            f"Wrote {options['out_mesh']}: {len(mesh.vertices)} vertices, {len(mesh)} triangles"
        ))
