from cli.base import CofieCommand
from geom_core.mesh import mesh_load, mesh_normalize, mesh_save


class Command(CofieCommand):
    help = 'Center a mesh and scale its largest extent into the unit grid bounds'

    def add_arguments(self, parser):
        parser.add_argument('in_mesh', help='Input mesh (v/f text format)')
        parser.add_argument('out_mesh', help='Normalized mesh to write')

    def run(self, *args, **options):
        self.echo_config({'in_mesh': options['in_mesh'], 'out_mesh': options['out_mesh']})
        mesh = mesh_load(options['in_mesh'])
        normalized, scale, offset = mesh_normalize(mesh)
        mesh_save(normalized, options['out_mesh'])
        self.stdout.write(self.style.SUCCESS(
            f"Wrote {options['out_mesh']}: {len(normalized)} triangles, scale {scale:.6g}, "
            f"offset ({offset[0]:.6g}, {offset[1]:.6g}, {offset[2]:.6g})"
        ))
