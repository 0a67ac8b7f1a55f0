from django.conf import settings

from cli.base import CofieCommand
from coord_field.grid import build_grid
from geom_core.mesh import mesh_load
from sdf_oracle.sampling import build_sample_set
from sdf_oracle.storage import save_sample_set


class Command(CofieCommand):
    help = 'Draw per-voxel SDF supervision samples from a normalized mesh'

    def add_arguments(self, parser):
        parser.add_argument('in_mesh', help='Normalized input mesh')
        parser.add_argument('out_samples', help='Sample file to write')
        parser.add_argument('--grid', type=int, default=settings.COFIE_GRID['RESOLUTION'],
                            help='Voxels per axis (default: %(default)s)')
        parser.add_argument('--per-voxel', type=int, default=settings.COFIE_SAMPLING['PER_VOXEL'],
                            help='Samples per valid voxel (default: %(default)s)')
        parser.add_argument('--seed', type=int, default=0, help='Sampling seed (default: %(default)s)')

    def run(self, *args, **options):
        if options['grid'] < 2:
            self.usage_error('--grid must be at least 2')
        if options['per_voxel'] < 1:
            self.usage_error('--per-voxel must be positive')
        sampling = settings.COFIE_SAMPLING
        self.echo_config({
            'in_mesh': options['in_mesh'],
            'grid': options['grid'],
            'bounds': settings.COFIE_GRID['BOUNDS'],
            'per_voxel': options['per_voxel'],
            'radius_factor': sampling['RADIUS_FACTOR'],
            'near_fraction': sampling['NEAR_FRACTION'],
            'sigma_cells': sampling['SIGMA_CELLS'],
            'seed': options['seed'],
        })
        mesh = mesh_load(options['in_mesh'])
        grid = build_grid(mesh, options['grid'], settings.COFIE_GRID['BOUNDS'])
        samples = build_sample_set(
            mesh, grid, options['per_voxel'], options['seed'],
            radius_factor=sampling['RADIUS_FACTOR'], near_fraction=sampling['NEAR_FRACTION'],
            sigma=sampling['SIGMA_CELLS'] * grid.cell_size,
        )
        save_sample_set(samples, options['out_samples'])
        self.stdout.write(self.style.SUCCESS(
            f"Wrote {len(samples)} samples over {len(grid.valid)} voxels to {options['out_samples']}"
        ))
