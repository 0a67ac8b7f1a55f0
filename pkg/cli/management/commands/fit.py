from django.conf import settings

from cli.base import CofieCommand
from coord_field.storage import save_field
from geom_core.mesh import mesh_load
from sdf_oracle.storage import is_sample_file, load_sample_set
from trainer.checkpoint import load_checkpoint
from trainer.config import InferConfig
from trainer.serializers import InferConfigSerializer
from trainer.training import infer_fit


class Command(CofieCommand):
    help = 'Fit frames and latents of a new shape against a frozen decoder'

    def add_arguments(self, parser):
        parser.add_argument('checkpoint', help='Trained checkpoint')
        parser.add_argument('source', help='Normalized mesh or sample file of the target shape')
        parser.add_argument('out_field', help='Field file to write')
        parser.add_argument('--iters', type=int, default=settings.COFIE_INFERENCE['ITERATIONS'],
                            help='Optimization steps (default: %(default)s)')
        parser.add_argument('--lr', type=float, default=settings.COFIE_INFERENCE['LR'],
                            help='Adam learning rate (default: %(default)s)')

    def run(self, *args, **options):
        serializer = InferConfigSerializer(
            data={'iterations': options['iters'], 'lr': options['lr']},
            context={'base': InferConfig.from_settings()},
        )
        serializer.is_valid(raise_exception=True)
        cfg = serializer.save()
        checkpoint = load_checkpoint(options['checkpoint'])
        self.echo_config({
            **cfg.describe(), 'checkpoint': options['checkpoint'], 'source': options['source'],
            'latent_size': checkpoint.config.latent_size,
        })

        if is_sample_file(options['source']):
            source = load_sample_set(options['source'])
        else:
            source = mesh_load(options['source'])
        field = infer_fit(checkpoint, source, cfg)
        save_field(field, options['out_field'])
        self.stdout.write(self.style.SUCCESS(f"Wrote {options['out_field']}: {len(field)} valid cells"))
