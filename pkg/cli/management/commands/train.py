from pathlib import Path

from cli.base import CofieCommand
from sdf_oracle.storage import is_sample_file, load_sample_set
from trainer.checkpoint import save_checkpoint
from trainer.config import TrainConfig, parse_config_file
from trainer.serializers import TrainConfigSerializer
from trainer.training import shape_from_samples, train


def collect_sample_files(paths):
    """Expand directories into the sample files they hold, sorted by name."""
    files = []
    for entry in map(Path, paths):
        if entry.is_dir():
            files += [path for path in sorted(entry.iterdir()) if path.is_file() and is_sample_file(path)]
        else:
            files.append(entry)
    return files


def resolve_train_config(config_path=None, seed=None):
    """Settings defaults, then the config file, then --seed."""
    base = TrainConfig.from_settings()
    if config_path:
        serializer = TrainConfigSerializer(data=parse_config_file(config_path), context={'base': base})
        serializer.is_valid(raise_exception=True)
        base = serializer.save()
    if seed is not None:
        base = base.with_changes(seed=seed)
    return base


class Command(CofieCommand):
    help = 'Train the shared decoder, frames and latents over a set of sample files'

    def add_arguments(self, parser):
        parser.add_argument('sample_dirs', nargs='+', help='Sample files or directories of sample files')
        parser.add_argument('out_checkpoint', help='Checkpoint file to write')
        parser.add_argument('--config', help='Training config file (key = value lines)')
        parser.add_argument('--seed', type=int, help='Seed overriding the config')

    def run(self, *args, **options):
        cfg = resolve_train_config(options['config'], options['seed'])
        files = collect_sample_files(options['sample_dirs'])
        if not files:
            self.usage_error('no sample files found in ' + ', '.join(options['sample_dirs']))
        self.echo_config({**cfg.describe(), 'samples': [str(path) for path in files]})

        shapes = [
            shape_from_samples(load_sample_set(path), cfg.latent_size, cfg.seed + index, cfg.frame_init)
            for index, path in enumerate(files)
        ]
        result = train(shapes, cfg)
        save_checkpoint(result.checkpoint, options['out_checkpoint'])
        final = result.checkpoint.loss_history[-1] if result.checkpoint.loss_history else None
        self.stdout.write(self.style.SUCCESS(
            f"Wrote {options['out_checkpoint']} after {result.checkpoint.iteration} iterations"
            + (f", final mean L1 {final:.6g}" if final is not None else '')
        ))
