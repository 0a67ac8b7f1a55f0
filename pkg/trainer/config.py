"""
Training and inference configuration.

Defaults come from settings.COFIE_TRAINING, COFIE_MODEL and COFIE_INFERENCE;
config files and command-line flags override them field by field.
"""
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from django.conf import settings

from geom_core.exceptions import IoError, ParseError
from neural_sdf.mlp import MlpConfig


@dataclass(frozen=True)
class TrainConfig:
    shapes_per_batch: int = 12
    voxels_per_shape: int = 3000
    points_per_voxel: int = 24
    lr_mlp: float = 5e-4
    lr_frames: float = 1e-3
    lr_latents: float = 1e-3
    iterations: int = 20000
    halving_period: int = 20000
    seed: int = 0
    log_every: int = 100
    frame_init: str = 'pca'
    learn_frames: bool = True
    latent_size: int = 125
    hidden: int = 128
    depth: int = 5
    quadratic_layers: int = 1

    @classmethod
    def from_settings(cls, **overrides):
        training, model = settings.COFIE_TRAINING, settings.COFIE_MODEL
        defaults = {
            'shapes_per_batch': training['SHAPES_PER_BATCH'],
            'voxels_per_shape': training['VOXELS_PER_SHAPE'],
            'points_per_voxel': training['POINTS_PER_VOXEL'],
            'lr_mlp': training['LR_MLP'],
            'lr_frames': training['LR_FRAMES'],
            'lr_latents': training['LR_LATENTS'],
            'iterations': training['ITERATIONS'],
            'halving_period': training['HALVING_PERIOD'],
            'log_every': training['LOG_EVERY'],
            'latent_size': model['LATENT_SIZE'],
            'hidden': model['HIDDEN'],
            'depth': model['DEPTH'],
            'quadratic_layers': model['QUADRATIC_LAYERS'],
        }
        defaults.update(overrides)
        return cls(**defaults)

    @property
    def model_config(self):
        return MlpConfig.build(self.latent_size, self.hidden, self.depth, self.quadratic_layers)

    def with_changes(self, **changes):
        return replace(self, **changes)

    def describe(self):
        return asdict(self)


@dataclass(frozen=True)
class InferConfig:
    lr: float = 5e-4
    iterations: int = 800
    seed: int = 0
    voxels_per_step: int = 3000
    points_per_voxel: int = 24
    # Grid and sampling used when fitting a mesh; None takes the checkpoint's
    resolution: int = None
    per_voxel: int = 24
    # Frame handling; None follows the checkpoint's training config
    frame_init: str = None
    learn_frames: bool = None

    @classmethod
    def from_settings(cls, **overrides):
        defaults = {
            'lr': settings.COFIE_INFERENCE['LR'],
            'iterations': settings.COFIE_INFERENCE['ITERATIONS'],
            'per_voxel': settings.COFIE_SAMPLING['PER_VOXEL'],
        }
        defaults.update(overrides)
        return cls(**defaults)

    def with_changes(self, **changes):
        return replace(self, **changes)

    def describe(self):
        return asdict(self)

    def frames_for(self, checkpoint):
        """(frame_init, learn_frames) used when fitting against `checkpoint`."""
        trained = checkpoint.train_config or {}
        frame_init = self.frame_init or trained.get('frame_init', 'pca')
        learn_frames = self.learn_frames if self.learn_frames is not None else trained.get('learn_frames', True)
        return frame_init, bool(learn_frames)


def config_keys(config_class):
    return [item.name for item in fields(config_class)]


def parse_config_file(path):
    """Read `key = value` lines into a dict of strings; `#` starts a comment."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise IoError(f"cannot read config {path}: {exc}", path=str(path)) from exc
    values = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition('=')
        key, value = key.strip(), value.strip()
        if not sep or not key or not value:
            raise ParseError(f"expected 'key = value', got {raw.strip()!r}", line=number, path=str(path))
        if key in values:
            raise ParseError(f"duplicate key {key!r}", line=number, path=str(path))
        values[key] = value
    return values
