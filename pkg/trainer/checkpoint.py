"""
Checkpoint file: little-endian header
    magic "CFCK", version u32, depth u32, k u32, widths (depth + 1) x u32
followed by the decoder parameters layer-major (T, A, b per layer), row-major
float32. Training metadata lives in a `<checkpoint>.meta.json` sidecar.
"""
import io
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from rest_framework.parsers import JSONParser
from rest_framework.renderers import JSONRenderer

from cofie.files import atomic_write
from geom_core.exceptions import IoError
from neural_sdf.mlp import MlpConfig, MlpParams, init_params

from .exceptions import VersionMismatch
from .serializers import CheckpointMetaSerializer

logger = logging.getLogger(__name__)

MAGIC = b'CFCK'
VERSION = 1
HEADER = struct.Struct('<4sIII')


@dataclass(eq=False)
class Checkpoint:
    params: MlpParams
    iteration: int = 0
    loss_history: list = field(default_factory=list)
    resolution: int = None
    bounds: tuple = (-1.0, -1.0, -1.0, 1.0, 1.0, 1.0)
    train_config: dict = field(default_factory=dict)

    @property
    def config(self):
        return self.params.config

    @classmethod
    def initial(cls, config, seed=0, **meta):
        return cls(init_params(config, seed), **meta)

    def meta(self):
        return {
            'iteration': self.iteration,
            'loss_history': [float(value) for value in self.loss_history],
            'resolution': self.resolution,
            'bounds': [float(value) for value in self.bounds],
            'train_config': dict(self.train_config),
        }


def meta_path(path):
    path = Path(path)
    return path.with_name(f"{path.name}.meta.json")


def checkpoint_bytes(checkpoint):
    config = checkpoint.config
    header = HEADER.pack(MAGIC, VERSION, config.depth, config.quadratic_layers)
    widths = np.asarray(config.widths, dtype='<u4').tobytes()
    body = b''.join(
        np.ascontiguousarray(array, dtype='<f4').tobytes() for array in checkpoint.params.named_arrays().values()
    )
    return header + widths + body


def save_checkpoint(checkpoint, path):
    meta = CheckpointMetaSerializer(data=checkpoint.meta())
    meta.is_valid(raise_exception=True)
    try:
        atomic_write(path, checkpoint_bytes(checkpoint))
        atomic_write(meta_path(path), JSONRenderer().render(meta.validated_data))
    except OSError as exc:
        raise IoError(f"cannot write checkpoint {path}: {exc}", path=str(path)) from exc
    logger.info(f"Saved checkpoint {path} at iteration {checkpoint.iteration}")


def _read_meta(path):
    sidecar = meta_path(path)
    if not sidecar.exists():
        return {}
    try:
        data = JSONParser().parse(io.BytesIO(sidecar.read_bytes()))
    except Exception as exc:
        raise IoError(f"unreadable checkpoint metadata {sidecar}: {exc}", path=str(sidecar)) from exc
    meta = CheckpointMetaSerializer(data=data)
    if not meta.is_valid():
        raise IoError(f"invalid checkpoint metadata {sidecar}: {meta.errors}", path=str(sidecar))
    return meta.validated_data


def load_checkpoint(path):
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read checkpoint {path}: {exc}", path=str(path)) from exc
    if len(data) < HEADER.size:
        raise IoError(f"{path} is truncated", path=str(path))
    magic, version, depth, quadratic_layers = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise IoError(f"{path} is not a checkpoint", path=str(path))
    if version != VERSION:
        raise VersionMismatch(f"checkpoint version {version}, reader supports {VERSION}", path=str(path))
    offset = HEADER.size + 4 * (depth + 1)
    if len(data) < offset:
        raise IoError(f"{path} is truncated", path=str(path))
    widths = np.frombuffer(data, dtype='<u4', count=depth + 1, offset=HEADER.size)
    try:
        config = MlpConfig(tuple(int(width) for width in widths), int(quadratic_layers))
    except ValueError as exc:
        raise IoError(f"{path} has an invalid layer layout: {exc}", path=str(path)) from exc

    template = init_params(config)
    arrays = {}
    for name, array in template.named_arrays().items():
        end = offset + 4 * array.size
        if len(data) < end:
            raise IoError(f"{path} is truncated", path=str(path))
        arrays[name] = np.frombuffer(data, dtype='<f4', count=array.size, offset=offset).reshape(array.shape).copy()
        offset = end
    if offset != len(data):
        raise IoError(f"{path} has {len(data) - offset} trailing bytes", path=str(path))
    params = template.with_arrays(arrays)
    if not params.is_finite():
        raise IoError(f"{path} holds non-finite parameters", path=str(path))

    meta = _read_meta(path)
    return Checkpoint(
        params,
        iteration=meta.get('iteration', 0),
        loss_history=list(meta.get('loss_history', [])),
        resolution=meta.get('resolution'),
        bounds=tuple(meta.get('bounds', (-1.0, -1.0, -1.0, 1.0, 1.0, 1.0))),
        train_config=dict(meta.get('train_config', {})),
    )
