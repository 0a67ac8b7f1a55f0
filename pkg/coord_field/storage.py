"""
FieldFile: little-endian header
    magic "CFFD", version u32, V u32, bounds 6 x f32, L u32, valid count u64
followed by one record per valid cell: index u32, quaternion 4 x f32,
origin 3 x f32, latent L x f32.
"""
import struct
from pathlib import Path

import numpy as np

from cofie.files import atomic_write
from geom_core.exceptions import IoError

from .exceptions import FieldFormatError
from .field import CoordinateField
from .grid import VoxelGrid

MAGIC = b'CFFD'
VERSION = 1
HEADER = struct.Struct('<4sII6fIQ')


def _record_dtype(latent_size):
    return np.dtype([
        ('cell', '<u4'), ('quaternion', '<f4', (4,)), ('origin', '<f4', (3,)), ('latent', '<f4', (latent_size,)),
    ])


def field_bytes(field):
    grid = field.grid
    header = HEADER.pack(MAGIC, VERSION, grid.resolution, *grid.bounds, field.latent_size, len(field))
    records = np.empty(len(field), dtype=_record_dtype(field.latent_size))
    records['cell'] = field.cells
    records['quaternion'] = field.quaternions
    records['origin'] = field.origins
    records['latent'] = field.latents
    return header + records.tobytes()


def save_field(field, path):
    try:
        atomic_write(path, field_bytes(field))
    except OSError as exc:
        raise IoError(f"cannot write field {path}: {exc}", path=str(path)) from exc


def load_field(path):
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read field {path}: {exc}", path=str(path)) from exc
    if len(data) < HEADER.size:
        raise FieldFormatError(f"{path} is truncated", path=str(path))
    magic, version, resolution, *rest = HEADER.unpack_from(data)
    bounds, latent_size, count = rest[:6], rest[6], rest[7]
    if magic != MAGIC:
        raise FieldFormatError(f"{path} is not a field file", path=str(path))
    if version != VERSION:
        raise FieldFormatError(f"unsupported field file version {version}", path=str(path))
    dtype = _record_dtype(latent_size)
    expected = HEADER.size + count * dtype.itemsize
    if len(data) != expected:
        raise FieldFormatError(f"{path} holds {len(data)} bytes, expected {expected}", path=str(path))
    records = np.frombuffer(data, dtype=dtype, count=count, offset=HEADER.size)
    grid = VoxelGrid(resolution, bounds, records['cell'])
    field = CoordinateField(grid, records['quaternion'], records['origin'], records['latent'])
    field.renormalize()
    return field
