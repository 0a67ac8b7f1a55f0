"""
SampleSet file: little-endian header
    magic "CFSM", version u32, V u32, bounds 6 x f32, sample count u64
followed by one record per sample: voxel u32, position 3 x f32, sdf f32.
"""
import struct
from pathlib import Path

import numpy as np

from cofie.files import atomic_write
from geom_core.exceptions import IoError

from .exceptions import SampleFormatError
from .sampling import SampleSet

MAGIC = b'CFSM'
VERSION = 1
HEADER = struct.Struct('<4sII6fQ')
RECORD = np.dtype([('voxel', '<u4'), ('position', '<f4', (3,)), ('sdf', '<f4')])


def sample_set_bytes(samples):
    header = HEADER.pack(MAGIC, VERSION, samples.resolution, *samples.bounds, len(samples))
    records = np.empty(len(samples), dtype=RECORD)
    records['voxel'] = samples.voxels
    records['position'] = samples.positions
    records['sdf'] = samples.sdf
    return header + records.tobytes()


def save_sample_set(samples, path):
    try:
        atomic_write(path, sample_set_bytes(samples))
    except OSError as exc:
        raise IoError(f"cannot write samples {path}: {exc}", path=str(path)) from exc


def is_sample_file(path):
    try:
        with open(path, 'rb') as handle:
            return handle.read(4) == MAGIC
    except OSError:
        return False


def load_sample_set(path):
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read samples {path}: {exc}", path=str(path)) from exc
    if len(data) < HEADER.size:
        raise SampleFormatError(f"{path} is truncated", path=str(path))
    magic, version, resolution, *rest = HEADER.unpack_from(data)
    bounds, count = rest[:6], rest[6]
    if magic != MAGIC:
        raise SampleFormatError(f"{path} is not a sample file", path=str(path))
    if version != VERSION:
        raise SampleFormatError(f"unsupported sample file version {version}", path=str(path))
    expected = HEADER.size + count * RECORD.itemsize
    if len(data) != expected:
        raise SampleFormatError(f"{path} holds {len(data)} bytes, expected {expected}", path=str(path))
    records = np.frombuffer(data, dtype=RECORD, count=count, offset=HEADER.size)
    return SampleSet(resolution, bounds, records['voxel'], records['position'], records['sdf'])
