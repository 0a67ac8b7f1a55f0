"""
Geometric initialization of the coordinate field from SDF samples.
"""
import logging

import numpy as np

from geom_core.quaternions import rotation_to_quaternion
from sdf_oracle.gradient import estimate_gradients, sdf_gradient

from .exceptions import DegenerateCell
from .field import CoordinateField

logger = logging.getLogger(__name__)

MIN_SAMPLES = 4
RANK_TOLERANCE = 1e-12


def _group_sums(values, starts):
    return np.add.reduceat(values, starts, axis=0)


def _perpendicular(normal):
    axis = np.zeros(3)
    axis[int(np.argmin(np.abs(normal)))] = 1.0
    tangent = axis - normal * (axis @ normal)
    return tangent / np.linalg.norm(tangent)


def frame_rotation(normal, tangent_hint):
    """Rotation whose columns are (n, t, n x t), t taken from the hint projected onto n's plane."""
    normal = normal / np.linalg.norm(normal)
    tangent = tangent_hint - normal * (tangent_hint @ normal)
    length = np.linalg.norm(tangent)
    tangent = tangent / length if length > 1e-9 else _perpendicular(normal)
    return np.column_stack([normal, tangent, np.cross(normal, tangent)])


def init_frames(field, samples, oracle=None, h=None, strict=False):
    """PCA frames for every valid cell of the field.

    Origins move to the cell centers. The normal is the dominant eigenvector
    of the summed gradient outer products, signed along the mean gradient;
    the tangent is the dominant direction of the sample positions in the
    plane orthogonal to it. Gradients come from central differences of
    `oracle` (a vectorized SDF) or, without an oracle, from affine fits over
    neighbouring samples. Latents are kept.

    Cells whose gradients vanish keep world axes and are listed in
    `degenerate`; strict=True raises DegenerateCell instead.
    """
    grid = field.grid
    if len(samples) == 0:
        if strict:
            raise DegenerateCell('no samples to initialize frames from')
        logger.warning('No samples, every cell falls back to world-axis frames')
        result = identity_frames(field)
        result.degenerate = field.cells.copy()
        return result
    if h is None:
        h = 1e-4 * grid.cell_size
    if oracle is not None:
        gradients = sdf_gradient(oracle, samples.positions, h)
    else:
        gradients = estimate_gradients(samples.positions, samples.sdf)

    cells, starts, counts = samples.group_bounds
    rows = field.rows(cells)
    covariance = _group_sums(gradients[:, :, None] * gradients[:, None, :], starts)
    mean_gradient = _group_sums(gradients, starts) / counts[:, None]
    mean_position = _group_sums(samples.positions, starts) / counts[:, None]
    centered = samples.positions - np.repeat(mean_position, counts, axis=0)
    spread = _group_sums(centered[:, :, None] * centered[:, None, :], starts) / counts[:, None, None]

    result = field.copy()
    result.origins = grid.cell_center(field.cells).reshape(len(field), 3)
    result.quaternions = np.tile([1.0, 0.0, 0.0, 0.0], (len(field), 1))
    initialized = np.zeros(len(field), dtype=bool)
    degenerate = []

    _, normal_vectors = np.linalg.eigh(covariance)
    for group, row in enumerate(rows):
        if row < 0:
            continue
        if counts[group] < MIN_SAMPLES or np.trace(covariance[group]) <= RANK_TOLERANCE:
            degenerate.append(int(cells[group]))
            continue
        normal = normal_vectors[group][:, -1]
        if normal @ mean_gradient[group] < 0:
            normal = -normal
        projector = np.eye(3) - np.outer(normal, normal)
        _, tangent_vectors = np.linalg.eigh(projector @ spread[group] @ projector)
        rotation = frame_rotation(normal, tangent_vectors[:, -1])
        result.quaternions[row] = rotation_to_quaternion(rotation)
        initialized[row] = True

    degenerate += [int(cell) for cell in field.cells[~initialized] if int(cell) not in degenerate]
    if degenerate:
        if strict:
            raise DegenerateCell(f"{len(degenerate)} cells have no usable gradients", cells=degenerate)
        logger.warning(f"{len(degenerate)} cells fell back to world-axis frames")
    result.degenerate = np.array(sorted(degenerate), dtype=np.int64)
    return result


def identity_frames(field):
    """World-axis frames at the cell centers; latents kept."""
    result = field.copy()
    result.origins = field.grid.cell_center(field.cells).reshape(len(field), 3)
    result.quaternions = np.tile([1.0, 0.0, 0.0, 0.0], (len(field), 1))
    result.degenerate = np.zeros(0, dtype=np.int64)
    return result


def new_field(grid, latent_size, seed=0, frame_init='pca', samples=None, oracle=None):
    """Fresh field with latents from N(0, 0.01^2) and the requested frame initialization."""
    field = CoordinateField.identity(grid, latent_size, seed=seed)
    if frame_init == 'pca':
        return init_frames(field, samples, oracle)
    if frame_init == 'identity':
        return field
    raise ValueError(f"unknown frame initialization {frame_init!r}")
