"""
Vectorized marching cubes over a regular lattice.
"""
import logging

import numpy as np

from geom_core.mesh import TriangleMesh

from .tables import CORNER_OFFSETS, EDGE_CORNERS, TRIANGLE_COUNTS, TRIANGLES

logger = logging.getLogger(__name__)

EVAL_CHUNK = 262144
ORIENTATION_SAMPLES = 1000

# Lattice start offset and axis of every cube edge
EDGE_START = np.minimum(CORNER_OFFSETS[EDGE_CORNERS[:, 0]], CORNER_OFFSETS[EDGE_CORNERS[:, 1]])
EDGE_AXIS = np.argmax(np.abs(CORNER_OFFSETS[EDGE_CORNERS[:, 0]] - CORNER_OFFSETS[EDGE_CORNERS[:, 1]]), axis=1)


def sample_lattice(sdf, resolution, bounds):
    """SDF values on the (resolution + 1)^3 lattice, indexed [x, y, z]."""
    lower, upper = np.asarray(bounds[:3], dtype=np.float64), np.asarray(bounds[3:], dtype=np.float64)
    axes = [np.linspace(lower[d], upper[d], resolution + 1) for d in range(3)]
    points = np.stack(np.meshgrid(*axes, indexing='ij'), axis=-1).reshape(-1, 3)
    values = np.concatenate([
        np.asarray(sdf(points[start:start + EVAL_CHUNK]), dtype=np.float64)
        for start in range(0, len(points), EVAL_CHUNK)
    ])
    return values.reshape((resolution + 1,) * 3), lower, (upper - lower) / resolution


def _cube_cases(inside):
    n = inside.shape[0] - 1
    cases = np.zeros((n, n, n), dtype=np.int64)
    for corner, (dx, dy, dz) in enumerate(CORNER_OFFSETS):
        cases |= inside[dx:dx + n, dy:dy + n, dz:dz + n].astype(np.int64) << corner
    return cases


def _orientation_sign(sdf, vertices, triangles, step):
    """+1 when most sampled face normals follow the SDF gradient, else -1."""
    picks = np.unique(np.linspace(0, len(triangles) - 1, min(ORIENTATION_SAMPLES, len(triangles))).astype(np.int64))
    corners = vertices[triangles[picks]]
    normals = np.cross(corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0])
    centroids = corners.mean(axis=1)
    h = 0.25 * float(step.min())
    gradient = np.stack([
        np.asarray(sdf(centroids + h * axis)) - np.asarray(sdf(centroids - h * axis)) for axis in np.eye(3)
    ], axis=1)
    agreement = np.einsum('ij,ij->i', normals, gradient)
    return 1 if np.sum(agreement > 0) >= np.sum(agreement < 0) else -1


def marching_cubes(sdf, resolution, bounds=(-1.0, -1.0, -1.0, 1.0, 1.0, 1.0)):
    """Zero level set of a vectorized SDF ((N, 3) -> (N,)) as a triangle mesh.

    Lattice points with negative values are inside. Vertices on shared
    lattice edges are emitted once; faces are oriented so their normals
    follow the SDF gradient (outward).
    """
    if resolution < 8:
        raise ValueError(f"marching cubes needs resolution >= 8, got {resolution}")
    values, lower, step = sample_lattice(sdf, resolution, bounds)
    size = resolution + 1
    cases = _cube_cases(values < 0)
    active = np.flatnonzero(TRIANGLE_COUNTS[cases.reshape(-1)] > 0)
    if len(active) == 0:
        return TriangleMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))

    cube = np.stack(np.unravel_index(active, (resolution,) * 3), axis=-1)
    edges = TRIANGLES[cases.reshape(-1)[active]]
    slots = edges >= 0
    start = cube[:, None, :] + EDGE_START[np.where(slots, edges, 0)]
    lattice = (start[..., 0] * size + start[..., 1]) * size + start[..., 2]
    edge_ids = EDGE_AXIS[np.where(slots, edges, 0)] * size ** 3 + lattice
    unique_ids, inverse = np.unique(edge_ids[slots], return_inverse=True)
    triangles = inverse.reshape(-1, 3)[:, [0, 2, 1]]

    axis = unique_ids // size ** 3
    first = unique_ids % size ** 3
    strides = np.array([size * size, size, 1])
    v0 = values.reshape(-1)[first]
    v1 = values.reshape(-1)[first + strides[axis]]
    t = v0 / (v0 - v1)
    vertices = lower + np.stack(np.unravel_index(first, (size,) * 3), axis=-1) * step
    vertices[np.arange(len(axis)), axis] += t * step[axis]

    if _orientation_sign(sdf, vertices, triangles, step) < 0:
        triangles = triangles[:, [0, 2, 1]]
    logger.info(f"Extracted {len(triangles)} triangles at resolution {resolution}")
    return TriangleMesh(vertices, triangles)
