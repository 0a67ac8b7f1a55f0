"""
Sparse voxel grid over an axis-aligned domain.

Cells are addressed by a linear index (i * V + j) * V + k, i along x.
"""
from dataclasses import dataclass, field

import numpy as np

from geom_core.exceptions import EmptyMesh

PAIR_CHUNK = 200000


@dataclass(eq=False)
class VoxelGrid:
    resolution: int
    bounds: tuple = (-1.0, -1.0, -1.0, 1.0, 1.0, 1.0)
    valid: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __post_init__(self):
        if int(self.resolution) < 2:
            raise ValueError(f"grid resolution must be >= 2, got {self.resolution}")
        self.resolution = int(self.resolution)
        self.bounds = tuple(float(value) for value in self.bounds)
        if len(self.bounds) != 6 or not all(np.isfinite(self.bounds)):
            raise ValueError('bounds must be six finite numbers')
        if np.any(self.upper <= self.lower):
            raise ValueError('bounds must be non-degenerate')
        self.valid = np.unique(np.asarray(self.valid, dtype=np.int64))
        if len(self.valid) and (self.valid[0] < 0 or self.valid[-1] >= self.cell_count):
            raise ValueError('valid cell index out of range')

    @property
    def lower(self):
        return np.array(self.bounds[:3])

    @property
    def upper(self):
        return np.array(self.bounds[3:])

    @property
    def cell_count(self):
        return self.resolution ** 3

    @property
    def cell_sizes(self):
        return (self.upper - self.lower) / self.resolution

    @property
    def cell_size(self):
        """Largest cell edge; the grid is cubic in the default [-1, 1]^3 domain."""
        return float(self.cell_sizes.max())

    @property
    def cell_half_diagonal(self):
        return 0.5 * float(np.linalg.norm(self.cell_sizes))

    def ravel(self, ijk):
        ijk = np.asarray(ijk, dtype=np.int64)
        return (ijk[..., 0] * self.resolution + ijk[..., 1]) * self.resolution + ijk[..., 2]

    def cell_ijk(self, index):
        index = np.asarray(index, dtype=np.int64)
        ijk = np.stack(np.unravel_index(index, (self.resolution,) * 3), axis=-1)
        return tuple(int(value) for value in ijk) if ijk.ndim == 1 else ijk

    def cell_center(self, index):
        ijk = np.asarray(np.unravel_index(np.asarray(index, dtype=np.int64), (self.resolution,) * 3))
        return self.lower + (np.moveaxis(ijk, 0, -1) + 0.5) * self.cell_sizes

    def is_valid(self, index):
        position = np.searchsorted(self.valid, index)
        position = np.minimum(position, max(len(self.valid) - 1, 0))
        return len(self.valid) > 0 and self.valid[position] == index

    def with_valid(self, valid):
        return VoxelGrid(self.resolution, self.bounds, valid)

    def describe(self):
        return {'resolution': self.resolution, 'bounds': list(self.bounds), 'valid': len(self.valid)}


def voxel_indices(grid, points):
    """Vectorized voxel_of: linear indices, -1 for points outside the bounds.

    Points on shared faces belong to the higher cell; the upper bound clamps
    to the last cell.
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    inside = np.all((points >= grid.lower) & (points <= grid.upper), axis=1)
    ijk = np.floor((points - grid.lower) / grid.cell_sizes).astype(np.int64)
    ijk = np.clip(ijk, 0, grid.resolution - 1)
    return np.where(inside, grid.ravel(ijk), -1)


def voxel_of(grid, p):
    index = int(voxel_indices(grid, p)[0])
    return None if index < 0 else index


def triangle_box_overlap(triangles, centers, half):
    """Separating-axis test between triangles (n, 3, 3) and boxes (n, 3).

    Touching counts as overlap.
    """
    tri = np.asarray(triangles, dtype=np.float64) - np.asarray(centers, dtype=np.float64)[:, None, :]
    half = np.broadcast_to(np.asarray(half, dtype=np.float64), (len(tri), 3))
    v0, v1, v2 = tri[:, 0], tri[:, 1], tri[:, 2]

    # Box face normals
    separated = np.any((tri.min(axis=1) > half) | (tri.max(axis=1) < -half), axis=1)

    edges = (v1 - v0, v2 - v1, v0 - v2)

    # Triangle normal
    normal = np.cross(edges[0], edges[1])
    offset = np.einsum('ij,ij->i', normal, v0)
    radius = np.einsum('ij,ij->i', half, np.abs(normal))
    separated |= np.abs(offset) > radius

    # Edge x box-axis cross products
    for edge in edges:
        for axis in range(3):
            unit = np.zeros(3)
            unit[axis] = 1.0
            direction = np.cross(edge, unit)
            projected = np.stack([np.einsum('ij,ij->i', vertex, direction) for vertex in (v0, v1, v2)], axis=1)
            radius = np.einsum('ij,ij->i', half, np.abs(direction))
            separated |= (projected.min(axis=1) > radius) | (projected.max(axis=1) < -radius)
    return ~separated


def _candidate_pairs(grid, corners):
    """(triangle, cell ijk) pairs whose closed bounding boxes touch."""
    lo = np.ceil((corners.min(axis=1) - grid.lower) / grid.cell_sizes).astype(np.int64) - 1
    hi = np.floor((corners.max(axis=1) - grid.lower) / grid.cell_sizes).astype(np.int64)
    lo = np.clip(lo, 0, grid.resolution - 1)
    hi = np.clip(hi, 0, grid.resolution - 1)
    # Drop triangles entirely outside the domain
    outside = np.any((corners.max(axis=1) < grid.lower) | (corners.min(axis=1) > grid.upper), axis=1)
    extent = np.where(outside[:, None], 0, hi - lo + 1)
    counts = extent.prod(axis=1)
    triangle = np.repeat(np.arange(len(corners)), counts)
    local = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
    ext = extent[triangle]
    di = local // (ext[:, 1] * ext[:, 2])
    dj = (local // ext[:, 2]) % ext[:, 1]
    dk = local % ext[:, 2]
    ijk = lo[triangle] + np.stack([di, dj, dk], axis=1)
    return triangle, ijk


def build_grid(mesh, resolution, bounds=(-1.0, -1.0, -1.0, 1.0, 1.0, 1.0)):
    """Grid whose valid cells are those intersecting at least one triangle."""
    if mesh.is_empty:
        raise EmptyMesh('cannot build a grid for an empty mesh')
    grid = VoxelGrid(resolution, bounds)
    corners = mesh.corners
    triangle, ijk = _candidate_pairs(grid, corners)
    half = 0.5 * grid.cell_sizes
    valid = []
    for start in range(0, len(triangle), PAIR_CHUNK):
        stop = start + PAIR_CHUNK
        cells = ijk[start:stop]
        centers = grid.lower + (cells + 0.5) * grid.cell_sizes
        hit = triangle_box_overlap(corners[triangle[start:stop]], centers, half)
        valid.append(grid.ravel(cells[hit]))
    return grid.with_valid(np.concatenate(valid) if valid else [])


def cell_intersects_mesh(grid, index, mesh):
    center = grid.cell_center(index)
    corners = mesh.corners
    hit = triangle_box_overlap(corners, np.broadcast_to(center, (len(corners), 3)), 0.5 * grid.cell_sizes)
    return bool(hit.any())
