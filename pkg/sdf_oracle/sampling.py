"""
Per-voxel supervision samples.

Each valid voxel collects points from a ball of 1.5x its half-diagonal, so
neighbouring voxels see overlapping supervision near their shared faces.
"""
import logging
from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple

import numpy as np

from coord_field.grid import VoxelGrid, build_grid, cell_intersects_mesh

from .distance import MeshSdf, triangle_distances
from .exceptions import NoSurfaceInVoxel
from .geometry import closest_point_on_triangles

logger = logging.getLogger(__name__)

MAX_DRAW_ROUNDS = 64
MAX_DRAW_SIZE = 200000


class SdfSample(NamedTuple):
    position: np.ndarray
    sdf: float
    voxel: int


@dataclass(eq=False)
class SampleSet:
    """Samples grouped by voxel, voxel indices non-decreasing."""

    resolution: int
    bounds: tuple
    voxels: np.ndarray
    positions: np.ndarray
    sdf: np.ndarray

    def __post_init__(self):
        self.resolution = int(self.resolution)
        self.bounds = tuple(float(value) for value in self.bounds)
        self.voxels = np.asarray(self.voxels, dtype=np.int64).reshape(-1)
        self.positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        self.sdf = np.asarray(self.sdf, dtype=np.float64).reshape(-1)
        if not len(self.voxels) == len(self.positions) == len(self.sdf):
            raise ValueError('sample arrays differ in length')
        if len(self.voxels) and np.any(np.diff(self.voxels) < 0):
            raise ValueError('samples must be grouped by voxel in index order')
        if len(self.voxels) and (self.voxels[0] < 0 or self.voxels[-1] >= self.resolution ** 3):
            raise ValueError('sample voxel index out of range')

    def __len__(self):
        return len(self.voxels)

    def __iter__(self):
        for position, sdf, voxel in zip(self.positions, self.sdf, self.voxels):
            yield SdfSample(position, float(sdf), int(voxel))

    @cached_property
    def group_bounds(self):
        """(voxel ids, start offsets, counts) of the voxel groups."""
        cells, starts, counts = np.unique(self.voxels, return_index=True, return_counts=True)
        return cells, starts, counts

    @property
    def cells(self):
        return self.group_bounds[0]

    @property
    def grid(self):
        return VoxelGrid(self.resolution, self.bounds, self.cells)

    def for_voxel(self, voxel):
        cells, starts, counts = self.group_bounds
        position = np.searchsorted(cells, voxel)
        if position == len(cells) or cells[position] != voxel:
            return slice(0, 0)
        return slice(int(starts[position]), int(starts[position] + counts[position]))

    @classmethod
    def concatenate(cls, parts, resolution, bounds):
        parts = list(parts)
        if not parts:
            return cls(resolution, bounds, np.zeros(0), np.zeros((0, 3)), np.zeros(0))
        return cls(
            resolution, bounds,
            np.concatenate([part.voxels for part in parts]),
            np.concatenate([part.positions for part in parts]),
            np.concatenate([part.sdf for part in parts]),
        )


def _barycentric_points(mesh, faces, rng):
    r1 = np.sqrt(rng.random(len(faces)))[:, None]
    r2 = rng.random(len(faces))[:, None]
    corners = mesh.corners[faces]
    return (1.0 - r1) * corners[:, 0] + r1 * (1.0 - r2) * corners[:, 1] + r1 * r2 * corners[:, 2]


def _surface_points_in_ball(mesh, center, radius, count, rng):
    distances = triangle_distances(mesh, center)[0]
    candidates = np.flatnonzero(distances <= radius)
    if len(candidates) == 0:
        raise NoSurfaceInVoxel('no surface inside the sampling ball', center=tuple(center))
    areas = mesh.face_areas[candidates]
    weights = areas / areas.sum()
    # Large triangles mostly fall outside the ball; oversample by the area ratio
    oversample = max(1.0, areas.sum() / (np.pi * radius * radius))
    found = []
    total = 0
    for _ in range(MAX_DRAW_ROUNDS):
        size = min(int(2 * (count - total) * oversample) + 16, MAX_DRAW_SIZE)
        faces = rng.choice(candidates, size=size, p=weights)
        points = _barycentric_points(mesh, faces, rng)
        points = points[np.linalg.norm(points - center, axis=1) <= radius]
        found.append(points)
        total += len(points)
        if total >= count:
            break
    points = np.concatenate(found)
    if len(points) < count:
        # Sliver of surface inside the ball: reuse the nearest surface points
        corners = mesh.corners[candidates]
        nearest, _ = closest_point_on_triangles(center, corners[:, 0], corners[:, 1], corners[:, 2])
        filler = np.resize(nearest, (count - len(points), 3))
        points = np.concatenate([points, filler])
    return points[:count]


def _perturb_within_ball(points, center, radius, sigma, rng):
    noisy = points + sigma * rng.standard_normal(points.shape)
    for _ in range(MAX_DRAW_ROUNDS):
        outside = np.linalg.norm(noisy - center, axis=1) > radius
        if not outside.any():
            return noisy
        noisy[outside] = points[outside] + sigma * rng.standard_normal((int(outside.sum()), 3))
    offset = noisy - center
    length = np.linalg.norm(offset, axis=1, keepdims=True)
    scale = np.where(length > radius, radius / np.maximum(length, 1e-300), 1.0)
    return center + offset * scale


def _voxel_positions(mesh, grid, voxel, n, radius_factor, near_fraction, sigma, seed):
    if sigma is None:
        sigma = 0.25 * grid.cell_size
    rng = np.random.default_rng([int(seed), voxel])
    center = grid.cell_center(voxel)
    radius = radius_factor * grid.cell_half_diagonal
    half_side = 0.5 * radius_factor * grid.cell_sizes

    near_count = int(round(near_fraction * n))
    surface = _surface_points_in_ball(mesh, center, radius, near_count, rng) if near_count else np.zeros((0, 3))
    near = _perturb_within_ball(surface, center, radius, sigma, rng)
    uniform = center + rng.uniform(-half_side, half_side, (n - near_count, 3))
    return np.concatenate([near, uniform])


def sample_voxel_points(mesh, grid, voxel, n, radius_factor=1.5, near_fraction=0.8, sigma=None,
                        seed=0, oracle=None):
    """Supervision samples for one voxel.

    near_fraction of the points are surface points inside the expanded voxel
    ball perturbed by isotropic noise of scale sigma (default a quarter cell);
    the rest are uniform in the expanded box. Deterministic per (voxel, seed).
    """
    if n <= 0:
        raise ValueError('n must be positive')
    voxel = int(voxel)
    if not cell_intersects_mesh(grid, voxel, mesh):
        raise NoSurfaceInVoxel(f"voxel {voxel} does not intersect the mesh", voxel=voxel)
    positions = _voxel_positions(mesh, grid, voxel, n, radius_factor, near_fraction, sigma, seed)
    oracle = oracle or MeshSdf(mesh)
    return SampleSet(grid.resolution, grid.bounds, np.full(n, voxel), positions, oracle(positions))


def build_sample_set(mesh, grid, per_voxel, seed, radius_factor=1.5, near_fraction=0.8, sigma=None):
    """Samples for every valid voxel of the grid, merged in voxel order."""
    if per_voxel <= 0:
        raise ValueError('per_voxel must be positive')
    if len(grid.valid) == 0:
        grid = build_grid(mesh, grid.resolution, grid.bounds)
    positions = np.concatenate([
        _voxel_positions(mesh, grid, int(voxel), per_voxel, radius_factor, near_fraction, sigma, seed)
        for voxel in grid.valid
    ])
    voxels = np.repeat(grid.valid, per_voxel)
    samples = SampleSet(grid.resolution, grid.bounds, voxels, positions, MeshSdf(mesh)(positions))
    logger.info(f"Sampled {len(samples)} points over {len(grid.valid)} voxels (V={grid.resolution})")
    return samples
