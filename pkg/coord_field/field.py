"""
The coordinate field: one rigid frame and one latent code per valid cell.

Frames map world points into the cell's local frame x_v = R^T (x - o), where
the columns of R are (n, t, n x t).
"""
from dataclasses import dataclass, field

import numpy as np

from geom_core.quaternions import normalize_quaternion, quaternion_to_rotation


@dataclass(frozen=True)
class CoordinateFrame:
    rotation: np.ndarray
    origin: np.ndarray

    @classmethod
    def identity(cls, origin=(0.0, 0.0, 0.0)):
        return cls(np.array([1.0, 0.0, 0.0, 0.0]), np.asarray(origin, dtype=np.float64))

    @property
    def matrix(self):
        return quaternion_to_rotation(self.rotation)

    @property
    def normal(self):
        return self.matrix[:, 0]

    @property
    def tangent(self):
        return self.matrix[:, 1]


def world_to_local(frame, p):
    """R^T (p - o) for one point or an (N, 3) array."""
    points = np.asarray(p, dtype=np.float64)
    return (points - frame.origin) @ frame.matrix


def local_to_world(frame, x):
    local = np.asarray(x, dtype=np.float64)
    return local @ frame.matrix.T + frame.origin


def batch_world_to_local(quaternions, origins, points):
    """Per-row transform with per-row frames, all arrays of length N."""
    rotations = quaternion_to_rotation(quaternions)
    return np.einsum('nji,nj->ni', rotations, points - origins)


@dataclass(eq=False)
class CoordinateField:
    """Frames and latents of the valid cells of one shape.

    Rows follow the sorted `cells` array; the state is kept in float64.
    """

    grid: object
    quaternions: np.ndarray
    origins: np.ndarray
    latents: np.ndarray
    degenerate: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __post_init__(self):
        count = len(self.grid.valid)
        self.quaternions = np.asarray(self.quaternions, dtype=np.float64).reshape(count, 4)
        self.origins = np.asarray(self.origins, dtype=np.float64).reshape(count, 3)
        self.latents = np.asarray(self.latents, dtype=np.float64).reshape(count, -1)
        self.degenerate = np.asarray(self.degenerate, dtype=np.int64)

    @classmethod
    def identity(cls, grid, latent_size, seed=0, sigma=0.01):
        """Identity frames at the cell centers, latents from N(0, sigma^2)."""
        count = len(grid.valid)
        quaternions = np.tile([1.0, 0.0, 0.0, 0.0], (count, 1))
        rng = np.random.default_rng(seed)
        latents = sigma * rng.standard_normal((count, latent_size))
        return cls(grid, quaternions, grid.cell_center(grid.valid).reshape(count, 3), latents)

    @property
    def cells(self):
        return self.grid.valid

    @property
    def latent_size(self):
        return self.latents.shape[1]

    def __len__(self):
        return len(self.grid.valid)

    def rows(self, cells):
        """Row index of each cell; -1 where the cell is not valid."""
        cells = np.asarray(cells, dtype=np.int64)
        if len(self.cells) == 0:
            return np.full(cells.shape, -1, dtype=np.int64)
        position = np.minimum(np.searchsorted(self.cells, cells), len(self.cells) - 1)
        return np.where(self.cells[position] == cells, position, -1)

    def frame(self, cell):
        row = int(self.rows(cell))
        if row < 0:
            raise KeyError(f"cell {cell} is not valid")
        return CoordinateFrame(self.quaternions[row].copy(), self.origins[row].copy())

    def latent(self, cell):
        row = int(self.rows(cell))
        if row < 0:
            raise KeyError(f"cell {cell} is not valid")
        return self.latents[row]

    def to_local(self, rows, points):
        return batch_world_to_local(self.quaternions[rows], self.origins[rows], points)

    def renormalize(self):
        self.quaternions = normalize_quaternion(self.quaternions)

    def copy(self):
        return CoordinateField(
            self.grid, self.quaternions.copy(), self.origins.copy(), self.latents.copy(), self.degenerate.copy(),
        )
