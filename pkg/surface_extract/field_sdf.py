"""
Indicator-weighted evaluation of a trained coordinate field.

A point is decoded in the frame and latent of the valid voxel containing it.
Points in an invalid voxel fall back to the nearest valid voxel in the
surrounding 26-cell ring; with none there, or outside the grid, the value is
+1 cell size.
"""
import itertools

import numpy as np

from coord_field.grid import voxel_indices
from neural_sdf.exceptions import ShapeMismatch
from neural_sdf.mlp import decode

CHUNK = 65536
RING = np.array([offset for offset in itertools.product((-1, 0, 1), repeat=3) if offset != (0, 0, 0)])


class FieldSdf:
    """Vectorized SDF of a field under a decoder, callable on (N, 3) points."""

    def __init__(self, field, params):
        if field.latent_size != params.config.latent_size:
            raise ShapeMismatch(
                f"field latents have size {field.latent_size}, decoder expects {params.config.latent_size}",
            )
        self.field = field
        self.params = params
        self.grid = field.grid
        self.sentinel = float(self.grid.cell_size)

    def owner_rows(self, points):
        """Field row used for each point, -1 where the sentinel applies."""
        grid = self.grid
        cells = voxel_indices(grid, points)
        rows = np.full(len(cells), -1, dtype=np.int64)
        inside = cells >= 0
        rows[inside] = self.field.rows(cells[inside])

        missing = np.flatnonzero(inside & (rows < 0))
        if len(missing) == 0 or len(self.field) == 0:
            return rows
        ijk = grid.cell_ijk(cells[missing]).reshape(-1, 3)
        best = np.full(len(missing), np.inf)
        for offset in RING:
            neighbour = ijk + offset
            in_range = np.all((neighbour >= 0) & (neighbour < grid.resolution), axis=1)
            candidate = np.full(len(missing), -1, dtype=np.int64)
            candidate[in_range] = self.field.rows(grid.ravel(neighbour[in_range]))
            usable = candidate >= 0
            if not usable.any():
                continue
            centers = grid.cell_center(self.field.cells[candidate[usable]]).reshape(-1, 3)
            distance = np.linalg.norm(points[missing[usable]] - centers, axis=1)
            better = distance < best[usable]
            chosen = np.flatnonzero(usable)[better]
            best[chosen] = distance[better]
            rows[missing[chosen]] = candidate[chosen]
        return rows

    def __call__(self, points):
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        values = np.full(len(points), self.sentinel)
        rows = self.owner_rows(points)
        decoded = np.flatnonzero(rows >= 0)
        field = self.field
        for start in range(0, len(decoded), CHUNK):
            chunk = decoded[start:start + CHUNK]
            local = field.to_local(rows[chunk], points[chunk])
            values[chunk] = decode(self.params, np.concatenate([local, field.latents[rows[chunk]]], axis=1))
        return values


def blended_sdf(field, checkpoint, x):
    """Value of the field at one point or at an (N, 3) array of points."""
    points = np.asarray(x, dtype=np.float64)
    values = FieldSdf(field, checkpoint.params)(points)
    return float(values[0]) if points.ndim == 1 else values
