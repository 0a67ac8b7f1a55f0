"""
Chamfer-L2 evaluation of extracted surfaces.

chamfer(A, B) = mean_a min_b |a - b|^2 + mean_b min_a |a - b|^2
"""
import logging
import time
from dataclasses import asdict, dataclass

import numpy as np
from scipy.spatial import cKDTree

from geom_core.mesh import mesh_sample_surface

from .exceptions import EmptySet
from .field_sdf import FieldSdf
from .marching import marching_cubes

logger = logging.getLogger(__name__)

REPORT_SCALE = 1e4


def _nearest_sq(source, target):
    distances, _ = cKDTree(target).query(source)
    return distances ** 2


def chamfer_l2(a, b):
    a = np.asarray(a, dtype=np.float64).reshape(-1, 3)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 3)
    if len(a) == 0 or len(b) == 0:
        raise EmptySet('chamfer distance needs two non-empty point sets')
    return float(_nearest_sq(a, b).mean()) + float(_nearest_sq(b, a).mean())


@dataclass
class EvalReport:
    chamfer: float = None
    points: int = 0
    reference_points: int = 0
    resolution: int = None
    seconds: float = 0.0
    triangles: int = None
    error: str = None

    @property
    def chamfer_scaled(self):
        return None if self.chamfer is None else self.chamfer * REPORT_SCALE

    @property
    def ok(self):
        return self.error is None

    def as_dict(self):
        data = asdict(self)
        data['chamfer_x1e4'] = self.chamfer_scaled
        return data


def evaluate_meshes(mesh, reference, n_points=30000, seed=0, resolution=None):
    """Chamfer between two meshes from n_points surface samples of each, same seed."""
    started = time.perf_counter()
    report = EvalReport(resolution=resolution, triangles=len(mesh))
    if mesh.is_empty or mesh.area <= 0:
        report.error = str(EmptySet('extracted surface is empty'))
        report.seconds = time.perf_counter() - started
        return report
    points = mesh_sample_surface(mesh, n_points, seed)
    reference_points = mesh_sample_surface(reference, n_points, seed)
    report.chamfer = chamfer_l2(points, reference_points)
    report.points, report.reference_points = len(points), len(reference_points)
    report.seconds = time.perf_counter() - started
    logger.info(f"chamfer {report.chamfer:.6g} ({report.chamfer_scaled:.4f} x1e-4) over {n_points} points")
    return report


def extract(field, checkpoint, resolution=128):
    return marching_cubes(FieldSdf(field, checkpoint.params), resolution, field.grid.bounds)


def evaluate(field, checkpoint, gt_mesh, mc_resolution=128, n_points=30000, seed=0):
    """Extract the field's surface and compare it with the ground-truth mesh."""
    started = time.perf_counter()
    mesh = extract(field, checkpoint, mc_resolution)
    report = evaluate_meshes(mesh, gt_mesh, n_points, seed, resolution=mc_resolution)
    report.seconds = time.perf_counter() - started
    return report
