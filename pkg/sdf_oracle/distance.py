"""
Signed distance to triangle meshes.

Unsigned distance comes from a BVH closest-point query. The sign uses the
angle-weighted pseudonormal of the closest feature for watertight meshes and
a three-ray parity vote otherwise.
"""
import logging

import numpy as np

from geom_core.exceptions import EmptyMesh

from .bvh import TriangleBVH
from .geometry import (
    EDGE_AB, EDGE_BC, EDGE_CA, VERTEX_A, VERTEX_B, VERTEX_C,
    closest_point_on_triangles, ray_hits,
)

logger = logging.getLogger(__name__)

RAY_CHUNK = 512
SCAN_CHUNK = 256

# Axis rays tilted off the axes so they do not graze shared edges of axis-aligned faces
RAY_DIRECTIONS = np.array([
    [1.0, 1.3e-4, 2.9e-4],
    [3.1e-4, 1.0, 1.7e-4],
    [2.3e-4, 3.7e-4, 1.0],
])
RAY_DIRECTIONS /= np.linalg.norm(RAY_DIRECTIONS, axis=1, keepdims=True)


def _corner_angles(corners):
    angles = []
    for i in range(3):
        first = corners[:, (i + 1) % 3] - corners[:, i]
        second = corners[:, (i + 2) % 3] - corners[:, i]
        cosine = np.einsum('ij,ij->i', first, second) / (
            np.linalg.norm(first, axis=1) * np.linalg.norm(second, axis=1)
        )
        angles.append(np.arccos(np.clip(cosine, -1.0, 1.0)))
    return np.stack(angles, axis=1)


def ray_parity_inside(mesh, points):
    """Majority vote over three rays: True where a point is inside the mesh."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    corners = mesh.corners
    a, b, c = (corners[None, :, i] for i in range(3))
    votes = np.zeros(len(points), dtype=np.int64)
    for start in range(0, len(points), RAY_CHUNK):
        origins = points[start:start + RAY_CHUNK, None, :]
        for direction in RAY_DIRECTIONS:
            hits = ray_hits(origins, direction, a, b, c).sum(axis=1)
            votes[start:start + RAY_CHUNK] += hits % 2
    return votes >= 2


class MeshSdf:
    """Callable signed distance oracle for one mesh: (N, 3) -> (N,)."""

    def __init__(self, mesh):
        if mesh.is_empty:
            raise EmptyMesh('cannot build a distance oracle for an empty mesh')
        self.mesh = mesh
        self.watertight = mesh.is_watertight
        self.bvh = TriangleBVH(mesh.corners)
        if self.watertight:
            self._build_pseudonormals()
        else:
            logger.info(f"Mesh with {len(mesh)} faces is not watertight, using ray-parity sign")

    def _build_pseudonormals(self):
        mesh = self.mesh
        normals = mesh.face_normals
        _, face_edges, _ = mesh.edge_topology
        angles = _corner_angles(mesh.corners)
        vertex_normals = np.zeros((len(mesh.vertices), 3))
        for i in range(3):
            np.add.at(vertex_normals, mesh.triangles[:, i], angles[:, i, None] * normals)
        edge_normals = np.zeros((len(mesh.edges), 3))
        for i in range(3):
            np.add.at(edge_normals, face_edges[:, i], normals)
        self.face_normals = normals
        self.face_edges = face_edges
        self.vertex_normals = vertex_normals
        self.edge_normals = edge_normals

    def _feature_normals(self, triangle, feature):
        triangles = self.mesh.triangles
        normals = np.array(self.face_normals[triangle])
        for code, slot in ((EDGE_AB, 0), (EDGE_BC, 1), (EDGE_CA, 2)):
            mask = feature == code
            normals[mask] = self.edge_normals[self.face_edges[triangle[mask], slot]]
        for code, slot in ((VERTEX_A, 0), (VERTEX_B, 1), (VERTEX_C, 2)):
            mask = feature == code
            normals[mask] = self.vertex_normals[triangles[triangle[mask], slot]]
        return normals

    def closest(self, points):
        return self.bvh.closest(points)

    def __call__(self, points):
        points = np.asarray(points, dtype=np.float64)
        single = points.ndim == 1
        points = points.reshape(-1, 3)
        d2, triangle, closest, feature = self.bvh.closest(points)
        distance = np.sqrt(d2)
        if self.watertight:
            normals = self._feature_normals(triangle, feature)
            outward = np.einsum('ij,ij->i', points - closest, normals)
            sign = np.where(outward < 0, -1.0, 1.0)
        else:
            sign = np.where(ray_parity_inside(self.mesh, points), -1.0, 1.0)
        values = sign * distance
        return float(values[0]) if single else values


def mesh_sdf(mesh, p):
    """Signed distance from one point or an (N, 3) array to the mesh."""
    return MeshSdf(mesh)(p)


def triangle_distances(mesh, points):
    """Distances from every point to every triangle, shape (N, M)."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    corners = mesh.corners
    closest, _ = closest_point_on_triangles(
        points[:, None, :], corners[None, :, 0], corners[None, :, 1], corners[None, :, 2],
    )
    return np.linalg.norm(closest - points[:, None, :], axis=2)


def exhaustive_sdf(mesh, points):
    """All-triangles scan with ray-parity sign; O(N * M) reference oracle."""
    if mesh.is_empty:
        raise EmptyMesh('cannot measure distance to an empty mesh')
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    distance = np.concatenate([
        triangle_distances(mesh, points[start:start + SCAN_CHUNK]).min(axis=1)
        for start in range(0, len(points), SCAN_CHUNK)
    ])
    return np.where(ray_parity_inside(mesh, points), -distance, distance)
