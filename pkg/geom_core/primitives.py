"""
Procedural closed meshes used by fixtures and the toy corpus.
"""
import numpy as np

from .mesh import TriangleMesh


def _orient_outward(vertices, triangles, interior):
    """Flip faces of a convex mesh so normals point away from an interior point."""
    corners = vertices[triangles]
    normals = np.cross(corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0])
    inward = np.einsum('ij,ij->i', normals, corners.mean(axis=1) - interior) < 0
    triangles = triangles.copy()
    triangles[inward] = triangles[inward][:, [0, 2, 1]]
    return triangles


def icosphere(subdivisions=3, radius=1.0, center=(0.0, 0.0, 0.0)):
    """Geodesic sphere with 20 * 4**subdivisions faces."""
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    vertices = [
        (-1, phi, 0), (1, phi, 0), (-1, -phi, 0), (1, -phi, 0),
        (0, -1, phi), (0, 1, phi), (0, -1, -phi), (0, 1, -phi),
        (phi, 0, -1), (phi, 0, 1), (-phi, 0, -1), (-phi, 0, 1),
    ]
    vertices = [np.array(v, dtype=np.float64) / np.linalg.norm(v) for v in vertices]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    for _ in range(subdivisions):
        midpoints = {}

        def midpoint(i, j):
            key = (min(i, j), max(i, j))
            if key not in midpoints:
                middle = vertices[i] + vertices[j]
                vertices.append(middle / np.linalg.norm(middle))
                midpoints[key] = len(vertices) - 1
            return midpoints[key]

        refined = []
        for i, j, k in faces:
            ij, jk, ki = midpoint(i, j), midpoint(j, k), midpoint(k, i)
            refined += [(i, ij, ki), (j, jk, ij), (k, ki, jk), (ij, jk, ki)]
        faces = refined

    center = np.asarray(center, dtype=np.float64)
    points = np.array(vertices) * radius + center
    triangles = _orient_outward(points, np.array(faces, dtype=np.int64), center)
    return TriangleMesh(points, triangles)


def box(lower=(-0.5, -0.5, -0.5), upper=(0.5, 0.5, 0.5)):
    """Axis-aligned box, 8 vertices and 12 outward triangles."""
    lower = np.asarray(lower, dtype=np.float64)
    upper = np.asarray(upper, dtype=np.float64)
    vertices = np.array([
        [lower[0], lower[1], lower[2]], [upper[0], lower[1], lower[2]],
        [upper[0], upper[1], lower[2]], [lower[0], upper[1], lower[2]],
        [lower[0], lower[1], upper[2]], [upper[0], lower[1], upper[2]],
        [upper[0], upper[1], upper[2]], [lower[0], upper[1], upper[2]],
    ])
    triangles = np.array([
        [0, 2, 1], [0, 3, 2],  # bottom
        [4, 5, 6], [4, 6, 7],  # top
        [0, 1, 5], [0, 5, 4],
        [1, 2, 6], [1, 6, 5],
        [2, 3, 7], [2, 7, 6],
        [3, 0, 4], [3, 4, 7],
    ], dtype=np.int64)
    return TriangleMesh(vertices, _orient_outward(vertices, triangles, 0.5 * (lower + upper)))


def wedge(half_width=0.5, height=0.5, half_length=0.5):
    """Triangular prism along y: a ridge at z = 0 over a flat base at z = -height.

    The two slanted faces meet at the ridge with slope height / half_width.
    """
    profile = np.array([[-half_width, -height], [half_width, -height], [0.0, 0.0]])
    vertices = np.array(
        [[x, -half_length, z] for x, z in profile] + [[x, half_length, z] for x, z in profile],
    )
    triangles = np.array([
        [0, 2, 1], [3, 4, 5],  # end caps
        [0, 1, 4], [0, 4, 3],  # base
        [1, 2, 5], [1, 5, 4],
        [2, 0, 3], [2, 3, 5],
    ], dtype=np.int64)
    interior = vertices.mean(axis=0)
    return TriangleMesh(vertices, _orient_outward(vertices, triangles, interior))


def plane_slab(half_size=3.0, depth=3.0, height=0.0):
    """Watertight slab whose top face is the plane z = height.

    The slab reaches past the [-1, 1]^3 grid so inside the grid only the top
    face is visible.
    """
    return box((-half_size, -half_size, height - depth), (half_size, half_size, height))


def single_triangle(a=(0.0, 0.0, 0.0), b=(1.0, 0.0, 0.0), c=(0.0, 1.0, 0.0)):
    return TriangleMesh(np.array([a, b, c], dtype=np.float64), np.array([[0, 1, 2]]))
