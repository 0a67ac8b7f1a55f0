"""
Triangle meshes: container, ASCII load/save, normalization and surface sampling.
"""
import logging
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from cofie.files import atomic_write

from .exceptions import EmptyMesh, IoError, ParseError

logger = logging.getLogger(__name__)

DEDUPE_TOLERANCE = 1e-9
NORMALIZED_EXTENT = 1.9


@dataclass(eq=False)
class TriangleMesh:
    vertices: np.ndarray
    triangles: np.ndarray
    skipped_lines: int = 0

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if not np.all(np.isfinite(self.vertices)):
            raise ValueError('mesh vertices must be finite')
        if len(self.triangles) and (self.triangles.min() < 0 or self.triangles.max() >= len(self.vertices)):
            raise ValueError('triangle index out of range')

    def __len__(self):
        return len(self.triangles)

    @property
    def is_empty(self):
        return len(self.triangles) == 0

    @cached_property
    def corners(self):
        """(m, 3, 3) array of triangle corner positions."""
        return self.vertices[self.triangles]

    @cached_property
    def face_cross(self):
        a, b, c = self.corners[:, 0], self.corners[:, 1], self.corners[:, 2]
        return np.cross(b - a, c - a)

    @cached_property
    def face_areas(self):
        return 0.5 * np.linalg.norm(self.face_cross, axis=1)

    @cached_property
    def face_normals(self):
        lengths = np.linalg.norm(self.face_cross, axis=1, keepdims=True)
        with np.errstate(invalid='ignore', divide='ignore'):
            return np.where(lengths > 0, self.face_cross / lengths, 0.0)

    @cached_property
    def edge_topology(self):
        """(edges, face_edges, counts): unique undirected edges, per-face edge ids, faces per edge.

        face_edges[f] lists the edges (v0,v1), (v1,v2), (v2,v0) of face f.
        """
        directed = np.concatenate([
            self.triangles[:, [0, 1]], self.triangles[:, [1, 2]], self.triangles[:, [2, 0]],
        ])
        undirected = np.sort(directed, axis=1)
        edges, inverse, counts = np.unique(undirected, axis=0, return_inverse=True, return_counts=True)
        face_edges = inverse.reshape(3, -1).T
        return edges, face_edges, counts

    @property
    def edges(self):
        return self.edge_topology[0]

    @cached_property
    def is_watertight(self):
        if self.is_empty:
            return False
        return bool(np.all(self.edge_topology[2] == 2))

    @property
    def bounds(self):
        if len(self.vertices) == 0:
            raise EmptyMesh('mesh has no vertices')
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    @property
    def max_edge_length(self):
        edges = self.edges
        return float(np.linalg.norm(self.vertices[edges[:, 0]] - self.vertices[edges[:, 1]], axis=1).max())

    @property
    def area(self):
        return float(self.face_areas.sum())

    def transformed(self, scale=1.0, offset=(0.0, 0.0, 0.0)):
        return TriangleMesh(self.vertices * scale + np.asarray(offset, dtype=np.float64), self.triangles.copy())


def clean_mesh(vertices, triangles):
    """Merge vertices closer than DEDUPE_TOLERANCE and drop zero-area triangles."""
    vertices = np.asarray(vertices, dtype=np.float64).reshape(-1, 3)
    triangles = np.asarray(triangles, dtype=np.int64).reshape(-1, 3)
    if len(vertices) == 0:
        return TriangleMesh(vertices, triangles)

    keys = np.round(vertices / DEDUPE_TOLERANCE).astype(np.int64)
    _, first, inverse = np.unique(keys, axis=0, return_index=True, return_inverse=True)
    # Keep surviving vertices in first-occurrence order
    order = np.argsort(first, kind='stable')
    remap = np.empty(len(order), dtype=np.int64)
    remap[order] = np.arange(len(order))
    vertices = vertices[first[order]]
    triangles = remap[inverse.reshape(-1)][triangles] if len(triangles) else triangles

    if len(triangles):
        corners = vertices[triangles]
        cross = np.cross(corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0])
        keep = np.linalg.norm(cross, axis=1) > 0
        dropped = int((~keep).sum())
        if dropped:
            logger.debug(f"Dropped {dropped} zero-area triangles")
        triangles = triangles[keep]
    return TriangleMesh(vertices, triangles)


def mesh_load(path):
    """Read an ASCII `v x y z` / `f i j k` mesh (1-based indices)."""
    path = Path(path)
    try:
        text = path.read_text()
    except (OSError, UnicodeDecodeError) as exc:
        raise IoError(f"cannot read mesh {path}: {exc}", path=str(path)) from exc

    vertices = []
    faces = []
    face_lines = []
    skipped = 0
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith('#'):
            continue
        tokens = line.split()
        if tokens[0] == 'v':
            if len(tokens) != 4:
                raise ParseError(f"vertex needs 3 coordinates, got {len(tokens) - 1}", line=number)
            try:
                vertex = [float(token) for token in tokens[1:]]
            except ValueError:
                raise ParseError(f"invalid vertex coordinate in {line!r}", line=number)
            if not np.all(np.isfinite(vertex)):
                raise ParseError('vertex coordinates must be finite', line=number)
            vertices.append(vertex)
        elif tokens[0] == 'f':
            if len(tokens) != 4:
                raise ParseError(f"only triangles are supported, got {len(tokens) - 1} indices", line=number)
            try:
                face = [int(token) for token in tokens[1:]]
            except ValueError:
                raise ParseError(f"invalid face index in {line!r}", line=number)
            if min(face) < 1:
                raise ParseError(f"face indices are 1-based, got {min(face)}", line=number)
            faces.append(face)
            face_lines.append(number)
        else:
            skipped += 1

    for face, number in zip(faces, face_lines):
        if max(face) > len(vertices):
            raise ParseError(f"face index {max(face)} exceeds vertex count {len(vertices)}", line=number)

    if skipped:
        logger.warning(f"Skipped {skipped} unsupported lines in {path}")

    mesh = clean_mesh(vertices, np.asarray(faces, dtype=np.int64).reshape(-1, 3) - 1)
    mesh.skipped_lines = skipped
    return mesh


def mesh_save(mesh, path):
    lines = [f"v {x:.9g} {y:.9g} {z:.9g}" for x, y, z in mesh.vertices]
    lines += [f"f {i + 1} {j + 1} {k + 1}" for i, j, k in mesh.triangles]
    try:
        atomic_write(path, '\n'.join(lines) + '\n')
    except OSError as exc:
        raise IoError(f"cannot write mesh {path}: {exc}", path=str(path)) from exc


def mesh_normalize(mesh):
    """Center the bounding box at the origin and scale its max extent to 1.9.

    Returns (mesh, scale, offset) with new = scale * old + offset.
    """
    if mesh.is_empty:
        raise EmptyMesh('cannot normalize an empty mesh')
    lower, upper = mesh.bounds
    extent = float((upper - lower).max())
    if extent <= 0:
        raise EmptyMesh('mesh has zero extent')
    scale = NORMALIZED_EXTENT / extent
    offset = -scale * 0.5 * (lower + upper)
    return mesh.transformed(scale, offset), scale, offset


def mesh_sample_surface(mesh, n, seed, return_faces=False):
    """n points area-proportional over the triangles, uniform inside each."""
    if n <= 0:
        raise ValueError('n must be positive')
    if mesh.is_empty or mesh.area <= 0:
        raise EmptyMesh('cannot sample an empty mesh')
    rng = np.random.default_rng(seed)
    areas = mesh.face_areas
    faces = rng.choice(len(areas), size=n, p=areas / areas.sum())
    r1 = np.sqrt(rng.random(n))[:, None]
    r2 = rng.random(n)[:, None]
    a, b, c = (mesh.corners[faces, i] for i in range(3))
    points = (1.0 - r1) * a + r1 * (1.0 - r2) * b + r1 * r2 * c
    if return_faces:
        return points, faces
    return points
