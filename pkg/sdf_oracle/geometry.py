"""
Vectorized point-triangle and ray-triangle primitives.
"""
import numpy as np

# Closest-feature codes
FACE = 0
EDGE_AB = 1
EDGE_BC = 2
EDGE_CA = 3
VERTEX_A = 4
VERTEX_B = 5
VERTEX_C = 6


def _dot(u, v):
    return np.einsum('...i,...i->...', u, v)


def _safe_ratio(numerator, denominator):
    with np.errstate(divide='ignore', invalid='ignore'):
        return np.where(denominator != 0, numerator / denominator, 0.0)


def closest_point_on_triangles(points, a, b, c):
    """Closest point on triangle (a, b, c) to each point, with its feature code.

    All inputs broadcast against each other with a trailing axis of 3.
    Returns (closest, feature).
    """
    points, a, b, c = np.broadcast_arrays(
        *(np.asarray(value, dtype=np.float64) for value in (points, a, b, c))
    )
    ab = b - a
    ac = c - a
    ap = points - a
    d1 = _dot(ab, ap)
    d2 = _dot(ac, ap)
    bp = points - b
    d3 = _dot(ab, bp)
    d4 = _dot(ac, bp)
    cp = points - c
    d5 = _dot(ab, cp)
    d6 = _dot(ac, cp)
    vc = d1 * d4 - d3 * d2
    vb = d5 * d2 - d1 * d6
    va = d3 * d6 - d5 * d4

    shape = d1.shape
    feature = np.full(shape, FACE, dtype=np.int8)
    closest = np.empty(points.shape)
    assigned = np.zeros(shape, dtype=bool)

    def assign(mask, code, value):
        mask = mask & ~assigned
        feature[mask] = code
        closest[mask] = value[mask]
        assigned[mask] = True

    assign((d1 <= 0) & (d2 <= 0), VERTEX_A, a)
    assign((d3 >= 0) & (d4 <= d3), VERTEX_B, b)
    v = _safe_ratio(d1, d1 - d3)
    assign((vc <= 0) & (d1 >= 0) & (d3 <= 0), EDGE_AB, a + v[..., None] * ab)
    assign((d6 >= 0) & (d5 <= d6), VERTEX_C, c)
    w = _safe_ratio(d2, d2 - d6)
    assign((vb <= 0) & (d2 >= 0) & (d6 <= 0), EDGE_CA, a + w[..., None] * ac)
    w = _safe_ratio(d4 - d3, (d4 - d3) + (d5 - d6))
    assign((va <= 0) & ((d4 - d3) >= 0) & ((d5 - d6) >= 0), EDGE_BC, b + w[..., None] * (c - b))

    denominator = va + vb + vc
    v = _safe_ratio(vb, denominator)
    w = _safe_ratio(vc, denominator)
    face = a + v[..., None] * ab + w[..., None] * ac
    assign(np.ones(shape, dtype=bool), FACE, face)
    return closest, feature


def ray_hits(origins, direction, a, b, c, eps=1e-12):
    """Moller-Trumbore: True where the ray origin + s * direction (s > 0) hits the triangle.

    origins (N, 1, 3) and triangle corners (1, M, 3) broadcast to (N, M).
    """
    edge1 = b - a
    edge2 = c - a
    pvec = np.cross(direction, edge2)
    det = _dot(edge1, pvec)
    parallel = np.abs(det) < eps
    inv_det = _safe_ratio(1.0, det)
    tvec = origins - a
    u = _dot(tvec, pvec) * inv_det
    qvec = np.cross(tvec, edge1)
    v = _dot(direction, qvec) * inv_det
    s = _dot(edge2, qvec) * inv_det
    return ~parallel & (u >= 0) & (v >= 0) & (u + v <= 1) & (s > eps)
