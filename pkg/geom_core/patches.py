"""
Quadratic and sharp-edge surface patches.

A quadratic patch is the height field z = 1/2 (a u^2 + c v^2 + 2 b u v) over
the disc u^2 + v^2 <= r^2 of its local frame. A sharp-edge patch stitches two
such half-patches (plus a slope term e u) along u = 0; both halves share the
v^2 coefficient so the seam is continuous.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .exceptions import NonConvergence
from .transforms import RigidTransform

logger = logging.getLogger(__name__)

SEED_GRID = 64
RESTARTS = 5
MAX_NEWTON_STEPS = 30
RIM_SEEDS = 256


class HeightPiece(NamedTuple):
    """z = 1/2 (a u^2 + c v^2 + 2 b u v) + e u on one side of u = 0 (side 0: whole disc)."""
    a: float
    b: float
    c: float
    e: float
    side: int

    def height(self, u, v):
        return 0.5 * (self.a * u * u + self.c * v * v + 2.0 * self.b * u * v) + self.e * u

    def slopes(self, u, v):
        return self.a * u + self.b * v + self.e, self.b * u + self.c * v


def _check_coefficients(radius, coefficients):
    if not radius > 0 or not math.isfinite(radius):
        raise ValueError(f"patch radius must be positive, got {radius}")
    if not all(math.isfinite(value) for value in coefficients):
        raise ValueError('patch coefficients must be finite')


@dataclass(frozen=True)
class QuadraticPatch:
    a: float = 0.0
    b: float = 0.0
    c: float = 0.0
    radius: float = 1.0
    pose: RigidTransform = field(default_factory=RigidTransform)

    def __post_init__(self):
        _check_coefficients(self.radius, (self.a, self.b, self.c))

    @property
    def pieces(self):
        return (HeightPiece(self.a, self.b, self.c, 0.0, 0),)

    def height(self, u, v):
        return self.pieces[0].height(u, v)


@dataclass(frozen=True)
class SharpEdgePatch:
    a1: float = 0.0
    b1: float = 0.0
    e1: float = 0.0
    a2: float = 0.0
    b2: float = 0.0
    e2: float = 0.0
    c1: float = 0.0
    radius: float = 1.0
    pose: RigidTransform = field(default_factory=RigidTransform)

    def __post_init__(self):
        _check_coefficients(self.radius, (self.a1, self.b1, self.e1, self.a2, self.b2, self.e2, self.c1))

    @property
    def pieces(self):
        return (
            HeightPiece(self.a1, self.b1, self.c1, self.e1, -1),
            HeightPiece(self.a2, self.b2, self.c1, self.e2, 1),
        )

    def height(self, u, v):
        left, right = self.pieces
        return np.where(np.asarray(u) <= 0, left.height(u, v), right.height(u, v))


def _to_local(patch, p):
    return patch.pose.inverse_apply(np.asarray(p, dtype=np.float64))


def _as_result(values):
    return float(values) if np.ndim(values) == 0 else values


def patch_sdf_approx(patch, p):
    """Second-order signed distance z - 1/2 (a x^2 + c y^2 + 2 b x y) in the patch frame.

    p may be a single point or an (N, 3) array.
    """
    local = _to_local(patch, p)
    x, y, z = local[..., 0], local[..., 1], local[..., 2]
    return _as_result(z - patch.height(x, y))


def sharp_edge_sdf_approx(patch, p):
    local = _to_local(patch, p)
    x, y, z = local[..., 0], local[..., 1], local[..., 2]
    left, right = patch.pieces
    values = np.where(
        x <= 0,
        z - 0.5 * (left.a * x * x + left.c * y * y + 2.0 * left.b * x * y) - left.e * x,
        z - 0.5 * (right.a * x * x + right.c * y * y + 2.0 * right.b * x * y) - right.e * x,
    )
    return _as_result(values)


def patch_sample_surface(patch, n, seed):
    """n surface points over (u, v) uniform on the patch disc."""
    if n <= 0:
        raise ValueError('n must be positive')
    rng = np.random.default_rng(seed)
    radius = patch.radius * np.sqrt(rng.random(n))
    angle = 2.0 * np.pi * rng.random(n)
    u = radius * np.cos(angle)
    v = radius * np.sin(angle)
    local = np.stack([u, v, patch.height(u, v)], axis=-1)
    return patch.pose.apply(local)


# Closest-point search

def _objective(piece, p, u, v):
    dz = p[2] - piece.height(u, v)
    return 0.5 * ((p[0] - u) ** 2 + (p[1] - v) ** 2 + dz * dz)


def _gradient_hessian(piece, p, u, v):
    dz = p[2] - piece.height(u, v)
    fu, fv = piece.slopes(u, v)
    gu = -(p[0] - u) - dz * fu
    gv = -(p[1] - v) - dz * fv
    huu = 1.0 + fu * fu - dz * piece.a
    huv = fu * fv - dz * piece.b
    hvv = 1.0 + fv * fv - dz * piece.c
    return gu, gv, huu, huv, hvv


def _inside(piece, radius, u, v):
    if u * u + v * v > radius * radius * (1.0 + 1e-12):
        return False
    return piece.side == 0 or piece.side * u >= -1e-15


def _newton(piece, p, radius, u, v, tol):
    """Damped Newton on the closest-point conditions.

    Returns (u, v, value, status) with status 'converged', 'left' (the
    iterate left the piece domain) or 'stalled'.
    """
    value = _objective(piece, p, u, v)
    for _ in range(MAX_NEWTON_STEPS):
        gu, gv, huu, huv, hvv = _gradient_hessian(piece, p, u, v)
        if math.hypot(gu, gv) <= tol:
            return u, v, value, 'converged'
        det = huu * hvv - huv * huv
        if huu > 0 and det > 0:
            du = -(hvv * gu - huv * gv) / det
            dv = -(huu * gv - huv * gu) / det
        else:
            du, dv = -gu, -gv
        step = 1.0
        while step > 1e-12:
            nu, nv = u + step * du, v + step * dv
            trial = _objective(piece, p, nu, nv)
            if trial <= value:
                break
            step *= 0.5
        else:
            return u, v, value, 'stalled'
        if not _inside(piece, radius, nu, nv):
            return nu, nv, trial, 'left'
        moved = math.hypot(nu - u, nv - v)
        u, v, value = nu, nv, trial
        if moved <= 1e-16 * max(1.0, math.hypot(u, v)):
            return u, v, value, 'converged'
    gu, gv, _, _, _ = _gradient_hessian(piece, p, u, v)
    return u, v, value, 'converged' if math.hypot(gu, gv) <= tol else 'stalled'


def _rim(radius):
    def curve(t):
        cos_t, sin_t = math.cos(t), math.sin(t)
        return (radius * cos_t, radius * sin_t), (-radius * sin_t, radius * cos_t), (-radius * cos_t, -radius * sin_t)
    return curve


def _crease(t):
    return (0.0, t), (0.0, 1.0), (0.0, 0.0)


def _curve_minimum(piece, p, curve, lo, hi, tol, closed=False):
    """Minimize the squared distance along a boundary curve of the piece domain.

    Returns candidates (value, u, v, converged).
    """
    samples = np.linspace(lo, hi, RIM_SEEDS, endpoint=not closed)
    values = np.array([_objective(piece, p, *curve(t)[0]) for t in samples])
    seeds = samples[np.argsort(values, kind='stable')[:3]]
    spacing = (hi - lo) / RIM_SEEDS
    candidates = []
    if not closed:
        for t in (lo, hi):
            (u, v), _, _ = curve(t)
            candidates.append((_objective(piece, p, u, v), u, v, True))
    for t in seeds:
        t = float(t)
        (u, v), _, _ = curve(t)
        value = _objective(piece, p, u, v)
        converged = False
        for _ in range(MAX_NEWTON_STEPS):
            (u, v), d1, d2 = curve(t)
            gu, gv, huu, huv, hvv = _gradient_hessian(piece, p, u, v)
            slope = gu * d1[0] + gv * d1[1]
            curvature = (huu * d1[0] * d1[0] + 2.0 * huv * d1[0] * d1[1] + hvv * d1[1] * d1[1]
                         + gu * d2[0] + gv * d2[1])
            if abs(slope) <= tol:
                converged = True
                break
            if not closed and ((t <= lo and slope > 0) or (t >= hi and slope < 0)):
                # Constrained minimum at the curve end
                converged = True
                break
            delta = -slope / curvature if curvature > 0 else -math.copysign(spacing, slope)
            step = 1.0
            while step > 1e-12:
                trial_t = t + step * delta
                if not closed:
                    trial_t = min(max(trial_t, lo), hi)
                (tu, tv), _, _ = curve(trial_t)
                trial = _objective(piece, p, tu, tv)
                if trial <= value:
                    break
                step *= 0.5
            else:
                break
            if abs(trial_t - t) <= 1e-16 * max(1.0, abs(t)):
                converged = True
                t, value = trial_t, trial
                break
            t, value = trial_t, trial
        (u, v), _, _ = curve(t)
        candidates.append((value, u, v, converged))
    return candidates


def _arc_range(side):
    if side < 0:
        return 0.5 * math.pi, 1.5 * math.pi, False
    if side > 0:
        return -0.5 * math.pi, 0.5 * math.pi, False
    return 0.0, 2.0 * math.pi, True


def _grid_seeds(piece, p, radius):
    axis = np.linspace(-radius, radius, SEED_GRID)
    u, v = np.meshgrid(axis, axis, indexing='ij')
    mask = u * u + v * v <= radius * radius
    if piece.side < 0:
        mask &= u <= 0
    elif piece.side > 0:
        mask &= u >= 0
    u, v = u[mask], v[mask]
    values = _objective(piece, p, u, v)
    order = np.argsort(values, kind='stable')[:RESTARTS]
    return [(float(values[i]), float(u[i]), float(v[i])) for i in order]


def _closest_point(patch, local, tol):
    """Closest point on the patch to a patch-local point.

    Returns (value, u, v, piece_index, converged) for the best candidate,
    value being half the squared distance.
    """
    radius = patch.radius
    p = tuple(float(value) for value in local)
    candidates = []
    for index, piece in enumerate(patch.pieces):
        for seed_value, u0, v0 in _grid_seeds(piece, p, radius):
            candidates.append((seed_value, u0, v0, index, False))
            u, v, value, status = _newton(piece, p, radius, u0, v0, tol)
            if status == 'converged' and _inside(piece, radius, u, v):
                candidates.append((value, u, v, index, True))

    best_interior = min((c for c in candidates if c[4]), default=None, key=lambda c: c[0])
    interior_distance = math.sqrt(2.0 * best_interior[0]) if best_interior else math.inf

    # Skip boundary searches that cannot beat the interior minimum
    if interior_distance > radius - math.hypot(p[0], p[1]):
        for index, piece in enumerate(patch.pieces):
            lo, hi, closed = _arc_range(piece.side)
            for value, u, v, converged in _curve_minimum(piece, p, _rim(radius), lo, hi, tol, closed):
                candidates.append((value, u, v, index, converged))
    if len(patch.pieces) > 1 and interior_distance > abs(p[0]):
        for value, u, v, converged in _curve_minimum(patch.pieces[0], p, _crease, -radius, radius, tol):
            candidates.append((value, u, v, 0, converged))

    return min(candidates, key=lambda c: (c[0], not c[4]))


def _sign(patch, local, u, v, piece):
    if isinstance(patch, SharpEdgePatch) and local[0] ** 2 + local[1] ** 2 <= patch.radius ** 2:
        above = local[2] - float(patch.height(local[0], local[1]))
        return 1.0 if above >= 0 else -1.0
    fu, fv = piece.slopes(u, v)
    offset = local - np.array([u, v, piece.height(u, v)])
    along_normal = -offset[0] * fu - offset[1] * fv + offset[2]
    return 1.0 if along_normal >= 0 else -1.0


def patch_sdf_exact(patch, p, tol=1e-12, strict=True):
    """Exact signed distance from a point to a quadratic or sharp-edge patch.

    Newton iteration on the closest-point conditions, restarted from the
    best cells of a dense (u, v) grid, with 1-D searches along the disc rim
    and the crease. Raises NonConvergence carrying the best grid estimate
    when no restart converges; with strict=False the estimate is returned
    and a warning is logged instead.
    """
    if not tol > 0:
        raise ValueError('tol must be positive')
    local = _to_local(patch, p).reshape(3)
    value, u, v, index, converged = _closest_point(patch, local, tol)
    distance = math.sqrt(max(2.0 * value, 0.0))
    signed = 0.0 if distance == 0.0 else _sign(patch, local, u, v, patch.pieces[index]) * distance
    if not converged:
        if strict:
            raise NonConvergence('closest-point Newton did not converge', estimate=signed, point=tuple(local))
        logger.warning(f"Closest-point search did not converge at {tuple(np.round(local, 6))}, using grid estimate")
    return signed
