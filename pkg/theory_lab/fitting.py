"""
Fitting quadratic patches to SDF samples.

The aligned problem (patch in its own frame) is linear least squares in
(a, b, c). The unaligned problem also searches the pose p' = R p + t that maps
samples into the patch frame; it is non-convex and is solved here by
gradient descent with backtracking, optionally over the pose alone with the
coefficients re-solved in closed form at every pose.
"""
import logging
from typing import NamedTuple

import numpy as np

from geom_core.quaternions import normalize_quaternion, random_quaternion, rotation_jacobian
from geom_core.transforms import RigidTransform

from .exceptions import RankDeficient

logger = logging.getLogger(__name__)

ARMIJO = 1e-4
MAX_HALVINGS = 40


class PatchSamples(NamedTuple):
    points: np.ndarray
    distances: np.ndarray

    @classmethod
    def coerce(cls, samples):
        if isinstance(samples, PatchSamples):
            return samples
        pairs = list(samples)
        points = np.array([point for point, _ in pairs], dtype=np.float64).reshape(-1, 3)
        distances = np.array([distance for _, distance in pairs], dtype=np.float64)
        return cls(points, distances)

    def __len__(self):
        return len(self.distances)


def offset_samples(patch, n, seed, offset=(0.0, 0.02), noise=0.0):
    """Points lifted vertically off a patch, labelled with the lift.

    (u, v) is uniform on the patch disc and the lift is uniform on `offset`,
    so without noise the labels equal the second-order SDF exactly.
    """
    rng = np.random.default_rng(seed)
    radius = patch.radius * np.sqrt(rng.random(n))
    angle = 2.0 * np.pi * rng.random(n)
    u, v = radius * np.cos(angle), radius * np.sin(angle)
    height = rng.uniform(offset[0], offset[1], n)
    local = np.stack([u, v, patch.height(u, v) + height], axis=-1)
    distances = height + (noise * rng.standard_normal(n) if noise else 0.0)
    return PatchSamples(patch.pose.apply(local), distances)


def box_samples(patch, n, seed, extent=1.0, noise=0.0):
    """Points uniform in a cube around the patch origin, labelled by the second-order SDF."""
    rng = np.random.default_rng(seed)
    local = rng.uniform(-extent, extent, (n, 3))
    x, y, z = local.T
    distances = z - patch.height(x, y)
    if noise:
        distances = distances + noise * rng.standard_normal(n)
    return PatchSamples(patch.pose.apply(local), distances)


def _design(points):
    x, y = points[:, 0], points[:, 1]
    return np.stack([0.5 * x * x, x * y, 0.5 * y * y], axis=-1)


class AlignedFit(NamedTuple):
    a: float
    b: float
    c: float
    residual: float


def fit_aligned(samples):
    """Closed-form least squares for z - 1/2 (a x^2 + c y^2 + 2 b x y) = d."""
    samples = PatchSamples.coerce(samples)
    design = _design(samples.points)
    if len(samples) < 3 or np.linalg.matrix_rank(design) < 3:
        raise RankDeficient('need three samples with independent (x^2, y^2, 2xy) rows', samples=len(samples))
    target = samples.points[:, 2] - samples.distances
    coefficients = np.linalg.solve(design.T @ design, design.T @ target)
    residual = float(np.mean((target - design @ coefficients) ** 2))
    return AlignedFit(*(float(value) for value in coefficients), residual)


# Unaligned fitting: parameters packed as (a, b, c, q_w, q_x, q_y, q_z, t_x, t_y, t_z)

def pack(a, b, c, pose):
    return np.concatenate([[a, b, c], pose.rotation, pose.translation]).astype(np.float64)


def unpack(theta):
    return float(theta[0]), float(theta[1]), float(theta[2]), RigidTransform(theta[3:7], theta[7:10])


def unaligned_objective(theta, samples):
    """Mean squared residual of the posed second-order SDF."""
    a, b, c, pose = unpack(theta)
    moved = pose.apply(samples.points)
    x, y, z = moved.T
    residual = z - 0.5 * (a * x * x + c * y * y + 2.0 * b * x * y) - samples.distances
    return float(np.mean(residual * residual))


def unaligned_gradient(theta, samples):
    a, b, c = theta[:3]
    quaternion, translation = theta[3:7], theta[7:10]
    rotation = RigidTransform(quaternion, translation).matrix
    moved = samples.points @ rotation.T + translation
    x, y, z = moved.T
    residual = z - 0.5 * (a * x * x + c * y * y + 2.0 * b * x * y) - samples.distances
    scale = 2.0 / len(samples)

    gradient = np.zeros(10)
    gradient[0] = -scale * np.sum(residual * 0.5 * x * x)
    gradient[1] = -scale * np.sum(residual * x * y)
    gradient[2] = -scale * np.sum(residual * 0.5 * y * y)
    # dl/dp' for the moved point
    d_moved = np.stack([-(a * x + b * y), -(b * x + c * y), np.ones_like(z)], axis=-1) * residual[:, None]
    gradient[7:10] = scale * d_moved.sum(axis=0)
    outer = d_moved.T @ samples.points
    gradient[3:7] = scale * np.einsum('mij,ij->m', rotation_jacobian(quaternion), outer)
    return gradient


class UnalignedFit(NamedTuple):
    a: float
    b: float
    c: float
    pose: RigidTransform
    residual: float
    steps: int
    history: list
    converged: bool = False


def _project(theta, samples):
    """theta with (a, b, c) re-solved in closed form for its pose."""
    moved = RigidTransform(theta[3:7], theta[7:10]).apply(samples.points)
    coefficients = np.linalg.lstsq(_design(moved), moved[:, 2] - samples.distances, rcond=None)[0]
    projected = theta.copy()
    projected[:3] = coefficients
    return projected


def fit_unaligned(samples, init=(0.0, 0.0, 0.0, None), steps=500, lr=1.0, freeze_pose=False, tolerance=0.0,
                  gradient_tolerance=0.0, relative_tolerance=0.0, project=False):
    """Gradient descent on the unaligned objective.

    init is (a, b, c, pose) where pose maps sample points into the patch
    frame. The line search starts at min(lr, twice the last accepted step)
    and halves until the Armijo condition holds. With `project` the
    coefficients are re-solved by least squares before every step and at
    every trial pose, so descent runs over the pose alone.

    The fit is converged when the objective drops to `tolerance`, when the
    gradient norm drops to `gradient_tolerance`, when a step lowers the
    objective by no more than `relative_tolerance` times its value, or when
    no step decreases it at all. Running out of `steps` leaves it unconverged.
    """
    if steps < 0:
        raise ValueError('steps must be non-negative')
    samples = PatchSamples.coerce(samples)
    a, b, c, pose = init
    theta = pack(a, b, c, pose or RigidTransform())
    value = unaligned_objective(theta, samples)
    history = [value]
    taken = 0
    accepted = lr
    converged = False
    for _ in range(steps):
        if value <= tolerance:
            break
        if project:
            theta = _project(theta, samples)
            value = unaligned_objective(theta, samples)
        gradient = unaligned_gradient(theta, samples)
        if freeze_pose:
            gradient[3:] = 0.0
        if project:
            gradient[:3] = 0.0
        slope = float(gradient @ gradient)
        if np.sqrt(slope) <= gradient_tolerance:
            converged = True
            break
        step = min(lr, 2.0 * accepted)
        for _ in range(MAX_HALVINGS):
            trial = theta - step * gradient
            trial[3:7] = normalize_quaternion(trial[3:7])
            if project:
                trial = _project(trial, samples)
            trial_value = unaligned_objective(trial, samples)
            if trial_value <= value - ARMIJO * step * slope:
                break
            step *= 0.5
        else:
            converged = True
            break
        settled = value - trial_value <= relative_tolerance * trial_value
        theta, value, accepted = trial, trial_value, step
        history.append(value)
        taken += 1
        if settled:
            converged = True
            break
    converged = converged or value <= tolerance
    a, b, c, pose = unpack(theta)
    return UnalignedFit(a, b, c, pose, value, taken, history, converged)


class MultistartReport(NamedTuple):
    residuals: list
    clusters: int
    split_ratio: float
    low_cluster: list
    high_cluster: list
    fits: list
    converged: int = 0

    def as_dict(self):
        return {
            'starts': len(self.residuals),
            'converged': self.converged,
            'residuals': self.residuals,
            'clusters': self.clusters,
            'split_ratio': self.split_ratio,
            'low_cluster': self.low_cluster,
            'high_cluster': self.high_cluster,
        }


def cluster_residuals(residuals, gap=10.0, floor=1e-300):
    """Split sorted residuals at their largest consecutive ratio.

    Returns (clusters, ratio, split) where split is the size of the low
    cluster; a single cluster is reported when no ratio reaches `gap` and
    no cluster at all for an empty input. Values below `floor` are raised
    to it first.
    """
    ordered = np.sort(np.maximum(np.asarray(residuals, dtype=np.float64), floor))
    if len(ordered) == 0:
        return 0, 1.0, 0
    if len(ordered) < 2:
        return 1, 1.0, len(ordered)
    ratios = ordered[1:] / ordered[:-1]
    split = int(np.argmax(ratios))
    ratio = float(ratios[split])
    if ratio < gap:
        return 1, ratio, len(ordered)
    return 2, ratio, split + 1


def multistart(samples, starts=20, seed=0, steps=20000, lr=1.0, coefficient_scale=2.0, translation_scale=0.2,
               gap=10.0, tolerance=1e-14, gradient_tolerance=1e-9, relative_tolerance=1e-12):
    """Fit from random poses and coefficients, then cluster the converged residuals.

    Every start runs the projected descent of fit_unaligned until it
    converges or spends `steps`. Only converged starts are clustered, with
    residuals below `tolerance` treated as equal.
    """
    samples = PatchSamples.coerce(samples)
    rng = np.random.default_rng(seed)
    fits = []
    for index in range(starts):
        coefficients = rng.uniform(-coefficient_scale, coefficient_scale, 3)
        pose = RigidTransform(random_quaternion(rng), rng.uniform(-translation_scale, translation_scale, 3))
        fit = fit_unaligned(samples, (*coefficients, pose), steps=steps, lr=lr, tolerance=tolerance,
                            gradient_tolerance=gradient_tolerance, relative_tolerance=relative_tolerance,
                            project=True)
        logger.debug(f"start {index}: residual {fit.residual:.4g} after {fit.steps} steps"
                     f"{'' if fit.converged else ' (step limit)'}")
        fits.append(fit)
    residuals = sorted(fit.residual for fit in fits)
    settled = sorted(fit.residual for fit in fits if fit.converged)
    if len(settled) < starts:
        logger.warning(f"multistart: {starts - len(settled)} of {starts} starts hit the {steps}-step limit")
    clusters, ratio, split = cluster_residuals(settled, gap, floor=max(tolerance, 1e-300))
    logger.info(f"multistart: {len(settled)} converged starts, {clusters} residual cluster(s), "
                f"largest ratio {ratio:.3g}")
    return MultistartReport(residuals, clusters, ratio, settled[:split], settled[split:], fits, len(settled))
