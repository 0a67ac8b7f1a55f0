"""
Approximation-error sweeps for the second-order patch SDFs.

For each radius the same random (patch, point) trials are rescaled, so the
max error over trials tracks how the approximation degrades with distance.
"""
import logging
import time
from typing import NamedTuple

import numpy as np
from django.conf import settings

from geom_core.patches import QuadraticPatch, SharpEdgePatch, patch_sdf_approx, patch_sdf_exact, sharp_edge_sdf_approx

logger = logging.getLogger(__name__)

FAMILIES = ('quadratic', 'plane', 'sharp-edge', 'sloped-edge')
EXACT_TOLERANCE = 1e-12
COEFFICIENT_BOUND = 2.0
# Patch discs reach past the sample ball so closest points stay interior
DISC_FACTOR = 2.0


def random_patch(family, rng, radius, edge_slope=1.0):
    disc = DISC_FACTOR * radius
    if family == 'plane':
        return QuadraticPatch(radius=disc)
    a1, b1, c1, a2, b2 = rng.uniform(-COEFFICIENT_BOUND, COEFFICIENT_BOUND, 5)
    if family == 'quadratic':
        return QuadraticPatch(a1, b1, c1, radius=disc)
    if family == 'sharp-edge':
        return SharpEdgePatch(a1=a1, b1=b1, a2=a2, b2=b2, c1=c1, radius=disc)
    if family == 'sloped-edge':
        return SharpEdgePatch(a1=a1, b1=b1, e1=edge_slope, a2=a2, b2=b2, e2=-edge_slope, c1=c1, radius=disc)
    raise ValueError(f"unknown patch family {family!r}, expected one of {', '.join(FAMILIES)}")


def _unit_ball(rng):
    direction = rng.standard_normal(3)
    return direction / np.linalg.norm(direction) * rng.random() ** (1.0 / 3.0)


def approximation_error(patch, point):
    approx = sharp_edge_sdf_approx(patch, point) if isinstance(patch, SharpEdgePatch) else patch_sdf_approx(patch, point)
    return abs(approx - patch_sdf_exact(patch, point, strict=False))


class SweepReport(NamedTuple):
    family: str
    radii: list
    errors: list
    slope: float
    exact: bool
    trials: int
    seconds: float

    def as_dict(self):
        return self._asdict()

    def rows(self):
        return [(radius, error) for radius, error in zip(self.radii, self.errors)]


def log_log_slope(radii, errors):
    """Least-squares slope of log(error) against log(radius)."""
    slope, _ = np.polyfit(np.log(radii), np.log(errors), 1)
    return float(slope)


def approx_error_sweep(family='quadratic', radii=None, trials=None, seed=0, edge_slope=1.0):
    """Max |approx - exact| per radius over random trials, with its log-log slope.

    Trial t draws its patch and a point in the unit ball from its own seed;
    at radius r the patch is drawn on a disc of 2r and the point is scaled
    by r. Families whose error stays at round-off are reported exact with no
    slope.
    """
    radii = [float(radius) for radius in (settings.COFIE_LAB['RADII'] if radii is None else radii)]
    trials = settings.COFIE_LAB['TRIALS'] if trials is None else trials
    if family not in FAMILIES:
        raise ValueError(f"unknown patch family {family!r}, expected one of {', '.join(FAMILIES)}")
    if len(radii) < 3 or any(later >= earlier for earlier, later in zip(radii, radii[1:])) or radii[-1] <= 0:
        raise ValueError('radii must be at least three positive, strictly decreasing values')
    if trials < 1:
        raise ValueError('trials must be positive')

    started = time.perf_counter()
    errors = []
    for radius in radii:
        worst = 0.0
        for trial in range(trials):
            rng = np.random.default_rng([seed, trial])
            patch = random_patch(family, rng, radius, edge_slope)
            worst = max(worst, approximation_error(patch, radius * _unit_ball(rng)))
        errors.append(worst)
        logger.debug(f"{family} radius {radius:g}: max error {worst:.4g}")

    exact = max(errors) <= EXACT_TOLERANCE
    slope = None if exact else log_log_slope(radii, np.maximum(errors, np.finfo(float).tiny))
    report = SweepReport(family, radii, errors, slope, exact, trials, time.perf_counter() - started)
    logger.info(f"{family} sweep over {trials} trials: " + ('exact' if exact else f"slope {slope:.3f}"))
    return report
