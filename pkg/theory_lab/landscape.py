"""
The 2D fitting landscape of a rigidly moved parabola.

Samples are (x, k0 x^2 + y) with target distance y. A candidate curve
coefficient k and pose (t_x, t_y, theta) give the residual

    l = sin(theta) x + cos(theta) s + t_y - k u^2 - y,
    s = k0 x^2 + y,   u = cos(theta) x - sin(theta) s + t_x,

and r = E[l^2]. (k0, 0, 0, 0) is the global minimum; (-k0, 0, 2c, pi) with
c = E[y] is a spurious critical point whenever E[x] = 0.
"""
import logging
import math
from typing import NamedTuple

import numpy as np
from django.conf import settings

logger = logging.getLogger(__name__)

PARAMETERS = ('k', 't_x', 't_y', 'theta')


class LandscapePoint(NamedTuple):
    k: float
    t_x: float
    t_y: float
    theta: float

    @classmethod
    def global_minimum(cls, law):
        return cls(law.k0, 0.0, 0.0, 0.0)

    @classmethod
    def critical(cls, law):
        return cls(-law.k0, 0.0, 2.0 * law.c, math.pi)

    def as_array(self):
        return np.array(self, dtype=np.float64)

    def moved(self, delta):
        return LandscapePoint(*(self.as_array() + np.asarray(delta, dtype=np.float64)))


def _terms(pt, law):
    """Residual with its first and second partials on the quadrature grid.

    Returns (l, first, second, weights); first has shape (4, nx, ny) and
    second (4, 4, nx, ny), both ordered as PARAMETERS.
    """
    k, t_x, t_y, theta = (float(value) for value in pt)
    x, y, weights = law.tensor()
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    s = law.k0 * x * x + y
    u = cos_t * x - sin_t * s + t_x
    u_theta = -sin_t * x - cos_t * s
    u_theta2 = t_x - u

    residual = sin_t * x + cos_t * s + t_y - k * u * u - y
    zero = np.zeros_like(x)
    first = np.stack([-u * u, -2.0 * k * u, np.ones_like(x), cos_t * x - sin_t * s - 2.0 * k * u * u_theta])

    second = np.zeros((4,) + first.shape)
    second[0, 1] = second[1, 0] = -2.0 * u
    second[0, 3] = second[3, 0] = -2.0 * u * u_theta
    second[1, 1] = -2.0 * k + zero
    second[1, 3] = second[3, 1] = -2.0 * k * u_theta
    second[3, 3] = -sin_t * x - cos_t * s - 2.0 * k * (u_theta * u_theta + u * u_theta2)
    return residual, first, second, weights


def landscape_residual(pt, law):
    """l on the quadrature grid, shape (nx, ny)."""
    return _terms(pt, law)[0]


def landscape_r(pt, law):
    residual, _, _, weights = _terms(pt, law)
    return float(np.sum(weights * residual * residual))


def landscape_grad_hess(pt, law):
    """Gradient 2 E[l dl] and Hessian 2 E[l d2l + dl dl^T] of r."""
    residual, first, second, weights = _terms(pt, law)
    gradient = 2.0 * np.einsum('ij,aij,ij->a', weights, first, residual)
    hessian = 2.0 * (np.einsum('ij,abij,ij->ab', weights, second, residual)
                     + np.einsum('ij,aij,bij->ab', weights, first, first))
    return gradient, 0.5 * (hessian + hessian.T)


class CriticalReport(NamedTuple):
    law: str
    point: LandscapePoint
    r: float
    gradient: np.ndarray
    gradient_norm: float
    is_critical: bool
    eigenvalues: np.ndarray
    hessian_min_eig: float
    psd_margins: dict
    cauchy_gap: float
    degenerate: bool
    moments: dict

    @property
    def is_local_minimum(self):
        return self.is_critical and not self.degenerate and self.hessian_min_eig > 0

    def as_dict(self):
        return {
            'law': self.law,
            'point': dict(zip(PARAMETERS, (float(value) for value in self.point))),
            'r': self.r,
            'gradient': [float(value) for value in self.gradient],
            'gradient_norm': self.gradient_norm,
            'is_critical': self.is_critical,
            'eigenvalues': [float(value) for value in self.eigenvalues],
            'hessian_min_eig': self.hessian_min_eig,
            'psd_margins': self.psd_margins,
            'cauchy_gap': self.cauchy_gap,
            'degenerate': self.degenerate,
            'moments': self.moments,
        }


def _block_det(hessian, first, second):
    index = [first, second]
    return float(np.linalg.det(hessian[np.ix_(index, index)]))


def verify_critical_point(law, tolerance=None, degenerate_tolerance=1e-12):
    """Check the spurious critical point (-k0, 0, 2c, pi) of a law.

    The report carries the gradient norm, the Hessian spectrum and the
    determinants of the (theta, t_x) and (k, t_y) blocks. The point is
    flagged degenerate when E[x^2] E[x^6] = E[x^4]^2 up to the tolerance,
    which is where the block determinants lose their positive margin.
    """
    tolerance = settings.COFIE_LAB['CRITICAL_TOLERANCE'] if tolerance is None else tolerance
    point = LandscapePoint.critical(law)
    gradient, hessian = landscape_grad_hess(point, law)
    eigenvalues = np.linalg.eigvalsh(hessian)
    gradient_norm = float(np.linalg.norm(gradient))
    cauchy_gap = law.cauchy_gap
    report = CriticalReport(
        law=law.describe(),
        point=point,
        r=landscape_r(point, law),
        gradient=gradient,
        gradient_norm=gradient_norm,
        is_critical=gradient_norm <= tolerance,
        eigenvalues=eigenvalues,
        hessian_min_eig=float(eigenvalues[0]),
        psd_margins={
            'theta_tx': _block_det(hessian, 3, 1),
            'k_ty': _block_det(hessian, 0, 2),
        },
        cauchy_gap=cauchy_gap,
        degenerate=abs(cauchy_gap) <= degenerate_tolerance,
        moments=law.moments(),
    )
    logger.info(f"critical point of {report.law}: |grad| {gradient_norm:.3g}, min eig {report.hessian_min_eig:.4g}")
    return report


def finite_difference_gradient(pt, law, step=1e-6):
    center = LandscapePoint(*pt).as_array()
    gradient = np.zeros(4)
    for index in range(4):
        delta = np.zeros(4)
        delta[index] = step
        gradient[index] = (landscape_r(center + delta, law) - landscape_r(center - delta, law)) / (2.0 * step)
    return gradient


def finite_difference_hessian(pt, law, step=1e-4):
    center = LandscapePoint(*pt).as_array()
    hessian = np.zeros((4, 4))
    basis = np.eye(4) * step
    for a in range(4):
        for b in range(a, 4):
            value = (
                landscape_r(center + basis[a] + basis[b], law) - landscape_r(center + basis[a] - basis[b], law)
                - landscape_r(center - basis[a] + basis[b], law) + landscape_r(center - basis[a] - basis[b], law)
            ) / (4.0 * step * step)
            hessian[a, b] = hessian[b, a] = value
    return hessian


class LandscapeReport(NamedTuple):
    law: str
    point: LandscapePoint
    r: float
    gradient: np.ndarray
    hessian: np.ndarray

    def as_dict(self):
        return {
            'law': self.law,
            'point': dict(zip(PARAMETERS, (float(value) for value in self.point))),
            'r': self.r,
            'gradient': [float(value) for value in self.gradient],
            'hessian': [[float(value) for value in row] for row in self.hessian],
        }


def landscape_report(pt, law):
    pt = LandscapePoint(*(float(value) for value in pt))
    gradient, hessian = landscape_grad_hess(pt, law)
    return LandscapeReport(law.describe(), pt, landscape_r(pt, law), gradient, hessian)
