"""
Sample laws for the 2D fitting landscape.

Points on the curve (x, k0 x^2) are offset by y along the second axis, with
x ~ p and y ~ q independent. Both laws are held as weighted nodes; uniform
intervals use Gauss-Legendre nodes so expectations of polynomials of degree
below 2 * order are exact.
"""
from dataclasses import dataclass

import numpy as np
from django.conf import settings
from scipy.special import roots_legendre

MIN_ORDER = 8


def _legendre(lo, hi, order):
    if order < MIN_ORDER:
        raise ValueError(f"quadrature order must be at least {MIN_ORDER}, got {order}")
    if hi < lo:
        raise ValueError(f"interval [{lo}, {hi}] is reversed")
    if hi == lo:
        return np.array([float(lo)]), np.array([1.0])
    nodes, weights = roots_legendre(order)
    half = 0.5 * (hi - lo)
    return 0.5 * (hi + lo) + half * nodes, 0.5 * weights


def _default_order():
    return settings.COFIE_LAB['QUADRATURE_ORDER']


@dataclass(frozen=True, eq=False)
class SampleLaw:
    x_nodes: np.ndarray
    x_weights: np.ndarray
    y_nodes: np.ndarray
    y_weights: np.ndarray
    k0: float = 1.0
    name: str = 'custom'

    def __post_init__(self):
        for prefix in ('x', 'y'):
            nodes = np.asarray(getattr(self, f'{prefix}_nodes'), dtype=np.float64).reshape(-1)
            weights = np.asarray(getattr(self, f'{prefix}_weights'), dtype=np.float64).reshape(-1)
            if len(nodes) == 0 or nodes.shape != weights.shape:
                raise ValueError(f"{prefix} nodes and weights must be non-empty and of equal length")
            if np.any(weights < 0) or not weights.sum() > 0:
                raise ValueError(f"{prefix} weights must be non-negative with a positive sum")
            object.__setattr__(self, f'{prefix}_nodes', nodes)
            object.__setattr__(self, f'{prefix}_weights', weights / weights.sum())

    @classmethod
    def uniform(cls, x0=-1.0, x1=1.0, y0=0.0, y1=0.02, k0=1.0, order=None):
        order = order or _default_order()
        x_nodes, x_weights = _legendre(x0, x1, order)
        y_nodes, y_weights = _legendre(y0, y1, order)
        return cls(x_nodes, x_weights, y_nodes, y_weights, k0, f'uniform[{x0:g},{x1:g}]')

    @classmethod
    def two_point(cls, y0=0.0, y1=0.02, k0=1.0, order=None):
        y_nodes, y_weights = _legendre(y0, y1, order or _default_order())
        return cls(np.array([-1.0, 1.0]), np.array([0.5, 0.5]), y_nodes, y_weights, k0, 'two-point')

    @classmethod
    def grid(cls, xs, weights=None, y0=0.0, y1=0.02, k0=1.0, order=None):
        xs = np.asarray(xs, dtype=np.float64)
        weights = np.ones_like(xs) if weights is None else weights
        y_nodes, y_weights = _legendre(y0, y1, order or _default_order())
        return cls(xs, weights, y_nodes, y_weights, k0, 'grid')

    def moment_x(self, power):
        return float(self.x_weights @ self.x_nodes ** power)

    def moment_y(self, power):
        return float(self.y_weights @ self.y_nodes ** power)

    @property
    def c(self):
        return self.moment_y(1)

    @property
    def variance_y(self):
        return self.moment_y(2) - self.c ** 2

    @property
    def cauchy_gap(self):
        """E[x^2] E[x^6] - E[x^4]^2, zero exactly when x^2 is almost surely constant."""
        return self.moment_x(2) * self.moment_x(6) - self.moment_x(4) ** 2

    def moments(self):
        data = {f'x{power}': self.moment_x(power) for power in range(1, 7)}
        data.update({'y1': self.c, 'y2': self.moment_y(2)})
        return data

    def tensor(self):
        """Tensor-product nodes (x, y) and weights, each of shape (nx, ny)."""
        x, y = np.meshgrid(self.x_nodes, self.y_nodes, indexing='ij')
        return x, y, np.outer(self.x_weights, self.y_weights)

    def describe(self):
        return (f"{self.name} x-law ({len(self.x_nodes)} nodes), "
                f"E[y]={self.c:g}, Var[y]={self.variance_y:.4g}, k0={self.k0:g}")
