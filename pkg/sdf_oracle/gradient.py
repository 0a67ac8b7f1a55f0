import numpy as np
from scipy.spatial import cKDTree


def sdf_gradient(oracle, p, h):
    """Central-difference gradient of a vectorized oracle (N, 3) -> (N,).

    p is one point or an (N, 3) array; one oracle call per +-h per axis.
    """
    if not h > 0:
        raise ValueError('finite-difference step must be positive')
    points = np.asarray(p, dtype=np.float64)
    single = points.ndim == 1
    points = points.reshape(-1, 3)
    gradient = np.empty_like(points)
    for axis in range(3):
        step = np.zeros(3)
        step[axis] = h
        forward = np.asarray(oracle(points + step), dtype=np.float64)
        backward = np.asarray(oracle(points - step), dtype=np.float64)
        gradient[:, axis] = (forward - backward) / (2.0 * h)
    return gradient[0] if single else gradient


def estimate_gradients(positions, sdf, k=8):
    """SDF gradients from samples alone: affine least squares over the k nearest samples."""
    positions = np.asarray(positions, dtype=np.float64)
    sdf = np.asarray(sdf, dtype=np.float64)
    k = min(k, len(positions))
    _, neighbours = cKDTree(positions).query(positions, k=k)
    neighbours = neighbours.reshape(len(positions), k)
    offsets = positions[neighbours] - positions[:, None, :]
    design = np.concatenate([offsets, np.ones(offsets.shape[:2] + (1,))], axis=2)
    coefficients = np.einsum('nij,nj->ni', np.linalg.pinv(design), sdf[neighbours])
    return coefficients[:, :3]
