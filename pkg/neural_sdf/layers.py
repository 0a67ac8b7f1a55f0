"""
Linear and quadratic layers.

A linear layer computes A z + b. A quadratic layer adds the bilinear term
z^T T[:, i, :] z to output component i; T has shape (m_in, m_out, m_in).
Inputs may be a single vector or a batch of row vectors.
"""
import numpy as np

from .exceptions import ShapeMismatch


def _check_linear(A, b, z):
    if A.ndim != 2 or b.shape != (A.shape[0],) or z.shape[-1] != A.shape[1]:
        raise ShapeMismatch(f"linear layer {A.shape} with bias {b.shape} cannot take input {z.shape}")


def linear_forward(A, b, z):
    A, b, z = np.asarray(A), np.asarray(b), np.asarray(z)
    _check_linear(A, b, z)
    return z @ A.T + b


def quadratic_forward(T, A, b, z):
    T, A, b, z = np.asarray(T), np.asarray(A), np.asarray(b), np.asarray(z)
    _check_linear(A, b, z)
    if T.shape != (A.shape[1], A.shape[0], A.shape[1]):
        raise ShapeMismatch(f"quadratic tensor {T.shape} does not match layer {A.shape}")
    bilinear = np.einsum('...j,jik,...k->...i', z, T, z)
    return bilinear + (z @ A.T + b)


def linear_backward(A, z, grad_out):
    """Gradients (dA, db, dz) of a batch; grad_out has shape (B, m_out)."""
    return grad_out.T @ z, grad_out.sum(axis=0), grad_out @ A


def quadratic_backward(T, A, z, grad_out):
    """Gradients (dT, dA, db, dz) of a batch."""
    dA, db, dz = linear_backward(A, z, grad_out)
    dT = np.empty(T.shape, dtype=np.float64)
    for i in range(T.shape[1]):
        weighted = z * grad_out[:, i:i + 1]
        dT[:, i, :] = weighted.T @ z
        dz = dz + grad_out[:, i:i + 1] * (z @ (T[:, i, :] + T[:, i, :].T))
    return dT, dA, db, dz
