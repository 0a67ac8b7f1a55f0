"""
The shared decoder g(x_local, z_latent).

Linear layers followed by k trailing quadratic layers, ReLU between layers
and none after the last. Parameters are stored in float32; forward and
backward passes run in float64.
"""
import logging
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from coord_field.field import CoordinateField
from coord_field.grid import VoxelGrid
from geom_core.quaternions import quaternion_to_rotation, rotation_jacobian

from .exceptions import ShapeMismatch
from .layers import linear_backward, linear_forward, quadratic_backward, quadratic_forward

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MlpConfig:
    widths: tuple
    quadratic_layers: int = 1

    def __post_init__(self):
        widths = tuple(int(width) for width in self.widths)
        object.__setattr__(self, 'widths', widths)
        if len(widths) < 2 or min(widths) < 1:
            raise ValueError(f"invalid layer widths {widths}")
        if widths[0] < 4 or widths[-1] != 1:
            raise ValueError('decoder takes 3 coordinates plus a latent and returns one value')
        if not 0 <= self.quadratic_layers <= len(widths) - 1:
            raise ValueError(f"quadratic layer count {self.quadratic_layers} outside [0, {len(widths) - 1}]")

    @classmethod
    def build(cls, latent_size=125, hidden=128, depth=5, quadratic_layers=1):
        widths = (3 + latent_size,) + (hidden,) * (depth - 1) + (1,)
        return cls(widths, quadratic_layers)

    @property
    def depth(self):
        return len(self.widths) - 1

    @property
    def latent_size(self):
        return self.widths[0] - 3

    def is_quadratic(self, layer):
        return layer >= self.depth - self.quadratic_layers

    def describe(self):
        return {'widths': list(self.widths), 'depth': self.depth, 'quadratic_layers': self.quadratic_layers}


@dataclass
class Layer:
    A: np.ndarray
    b: np.ndarray
    T: Optional[np.ndarray] = None

    def arrays(self):
        return ([('T', self.T)] if self.T is not None else []) + [('A', self.A), ('b', self.b)]


@dataclass
class MlpParams:
    config: MlpConfig
    layers: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.layers) != self.config.depth:
            raise ShapeMismatch(f"expected {self.config.depth} layers, got {len(self.layers)}")
        for index, layer in enumerate(self.layers):
            m_in, m_out = self.config.widths[index], self.config.widths[index + 1]
            if layer.A.shape != (m_out, m_in) or layer.b.shape != (m_out,):
                raise ShapeMismatch(f"layer {index} has shapes {layer.A.shape}, {layer.b.shape}")
            quadratic = self.config.is_quadratic(index)
            if quadratic != (layer.T is not None):
                raise ShapeMismatch(f"layer {index} quadratic tensor presence disagrees with the config")
            if quadratic and layer.T.shape != (m_in, m_out, m_in):
                raise ShapeMismatch(f"layer {index} quadratic tensor has shape {layer.T.shape}")

    def named_arrays(self):
        """Parameters in storage order: layer-major, T then A then b."""
        return {
            f"layer{index}.{name}": array
            for index, layer in enumerate(self.layers)
            for name, array in layer.arrays()
        }

    def with_arrays(self, arrays):
        layers = [
            Layer(arrays[f"layer{index}.A"], arrays[f"layer{index}.b"], arrays.get(f"layer{index}.T"))
            for index in range(self.config.depth)
        ]
        return MlpParams(self.config, layers)

    def astype(self, dtype):
        return self.with_arrays({name: array.astype(dtype) for name, array in self.named_arrays().items()})

    def copy(self):
        return self.astype(self.layers[0].A.dtype)

    def is_finite(self):
        return all(np.all(np.isfinite(array)) for array in self.named_arrays().values())


def parameter_count(config):
    total = 0
    for index in range(config.depth):
        m_in, m_out = config.widths[index], config.widths[index + 1]
        total += m_out * m_in + m_out
        if config.is_quadratic(index):
            total += m_in * m_out * m_in
    return total


def init_params(config, seed=0):
    """Kaiming-uniform A, zero b and zero T so training starts in the linear regime."""
    rng = np.random.default_rng(seed)
    layers = []
    for index in range(config.depth):
        m_in, m_out = config.widths[index], config.widths[index + 1]
        bound = np.sqrt(6.0 / m_in)
        A = rng.uniform(-bound, bound, (m_out, m_in)).astype(np.float32)
        b = np.zeros(m_out, dtype=np.float32)
        T = np.zeros((m_in, m_out, m_in), dtype=np.float32) if config.is_quadratic(index) else None
        layers.append(Layer(A, b, T))
    return MlpParams(config, layers)


def forward(params, inputs):
    """Batched forward pass.

    Returns (outputs (B,), cache) where cache holds (layer input,
    pre-activation) per layer.
    """
    h = np.asarray(inputs, dtype=np.float64)
    if h.ndim != 2 or h.shape[1] != params.config.widths[0]:
        raise ShapeMismatch(f"decoder expects inputs of width {params.config.widths[0]}, got {h.shape}")
    cache = []
    last = len(params.layers) - 1
    for index, layer in enumerate(params.layers):
        A = layer.A.astype(np.float64)
        b = layer.b.astype(np.float64)
        if layer.T is not None:
            s = quadratic_forward(layer.T.astype(np.float64), A, b, h)
        else:
            s = linear_forward(A, b, h)
        cache.append((h, s))
        h = s if index == last else np.maximum(s, 0.0)
    return h[:, 0], cache


def activation_masks(cache):
    return [s > 0 for _, s in cache[:-1]]


def mlp_forward(params, x_local, z_latent):
    inputs = np.concatenate([np.asarray(x_local, dtype=np.float64), np.asarray(z_latent, dtype=np.float64)])
    outputs, _ = forward(params, inputs[None, :])
    return float(outputs[0])


def decode(params, inputs):
    return forward(params, inputs)[0]


def backward_mlp(params, cache, grad_out):
    """Reverse pass; returns (per-layer gradient dicts, gradient w.r.t. the inputs)."""
    g = np.asarray(grad_out, dtype=np.float64)[:, None]
    grads = [None] * len(params.layers)
    last = len(params.layers) - 1
    for index in range(last, -1, -1):
        h, s = cache[index]
        if index != last:
            g = g * (s > 0)
        layer = params.layers[index]
        A = layer.A.astype(np.float64)
        if layer.T is not None:
            dT, dA, db, g = quadratic_backward(layer.T.astype(np.float64), A, h, g)
            grads[index] = {'T': dT, 'A': dA, 'b': db}
        else:
            dA, db, g = linear_backward(A, h, g)
            grads[index] = {'A': dA, 'b': db}
    return grads, g


def scatter_sum(rows, values, count):
    """Sum value rows into `count` buckets in a fixed order."""
    values = np.asarray(values, dtype=np.float64)
    out = np.zeros((count,) + values.shape[1:])
    if len(rows) == 0:
        return out
    order = np.argsort(rows, kind='stable')
    sorted_rows = rows[order]
    starts = np.flatnonzero(np.r_[True, sorted_rows[1:] != sorted_rows[:-1]])
    out[sorted_rows[starts]] = np.add.reduceat(values[order], starts, axis=0)
    return out


class Gradients(NamedTuple):
    params: dict
    latents: np.ndarray
    quaternions: np.ndarray
    origins: np.ndarray


class DecodeResult(NamedTuple):
    loss: float
    residual: np.ndarray
    masks: list


def _local_inputs(field, rows, points):
    rotations = quaternion_to_rotation(field.quaternions)
    diff = np.asarray(points, dtype=np.float64) - field.origins[rows]
    local = np.einsum('bji,bj->bi', rotations[rows], diff)
    return np.concatenate([local, field.latents[rows]], axis=1), rotations, diff


def decode_loss(params, field, rows, points, targets):
    """L1 loss sum |g(R^T (p - o), z) - d| over a batch of samples."""
    inputs, _, _ = _local_inputs(field, rows, points)
    outputs, cache = forward(params, inputs)
    residual = outputs - np.asarray(targets, dtype=np.float64)
    return DecodeResult(float(np.abs(residual).sum()), residual, activation_masks(cache))


def loss_and_gradients(params, field, rows, points, targets):
    """Loss and exact reverse-mode gradients for a batch of one shape's samples.

    rows index the field's cells. The L1 subgradient at a zero residual is 0.
    Frame gradients include the quaternion normalization.
    """
    if field.latent_size != params.config.latent_size:
        raise ShapeMismatch(
            f"field latents have size {field.latent_size}, decoder expects {params.config.latent_size}",
        )
    rows = np.asarray(rows, dtype=np.int64)
    inputs, rotations, diff = _local_inputs(field, rows, points)
    outputs, cache = forward(params, inputs)
    residual = outputs - np.asarray(targets, dtype=np.float64)
    layer_grads, grad_inputs = backward_mlp(params, cache, np.sign(residual))

    count = len(field)
    grad_local = grad_inputs[:, :3]
    grad_latents = scatter_sum(rows, grad_inputs[:, 3:], count)
    # x = R^T (p - o): dx_i/dR_ji = (p - o)_j
    grad_rotation = scatter_sum(rows, diff[:, :, None] * grad_local[:, None, :], count)
    grad_quaternions = np.einsum('ncij,nij->nc', rotation_jacobian(field.quaternions), grad_rotation)
    grad_origins = -np.einsum('nij,nj->ni', rotations, scatter_sum(rows, grad_local, count))

    param_grads = {
        f"layer{index}.{name}": value for index, grads in enumerate(layer_grads) for name, value in grads.items()
    }
    result = DecodeResult(float(np.abs(residual).sum()), residual, activation_masks(cache))
    return result, Gradients(param_grads, grad_latents, grad_quaternions, grad_origins)


def backward(params, frame, latent, sample):
    """Gradients of |g(world_to_local(frame, p), z) - d| for one sample.

    Returns (parameter gradients, d/dz, d/dquaternion, d/dorigin).
    """
    single = CoordinateField(
        VoxelGrid(2, valid=[0]), np.asarray(frame.rotation)[None], np.asarray(frame.origin)[None],
        np.asarray(latent, dtype=np.float64)[None],
    )
    _, grads = loss_and_gradients(params, single, np.zeros(1, dtype=np.int64), [sample.position], [sample.sdf])
    return grads.params, grads.latents[0], grads.quaternions[0], grads.origins[0]


def fit_quadratic_layer(inputs, targets):
    """Least-squares single quadratic output layer.

    Returns (Layer, max abs residual).
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    m = inputs.shape[1]
    upper = np.triu_indices(m)
    features = np.concatenate([
        inputs[:, upper[0]] * inputs[:, upper[1]], inputs, np.ones((len(inputs), 1)),
    ], axis=1)
    solution, *_ = np.linalg.lstsq(features, targets, rcond=None)
    T = np.zeros((m, 1, m))
    T[upper[0], 0, upper[1]] = solution[:len(upper[0])]
    A = solution[len(upper[0]):len(upper[0]) + m][None, :]
    b = solution[-1:]
    residual = np.abs(quadratic_forward(T, A, b, inputs)[:, 0] - targets).max()
    return Layer(A, b, T), float(residual)


def fit_affine_layer(inputs, targets):
    inputs = np.asarray(inputs, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    features = np.concatenate([inputs, np.ones((len(inputs), 1))], axis=1)
    solution, *_ = np.linalg.lstsq(features, targets, rcond=None)
    layer = Layer(solution[:-1][None, :], solution[-1:])
    residual = np.abs(linear_forward(layer.A, layer.b, inputs)[:, 0] - targets).max()
    return layer, float(residual)
