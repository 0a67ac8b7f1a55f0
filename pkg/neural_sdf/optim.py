from dataclasses import dataclass, field

import numpy as np

from .exceptions import ShapeMismatch


@dataclass
class AdamState:
    """First/second moments per named parameter array."""

    first: dict = field(default_factory=dict)
    second: dict = field(default_factory=dict)
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params, **options):
        return cls(
            first={name: np.zeros(np.shape(value)) for name, value in params.items()},
            second={name: np.zeros(np.shape(value)) for name, value in params.items()},
            **options,
        )


def adam_step(state, params, grads, lr, unit_rows=()):
    """One bias-corrected Adam update.

    params and grads are dicts of arrays keyed alike; the returned dict keeps
    each parameter's dtype. Arrays named in `unit_rows` have their rows
    re-normalized after the update (quaternions).
    """
    if set(params) != set(state.first) or set(grads) != set(params):
        raise ShapeMismatch('optimizer state, parameters and gradients name different arrays')
    for name, value in params.items():
        if np.shape(value) != state.first[name].shape or np.shape(grads[name]) != state.first[name].shape:
            raise ShapeMismatch(f"{name}: parameter {np.shape(value)}, gradient {np.shape(grads[name])}")

    state.step += 1
    correction1 = 1.0 - state.beta1 ** state.step
    correction2 = 1.0 - state.beta2 ** state.step
    updated = {}
    for name, value in params.items():
        g = np.asarray(grads[name], dtype=np.float64)
        m = state.first[name] = state.beta1 * state.first[name] + (1.0 - state.beta1) * g
        v = state.second[name] = state.beta2 * state.second[name] + (1.0 - state.beta2) * g * g
        step = lr * (m / correction1) / (np.sqrt(v / correction2) + state.eps)
        new = np.asarray(value, dtype=np.float64) - step
        if name in unit_rows:
            new = new / np.linalg.norm(new, axis=-1, keepdims=True)
        updated[name] = new.astype(np.asarray(value).dtype)
    return updated
