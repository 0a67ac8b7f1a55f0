from dataclasses import dataclass, field

import numpy as np

from .quaternions import (
    normalize_quaternion, quaternion_multiply, quaternion_to_rotation,
    random_quaternion,
)


def _identity_rotation():
    return np.array([1.0, 0.0, 0.0, 0.0])


@dataclass(frozen=True)
class RigidTransform:
    """world = R(rotation) @ local + translation"""

    rotation: np.ndarray = field(default_factory=_identity_rotation)
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        rotation = normalize_quaternion(np.asarray(self.rotation, dtype=np.float64).reshape(4))
        translation = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if not np.all(np.isfinite(translation)):
            raise ValueError('translation must be finite')
        object.__setattr__(self, 'rotation', rotation)
        object.__setattr__(self, 'translation', translation)

    @classmethod
    def identity(cls):
        return cls()

    @classmethod
    def random(cls, rng, translation_scale=0.0):
        translation = rng.uniform(-translation_scale, translation_scale, 3) if translation_scale else np.zeros(3)
        return cls(random_quaternion(rng), translation)

    @property
    def matrix(self):
        return quaternion_to_rotation(self.rotation)

    @property
    def is_identity(self):
        return bool(np.array_equal(self.rotation, _identity_rotation()) and not self.translation.any())

    def apply(self, points):
        points = np.asarray(points, dtype=np.float64)
        return points @ self.matrix.T + self.translation

    def inverse_apply(self, points):
        points = np.asarray(points, dtype=np.float64)
        return (points - self.translation) @ self.matrix

    def apply_vector(self, vectors):
        return np.asarray(vectors, dtype=np.float64) @ self.matrix.T

    def compose(self, other):
        """Transform equal to applying `other` first, then self."""
        rotation = quaternion_multiply(self.rotation, other.rotation)
        translation = self.matrix @ other.translation + self.translation
        return RigidTransform(rotation, translation)

    def inverse(self):
        conjugate = self.rotation * np.array([1.0, -1.0, -1.0, -1.0])
        return RigidTransform(conjugate, -(self.matrix.T @ self.translation))
