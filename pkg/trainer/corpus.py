"""
Procedural toy corpus: spheres, boxes and wedges at random poses.
"""
from typing import NamedTuple

import numpy as np

from geom_core.mesh import TriangleMesh, mesh_normalize
from geom_core.primitives import box, icosphere, wedge
from geom_core.transforms import RigidTransform

KINDS = ('sphere', 'box', 'wedge')


class ToyShape(NamedTuple):
    name: str
    kind: str
    mesh: TriangleMesh


def _primitive(kind, rng):
    if kind == 'sphere':
        return icosphere(3, radius=1.0)
    if kind == 'box':
        half = rng.uniform(0.3, 0.6, 3)
        return box(-half, half)
    if kind == 'wedge':
        return wedge(half_width=rng.uniform(0.3, 0.6), height=rng.uniform(0.3, 0.6), half_length=rng.uniform(0.3, 0.6))
    raise ValueError(f"unknown shape kind {kind!r}")


def toy_shape(kind, seed):
    """One normalized shape; the extent is drawn from [0.95, 1.9]."""
    rng = np.random.default_rng(seed)
    mesh = _primitive(kind, rng)
    pose = RigidTransform.random(rng)
    posed = TriangleMesh(pose.apply(mesh.vertices), mesh.triangles)
    normalized, _, _ = mesh_normalize(posed)
    return normalized.transformed(rng.uniform(0.5, 1.0))


def toy_corpus(count=10, seed=0, kinds=KINDS):
    """`count` shapes cycling through `kinds`, each with its own seed."""
    seeds = np.random.default_rng(seed).integers(0, 2 ** 31, count)
    return [
        ToyShape(f"{kinds[index % len(kinds)]}-{index:02d}", kinds[index % len(kinds)],
                 toy_shape(kinds[index % len(kinds)], int(seeds[index])))
        for index in range(count)
    ]


def train_test_split(seed=0, train=10, test=5, kinds=KINDS, test_kinds=None):
    """Disjoint training and held-out corpora drawn from different seeds."""
    return toy_corpus(train, seed, kinds), toy_corpus(test, seed + 1, test_kinds or kinds)
