"""
Desk-scale ablation: identity frames with a linear decoder, PCA frames with
a linear decoder, and PCA frames with a quadratic output layer.
"""
import logging
from typing import NamedTuple

import numpy as np

from surface_extract.metrics import evaluate

from .config import InferConfig, TrainConfig
from .training import infer_fit, prepare_shape, train

logger = logging.getLogger(__name__)

VARIANTS = {
    'identity-linear': {'frame_init': 'identity', 'learn_frames': False, 'quadratic_layers': 0},
    'pca-linear': {'frame_init': 'pca', 'learn_frames': True, 'quadratic_layers': 0},
    'pca-quadratic': {'frame_init': 'pca', 'learn_frames': True, 'quadratic_layers': 1},
}


class VariantResult(NamedTuple):
    name: str
    mean_chamfer: float
    chamfers: list
    final_loss: float
    checkpoint: object = None
    fields: list = None


def desk_config(**overrides):
    """Training settings small enough for a desktop CPU."""
    defaults = {
        'shapes_per_batch': 10, 'voxels_per_shape': 128, 'points_per_voxel': 8,
        'iterations': 20000, 'halving_period': 5000, 'latent_size': 16, 'hidden': 64, 'depth': 4,
    }
    defaults.update(overrides)
    return TrainConfig.from_settings(**defaults)


def run_variant(name, train_shapes, test_shapes, base, infer, resolution=16, per_voxel=24,
                mc_resolution=64, n_points=10000):
    cfg = base.with_changes(**VARIANTS[name])
    shapes = [
        prepare_shape(shape.mesh, resolution, per_voxel, seed=cfg.seed + index, latent_size=cfg.latent_size,
                      frame_init=cfg.frame_init)
        for index, shape in enumerate(train_shapes)
    ]
    result = train(shapes, cfg)
    chamfers = []
    for index, shape in enumerate(test_shapes):
        field = infer_fit(result.checkpoint, shape.mesh, infer.with_changes(
            seed=infer.seed + index, frame_init=cfg.frame_init, learn_frames=cfg.learn_frames,
        ))
        report = evaluate(field, result.checkpoint, shape.mesh, mc_resolution, n_points, seed=index)
        # An empty extraction counts as a large error
        chamfers.append(report.chamfer if report.ok else 1.0)
    mean = float(np.mean(chamfers))
    logger.info(f"variant {name}: mean held-out chamfer {mean:.6g}")
    final = float(result.checkpoint.loss_history[-1]) if cfg.iterations else None
    return VariantResult(name, mean, chamfers, final, result.checkpoint, result.fields)


def run_ablation(train_shapes, test_shapes, base=None, infer=None, variants=tuple(VARIANTS), **options):
    """Mean held-out chamfer per variant, in the order given."""
    base = base or desk_config()
    infer = infer or InferConfig.from_settings(voxels_per_step=128, points_per_voxel=8, iterations=800)
    return [run_variant(name, train_shapes, test_shapes, base, infer, **options) for name in variants]
