"""
Auto-decoder training over several shapes and the frozen-decoder fit of a
new shape.
"""
import logging
from typing import NamedTuple

import numpy as np

from coord_field.frames import new_field
from coord_field.grid import VoxelGrid, build_grid
from geom_core.mesh import TriangleMesh
from neural_sdf.mlp import decode_loss, loss_and_gradients
from neural_sdf.optim import AdamState, adam_step
from sdf_oracle.distance import MeshSdf
from sdf_oracle.sampling import build_sample_set

from .checkpoint import Checkpoint
from .config import InferConfig, TrainConfig
from .exceptions import ConfigMismatch, NonFiniteLoss

logger = logging.getLogger(__name__)

FRAME_KEYS = ('quaternions', 'origins')


class ShapeData(NamedTuple):
    samples: object
    field: object


class TrainResult(NamedTuple):
    checkpoint: Checkpoint
    fields: list


class _Pool:
    """Sample rows of one shape grouped by voxel."""

    def __init__(self, samples, field):
        self.samples = samples
        cells, self.starts, self.counts = samples.group_bounds
        self.rows = field.rows(samples.voxels)
        if len(samples) == 0:
            raise ConfigMismatch('a shape has no samples')
        if np.any(self.rows < 0):
            raise ConfigMismatch('samples reference cells the field does not hold', cells=cells[field.rows(cells) < 0])

    def draw(self, voxels, points, rng):
        """Voxels with replacement, then points without replacement inside each voxel."""
        groups = rng.integers(0, len(self.starts), voxels)
        counts = self.counts[groups]
        keys = rng.random((voxels, int(counts.max())))
        keys[np.arange(keys.shape[1])[None, :] >= counts[:, None]] = np.inf
        order = np.argsort(keys, axis=1, kind='stable')[:, :points]
        take = np.arange(order.shape[1])[None, :] < np.minimum(points, counts)[:, None]
        return (self.starts[groups][:, None] + order)[take]

    def batch(self, indices):
        return self.rows[indices], self.samples.positions[indices], self.samples.sdf[indices]

    def everything(self):
        return self.batch(np.arange(len(self.samples)))


def _check_shapes(shapes, cfg):
    if not shapes:
        raise ConfigMismatch('no shapes to train on')
    resolutions = {data.samples.resolution for data in shapes}
    if len(resolutions) != 1:
        raise ConfigMismatch(f"sample sets use different grid resolutions {sorted(resolutions)}")
    for index, data in enumerate(shapes):
        if data.field.latent_size != cfg.latent_size:
            raise ConfigMismatch(
                f"shape {index} has latent size {data.field.latent_size}, config expects {cfg.latent_size}",
            )


def _check_loss(value, iteration, shape):
    if not np.isfinite(value):
        raise NonFiniteLoss(f"loss became {value} at iteration {iteration} on shape {shape}",
                            iteration=iteration, shape=shape)


def _field_arrays(field, keys):
    return {key: getattr(field, key) for key in keys}


def _apply(field, updated):
    for key, value in updated.items():
        setattr(field, key, value)


def mean_loss(params, field, samples):
    """Mean L1 error of the decoded field over every sample."""
    rows, positions, sdf = _Pool(samples, field).everything()
    return decode_loss(params, field, rows, positions, sdf).loss / len(samples)


def train(shapes, cfg=None, params=None):
    """Jointly fit the decoder, frames and latents of every shape.

    shapes is a sequence of (SampleSet, CoordinateField). The returned fields
    are updated copies; the inputs are not modified.
    """
    cfg = cfg or TrainConfig.from_settings()
    shapes = [ShapeData(*data) for data in shapes]
    _check_shapes(shapes, cfg)
    checkpoint = Checkpoint.initial(
        cfg.model_config, cfg.seed, resolution=shapes[0].samples.resolution,
        bounds=shapes[0].samples.bounds, train_config=cfg.describe(),
    )
    if params is not None:
        checkpoint.params = params.copy()
    fields = [data.field.copy() for data in shapes]
    pools = [_Pool(data.samples, field) for data, field in zip(shapes, fields)]

    rng = np.random.default_rng(cfg.seed)
    mlp_state = AdamState.for_params(checkpoint.params.named_arrays())
    frame_states = [AdamState.for_params(_field_arrays(field, FRAME_KEYS)) for field in fields]
    latent_states = [AdamState.for_params(_field_arrays(field, ('latents',))) for field in fields]
    per_batch = min(cfg.shapes_per_batch, len(shapes))
    logger.info(f"Training {len(shapes)} shapes for {cfg.iterations} iterations ({checkpoint.config.describe()})")

    for iteration in range(cfg.iterations):
        scale = 0.5 ** (iteration // cfg.halving_period)
        chosen = np.sort(rng.choice(len(shapes), size=per_batch, replace=False))
        mlp_grads = None
        total, count = 0.0, 0
        for shape in chosen:
            field = fields[shape]
            rows, positions, sdf = pools[shape].batch(
                pools[shape].draw(cfg.voxels_per_shape, cfg.points_per_voxel, rng),
            )
            result, grads = loss_and_gradients(checkpoint.params, field, rows, positions, sdf)
            _check_loss(result.loss, iteration, int(shape))
            total += result.loss
            count += len(rows)
            if mlp_grads is None:
                mlp_grads = dict(grads.params)
            else:
                for name, value in grads.params.items():
                    mlp_grads[name] = mlp_grads[name] + value
            if cfg.learn_frames:
                _apply(field, adam_step(
                    frame_states[shape], _field_arrays(field, FRAME_KEYS),
                    {'quaternions': grads.quaternions, 'origins': grads.origins},
                    cfg.lr_frames * scale, unit_rows=('quaternions',),
                ))
            _apply(field, adam_step(
                latent_states[shape], _field_arrays(field, ('latents',)), {'latents': grads.latents},
                cfg.lr_latents * scale,
            ))
        checkpoint.params = checkpoint.params.with_arrays(
            adam_step(mlp_state, checkpoint.params.named_arrays(), mlp_grads, cfg.lr_mlp * scale),
        )
        if not checkpoint.params.is_finite():
            raise NonFiniteLoss(f"decoder parameters became non-finite at iteration {iteration}",
                                iteration=iteration)
        checkpoint.loss_history.append(total / count)
        checkpoint.iteration = iteration + 1
        if checkpoint.iteration % cfg.log_every == 0:
            logger.info(f"iteration {checkpoint.iteration}: mean L1 {checkpoint.loss_history[-1]:.6f} (lr x{scale:g})")

    return TrainResult(checkpoint, fields)


def prepare_shape(mesh, resolution, per_voxel, seed=0, latent_size=125, frame_init='pca',
                  bounds=(-1.0, -1.0, -1.0, 1.0, 1.0, 1.0)):
    """Grid, samples and an initialized field for a normalized mesh."""
    grid = build_grid(mesh, resolution, bounds)
    samples = build_sample_set(mesh, grid, per_voxel, seed)
    oracle = MeshSdf(mesh) if frame_init == 'pca' else None
    field = new_field(grid, latent_size, seed=seed, frame_init=frame_init, samples=samples, oracle=oracle)
    return ShapeData(samples, field)


def shape_from_samples(samples, latent_size=125, seed=0, frame_init='pca'):
    """Field for a stored sample set; PCA frames use only the samples."""
    grid = VoxelGrid(samples.resolution, samples.bounds, samples.cells)
    field = new_field(grid, latent_size, seed=seed, frame_init=frame_init, samples=samples)
    return ShapeData(samples, field)


def infer_fit(checkpoint, source, cfg=None, return_samples=False):
    """Fit frames and latents of one shape against the frozen decoder.

    source is a normalized TriangleMesh or a SampleSet. Frames are
    initialized and learned the way the checkpoint was trained unless cfg
    says otherwise (PCA and learned by default); latents are drawn fresh.
    Decoder parameters are never written.
    """
    cfg = cfg or InferConfig.from_settings()
    frame_init, learn_frames = cfg.frames_for(checkpoint)
    if isinstance(source, TriangleMesh):
        resolution = cfg.resolution or checkpoint.resolution or 32
        data = prepare_shape(source, resolution, cfg.per_voxel, cfg.seed, checkpoint.config.latent_size,
                             frame_init=frame_init, bounds=checkpoint.bounds)
    else:
        data = shape_from_samples(source, checkpoint.config.latent_size, cfg.seed, frame_init=frame_init)

    field = data.field.copy()
    pool = _Pool(data.samples, field)
    rng = np.random.default_rng(cfg.seed)
    keys = (FRAME_KEYS if learn_frames else ()) + ('latents',)
    state = AdamState.for_params(_field_arrays(field, keys))
    params = checkpoint.params
    for iteration in range(cfg.iterations):
        rows, positions, sdf = pool.batch(pool.draw(cfg.voxels_per_step, cfg.points_per_voxel, rng))
        result, grads = loss_and_gradients(params, field, rows, positions, sdf)
        _check_loss(result.loss, iteration, 0)
        gradients = {'quaternions': grads.quaternions, 'origins': grads.origins, 'latents': grads.latents}
        _apply(field, adam_step(
            state, _field_arrays(field, keys), {key: gradients[key] for key in keys},
            cfg.lr, unit_rows=('quaternions',) if learn_frames else (),
        ))
        if (iteration + 1) % 100 == 0:
            logger.info(f"fit iteration {iteration + 1}: mean L1 {result.loss / len(rows):.6f}")
    if return_samples:
        return field, data.samples
    return field


def window_trend(history, window):
    """Fraction of consecutive window means that do not increase."""
    history = np.asarray(history, dtype=np.float64)
    windows = len(history) // window
    if windows < 2:
        return 1.0
    means = history[:windows * window].reshape(windows, window).mean(axis=1)
    return float(np.mean(means[1:] <= means[:-1]))
