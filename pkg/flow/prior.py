from __future__ import annotations

import logging
from typing import Sequence

import numpy as np
from pydantic import BaseModel, Field

from autodiff import ops
from autodiff.optim import Adam
from autodiff.tensor import Tape, Tensor
from errors import NonFiniteError, TimeRangeError, TrainingDivergedError
from flow.velocity import VelocityMLP, VelocityModel, VelocityNetwork
from phantoms.image import Image


"""
Rectified-flow prior: x_t = (1 - t) z + t x1 with z ~ N(0, I), trained so that v(x_t, t)
regresses the straight-line velocity x1 - z. Sampling integrates dx/dt = v from t = 0
with forward Euler on the uniform grid t_k = k / T.
"""


logger = logging.getLogger("training")


class TrainConfig(BaseModel):
    iterations: int = Field(2000, ge=1)
    batch_size: int = Field(8, ge=1)
    learning_rate: float = Field(1e-3, gt=0)
    seed: int = 0
    width: int = Field(16, ge=1, le=64)
    checkpoint_path: str = "prior.mpfw"
    log_every: int = Field(50, ge=1)


def _state(value) -> np.ndarray:
    return value.pixels if isinstance(value, Image) else np.asarray(value, dtype=np.float64)


def _check_time(op: str, t: float, allow_one: bool = True) -> None:
    if not (0.0 <= t <= 1.0) or (t == 1.0 and not allow_one):
        raise TimeRangeError(op, t)


def interpolate(z, x1, t: float):
    """Straight-line point between noise <z> and data <x1>; Images in, Image out."""
    _check_time("interpolate", t)
    z_data, x1_data = _state(z), _state(x1)
    if z_data.shape != x1_data.shape:
        raise ValueError(f"interpolate: shapes differ {z_data.shape} vs {x1_data.shape}")
    x_t = (1.0 - t) * z_data + t * x1_data
    return Image(x_t, "target") if isinstance(x1, Image) else x_t


def _as_batch(model: VelocityNetwork, x1: np.ndarray) -> np.ndarray:
    # conv models take (N, 1, H, W); MLPs take (N, d)
    if isinstance(model, VelocityModel) and x1.ndim == 3:
        return x1[:, None]
    return x1


def fm_loss(model: VelocityNetwork, x1, rng: np.random.Generator,
            z: np.ndarray | None = None, t: np.ndarray | None = None) -> Tensor:
    """
    Mean over the batch of ||v(x_t, t) - (x1 - z)||^2, with t ~ U[0, 1] and z ~ N(0, I)
    drawn per sample unless given.
    """
    x1 = _as_batch(model, np.asarray(x1, dtype=np.float64))
    n = x1.shape[0]
    if n == 0:
        raise ValueError("fm_loss: empty batch")
    if z is None:
        z = rng.standard_normal(x1.shape)
    if t is None:
        t = rng.uniform(0.0, 1.0, size=n)
    z = np.asarray(z, dtype=np.float64).reshape(x1.shape)
    t = np.asarray(t, dtype=np.float64).reshape(n)
    t_b = t.reshape((n,) + (1,) * (x1.ndim - 1))
    x_t = (1.0 - t_b) * z + t_b * x1

    residual = ops.sub(model.forward_batch(Tensor(x_t), t), Tensor(x1 - z))
    return ops.mul(ops.sum_(ops.square(residual)), 1.0 / n)


def _moving_average(values: Sequence[float], window: int) -> float:
    return float(np.mean(values[-window:]))


def train_prior(dataset, config: TrainConfig, model: VelocityNetwork | None = None,
                store=None) -> VelocityNetwork:
    """
    Adam on fm_loss over minibatches drawn with replacement from <dataset> (Images or an array
    of shape (N, H, W) / (N, d)). The per-iteration losses end up in model.history; with an
    ArtifactStore the checkpoint and the (iter, loss) CSV are written to it.
    """
    data = np.stack([_state(item) for item in dataset]) if not isinstance(dataset, np.ndarray) else dataset
    data = np.asarray(data, dtype=np.float64)
    if len(data) == 0:
        raise ValueError("train_prior: empty dataset")
    if model is None:
        if data.ndim == 3:
            model = VelocityModel(width=config.width, seed=config.seed)
        else:
            model = VelocityMLP(dim=data.shape[1], seed=config.seed)

    rng = np.random.default_rng(config.seed)
    optimizer = Adam(model.params, lr=config.learning_rate)
    names = list(model.params)
    history: list[dict] = []
    losses: list[float] = []
    logger.info("train_prior: %d samples of shape %s, %d parameters, %d iterations",
                len(data), data.shape[1:], model.num_parameters, config.iterations)

    for iteration in range(1, config.iterations + 1):
        batch = data[rng.integers(0, len(data), size=config.batch_size)]
        try:
            with Tape() as tape:
                loss = fm_loss(model, batch, rng)
                grads = tape.gradient(loss, [model.params[name] for name in names])
        except NonFiniteError as exc:
            logger.error("train_prior: non-finite value at iteration %d: %s", iteration, exc)
            raise TrainingDivergedError("train_prior", iteration, float("nan")) from exc
        value = loss.item()
        if not all(np.isfinite(g).all() for g in grads):
            raise TrainingDivergedError("train_prior", iteration, value)
        optimizer.step(dict(zip(names, grads)))

        losses.append(value)
        history.append({"iter": iteration, "loss": value})
        if iteration % config.log_every == 0 or iteration == config.iterations:
            logger.info("train_prior: iter %d loss %.6f (avg %.6f)",
                        iteration, value, _moving_average(losses, 100))

    model.history = history
    if store is not None:
        store.write_weights(config.checkpoint_path, model.state_dict())
        store.write_csv("prior_log.csv", ["iter", "loss"], history)
    return model


def predict_clean(model, x_t, t: float):
    """
    One-step clean-image estimate x_t + (1 - t) v(x_t, t). Tensors stay on the tape, so the
    estimate can be differentiated in x_t; t = 1 returns x_t unchanged.
    """
    _check_time("predict_clean", t)
    if isinstance(x_t, Tensor):
        if t == 1.0:
            return x_t
        return ops.add(x_t, ops.mul(model(x_t, t), 1.0 - t))
    state = _state(x_t)
    estimate = state if t == 1.0 else state + (1.0 - t) * model(Tensor(state), t).data
    return Image(estimate, "target") if isinstance(x_t, Image) else estimate


def euler_step(x: np.ndarray, v: np.ndarray, dt: float) -> np.ndarray:
    return x + dt * v


def euler_sample(model, z, steps: int):
    """x_{k+1} = x_k + v(x_k, k / T) / T from x_0 = z."""
    if steps < 1:
        raise ValueError(f"euler_sample: steps must be >= 1, got {steps}")
    x = _state(z).copy()
    dt = 1.0 / steps
    for k in range(steps):
        x = euler_step(x, model(Tensor(x), k / steps).data, dt)
    return Image(x, "target") if isinstance(z, Image) else x
