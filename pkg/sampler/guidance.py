from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from pydantic import BaseModel, Field

from autodiff import ops
from autodiff.tensor import Tape, Tensor
from errors import ConfigError, NonFiniteError, ShapeMismatchError, TimeRangeError
from operators.degradation import ForwardOperator, Measurement
from pamri.encoders import EncoderPair
from pamri.patches import tile
from phantoms.image import Image


"""
Guided velocity: the prior drift minus a step along the gradient, taken with respect to x_t
through the clean estimate x_t + (1 - t) v(x_t, t), of

    ||F(x_hat) - y||^2 + lambda_p * mean_tiles ||phi(tile(x_hat)) - psi(tile(x_aux))||^2
"""


logger = logging.getLogger("sampler")


class GuidanceConfig(BaseModel):
    steps: int = Field(100, ge=1)
    alpha0: float = Field(1.0, ge=0)
    alpha_mode: Literal["gradnorm", "constant", "posterior"] = "gradnorm"
    prior_variance: float = Field(1.0, gt=0)
    lambda_p: float = Field(0.1, ge=0)
    candidates: int = Field(8, ge=1)
    t_noise_frac: float = Field(0.2, ge=0, le=1)
    patch_size: int = Field(32, ge=8)
    seed: int = 0
    use_dc: bool = True
    stop_grad_through_prior: bool = False
    warm_start_guided: bool = True
    workers: int = Field(1, ge=1)

    @property
    def warm_start_steps(self) -> int:
        return int(np.floor(self.t_noise_frac * self.steps))


@dataclass
class GuidanceContext:
    operator: ForwardOperator
    y: Measurement
    x_aux: Image | None = None
    encoders: EncoderPair | None = None
    _aux_cache: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        if self.y.shape != self.operator.output_shape:
            raise ShapeMismatchError("guidance measurement", self.y.shape, self.operator.output_shape)
        if self.x_aux is not None and self.x_aux.shape != self.operator.input_shape:
            raise ShapeMismatchError("guidance aux image", self.x_aux.shape, self.operator.input_shape)

    def has_pamri(self) -> bool:
        return self.encoders is not None and self.x_aux is not None

    def aux_embeddings_for(self, patch_size: int) -> np.ndarray:
        """psi embeddings of the aux tiles, computed once per patch size."""
        if patch_size not in self._aux_cache:
            tiles = tile(self.x_aux.pixels, patch_size)
            self._aux_cache[patch_size] = self.encoders.psi.embed(Tensor(tiles[:, None])).data
        return self._aux_cache[patch_size]


def _tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x.pixels if isinstance(x, Image) else np.asarray(x, dtype=np.float64))


def dc_loss(op: ForwardOperator, x_hat, y: Measurement) -> Tensor:
    """Squared residual ||F(x_hat) - y||^2 (real and imaginary planes for k-space)."""
    residual = ops.sub(op.apply_tensor(_tensor(x_hat)), Tensor(y.data))
    return ops.sum_(ops.square(residual))


def _tile_tensor(x: Tensor, size: int) -> Tensor:
    h, w = x.shape
    if h % size or w % size:
        raise ShapeMismatchError(f"pamri_loss tiling by {size}", (h, w), (h - h % size, w - w % size))
    blocks = ops.transpose(ops.reshape(x, (h // size, size, w // size, size)), (0, 2, 1, 3))
    return ops.reshape(blocks, ((h // size) * (w // size), 1, size, size))


def pamri_loss(encoders: EncoderPair, x_hat, x_aux, patch_size: int = 32,
               aux_embeddings: np.ndarray | None = None) -> Tensor:
    """Mean over tiles of the squared distance between unit target and aux embeddings."""
    x_hat = _tensor(x_hat)
    if aux_embeddings is None:
        aux_pixels = x_aux.pixels if isinstance(x_aux, Image) else np.asarray(x_aux, dtype=np.float64)
        if aux_pixels.shape != x_hat.shape:
            raise ShapeMismatchError("pamri_loss", x_hat.shape, aux_pixels.shape)
        aux_embeddings = encoders.psi.embed(Tensor(tile(aux_pixels, patch_size)[:, None])).data
    u = encoders.phi.embed(_tile_tensor(x_hat, patch_size))
    diff = ops.sub(u, Tensor(aux_embeddings))
    return ops.mul(ops.sum_(ops.square(diff)), 1.0 / u.shape[0])


def _check_terms(ctx: GuidanceContext, cfg: GuidanceConfig) -> None:
    if cfg.lambda_p > 0 and not ctx.has_pamri():
        raise ConfigError("lambda_p > 0 needs trained encoders and an aux image")


def _objective(x_hat: Tensor, ctx: GuidanceContext, cfg: GuidanceConfig) -> tuple[Tensor | None, float, float]:
    """(total, dc value, pamri value); total is None when no term is active."""
    total, dc_value, pamri_value = None, 0.0, 0.0
    if cfg.use_dc:
        total = dc_loss(ctx.operator, x_hat, ctx.y)
        dc_value = total.item()
    if cfg.lambda_p > 0:
        _check_terms(ctx, cfg)
        term = pamri_loss(ctx.encoders, x_hat, ctx.x_aux, cfg.patch_size, ctx.aux_embeddings_for(cfg.patch_size))
        pamri_value = term.item()
        weighted = ops.mul(term, cfg.lambda_p)
        total = weighted if total is None else ops.add(total, weighted)
    return total, dc_value, pamri_value


def composite_objective(x, ctx: GuidanceContext, cfg: GuidanceConfig) -> float:
    """dc_loss + lambda_p * pamri_loss at an image estimate, untracked."""
    x = _tensor(x)
    dc_value = dc_loss(ctx.operator, x, ctx.y).item() if cfg.use_dc else 0.0
    if cfg.lambda_p == 0:
        return dc_value
    _check_terms(ctx, cfg)
    pamri_value = pamri_loss(ctx.encoders, x, ctx.x_aux, cfg.patch_size,
                             ctx.aux_embeddings_for(cfg.patch_size)).item()
    return dc_value + cfg.lambda_p * pamri_value


def posterior_step(t: float, noise_sigma: float, prior_variance: float) -> float:
    """
    (1 - t) / (2 t (r_t^2 + sigma^2)), with r_t^2 = (1 - t)^2 s^2 / (t^2 s^2 + (1 - t)^2) the variance
    of x1 given x_t under an isotropic N(., s^2 I) prior. For such a prior and an operator with
    orthonormal rows, v - alpha_t * grad(dc_loss) is exactly E[x1 - z | x_t, y].
    """
    s2 = prior_variance
    r2 = (1.0 - t) ** 2 * s2 / (t ** 2 * s2 + (1.0 - t) ** 2)
    return (1.0 - t) / (2.0 * t * (r2 + noise_sigma ** 2))


def _step_size(cfg: GuidanceConfig, t: float, grad_norm: float, noise_sigma: float) -> float:
    if cfg.alpha_mode == "gradnorm":
        return cfg.alpha0 / (grad_norm + 1e-8)
    if cfg.alpha_mode == "posterior":
        return cfg.alpha0 * posterior_step(t, noise_sigma, cfg.prior_variance)
    return cfg.alpha0


def guided_velocity(model, x_t: np.ndarray, t: float, ctx: GuidanceContext,
                    cfg: GuidanceConfig) -> tuple[np.ndarray, dict]:
    """
    v(x_t, t) - alpha_t * grad, with alpha_t = alpha0 / (||grad|| + 1e-8) in gradnorm mode,
    alpha0 in constant mode and alpha0 * posterior_step(t, ...) in posterior mode.
    Returns the velocity and a diagnostics row (t, dc_loss, pamri_loss, grad_norm).
    """
    if not (0.0 <= t < 1.0):
        raise TimeRangeError("guided_velocity", t, "[0, 1)")
    active = cfg.alpha0 > 0 and (cfg.use_dc or cfg.lambda_p > 0)
    # at t = 0 the clean estimate carries no information about x_t
    if cfg.alpha_mode == "posterior" and t == 0.0:
        active = False
    if not active:
        velocity = model(Tensor(x_t), t).data
        return velocity, {"t": t, "dc_loss": "", "pamri_loss": "", "grad_norm": 0.0}

    with Tape() as tape:
        x = Tensor(x_t.copy(), requires_grad=True)
        v = model(x, t)
        drift = Tensor(v.data) if cfg.stop_grad_through_prior else v
        x_hat = ops.add(x, ops.mul(drift, 1.0 - t))
        objective, dc_value, pamri_value = _objective(x_hat, ctx, cfg)
        (grad,) = tape.gradient(objective, [x])

    grad_norm = float(np.linalg.norm(grad))
    if not np.isfinite(grad_norm):
        raise NonFiniteError(f"guided_velocity: non-finite guidance gradient at t={t}")
    alpha = _step_size(cfg, t, grad_norm, ctx.y.noise_sigma)
    return v.data - alpha * grad, {"t": t, "dc_loss": dc_value, "pamri_loss": pamri_value, "grad_norm": grad_norm}
