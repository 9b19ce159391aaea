from __future__ import annotations

import logging
from typing import Sequence

import numpy as np
from pydantic import BaseModel, Field, model_validator

from autodiff import ops
from autodiff.optim import Adam
from autodiff.tensor import Tape, Tensor
from errors import ConfigError, NonFiniteError, TrainingDivergedError
from pamri.encoders import DecoderPair, EncoderPair
from pamri.losses import nce_loss, rec_loss
from pamri.patches import extract_patch_pairs
from pamri.similarity import adaptive_tau, nmi_matrix
from phantoms.image import ImagePair


logger = logging.getLogger("training")


class SSLConfig(BaseModel):
    patch_size: int = Field(32, ge=8, multiple_of=8)
    batch_size: int = Field(64, ge=1)
    tau_min: float = Field(0.05, gt=0)
    tau_max: float = Field(0.5, gt=0)
    lambda_rec: float = Field(0.5, ge=0)
    nmi_bins: int = Field(32, ge=2)
    jitter: int = Field(4, ge=0, le=4)
    flip_prob: float = Field(0.1, ge=0, le=1)
    intensity_scale: tuple[float, float] = (0.9, 1.1)
    iterations: int = Field(500, ge=1)
    learning_rate: float = Field(1e-3, gt=0)
    seed: int = 0
    width: int = Field(8, ge=1)
    embed_dim: int = Field(64, ge=1)
    log_every: int = Field(25, ge=1)

    @model_validator(mode="after")
    def _check_temperatures(self):
        if self.tau_min > self.tau_max:
            raise ConfigError(f"tau_min ({self.tau_min}) must not exceed tau_max ({self.tau_max})")
        return self


def _as_patches(batch: np.ndarray) -> Tensor:
    return Tensor(batch[:, None])


def retrieval_accuracy(encoders: EncoderPair, p_tar: np.ndarray, p_aux: np.ndarray) -> float:
    """Fraction of target patches whose most cosine-similar aux patch is their own positive."""
    u = encoders.phi.embed(_as_patches(p_tar)).data
    w = encoders.psi.embed(_as_patches(p_aux)).data
    return float(np.mean(np.argmax(u @ w.T, axis=1) == np.arange(len(u))))


def ssl_step_loss(encoders: EncoderPair, decoders: DecoderPair, p_tar: np.ndarray, p_aux: np.ndarray,
                  cfg: SSLConfig) -> tuple[Tensor, Tensor, Tensor, float]:
    """(total, nce, rec, batch retrieval accuracy) for one batch; total = nce + lambda_rec * rec."""
    tau = adaptive_tau(nmi_matrix(p_tar, p_aux, cfg.nmi_bins), cfg.tau_min, cfg.tau_max)
    x_tar, x_aux = _as_patches(p_tar), _as_patches(p_aux)
    f_tar, f_aux = encoders.phi.features(x_tar), encoders.psi.features(x_aux)
    u, w = ops.l2_normalize(f_tar, axis=1), ops.l2_normalize(f_aux, axis=1)
    nce = nce_loss(u, w, tau)
    rec = rec_loss(decoders, encoders, x_tar, x_aux, features=(f_tar, f_aux))
    total = ops.add(nce, ops.mul(rec, cfg.lambda_rec))
    accuracy = float(np.mean(np.argmax(u.data @ w.data.T, axis=1) == np.arange(len(p_tar))))
    return total, nce, rec, accuracy


def pretrain_pamri(dataset: Sequence[ImagePair], cfg: SSLConfig, store=None,
                   holdout: Sequence[ImagePair] | None = None) -> tuple[EncoderPair, DecoderPair]:
    """
    Minimize nce + lambda_rec * rec with Adam over all four networks. The log row of each
    iteration holds (iter, nce, rec, total, retrieval_acc); retrieval accuracy is measured on
    a fixed batch from <holdout> when given, else on the training batch.
    """
    if not dataset:
        raise ValueError("pretrain_pamri: empty dataset")
    encoders = EncoderPair.create(cfg.width, cfg.embed_dim, cfg.seed)
    decoders = DecoderPair.create(cfg.patch_size, cfg.width, cfg.embed_dim, cfg.seed)
    params = {f"enc.{k}": v for k, v in encoders.params.items()} | {f"dec.{k}": v for k, v in decoders.params.items()}
    names = list(params)
    optimizer = Adam(params, lr=cfg.learning_rate)

    rng = np.random.default_rng(cfg.seed)
    holdout_batch = None
    if holdout:
        holdout_batch = extract_patch_pairs(holdout, cfg, np.random.default_rng((cfg.seed, 99)))[:2]
    logger.info("pretrain_pamri: %d pairs, batch %d, patch %d, %d iterations",
                len(dataset), cfg.batch_size, cfg.patch_size, cfg.iterations)

    history: list[dict] = []
    for iteration in range(1, cfg.iterations + 1):
        p_tar, p_aux, _ = extract_patch_pairs(dataset, cfg, rng)
        try:
            with Tape() as tape:
                total, nce, rec, accuracy = ssl_step_loss(encoders, decoders, p_tar, p_aux, cfg)
                grads = tape.gradient(total, [params[name] for name in names])
        except NonFiniteError as exc:
            raise TrainingDivergedError("pretrain_pamri", iteration, float("nan")) from exc
        if not np.isfinite(total.item()):
            raise TrainingDivergedError("pretrain_pamri", iteration, total.item())
        optimizer.step(dict(zip(names, grads)))

        if holdout_batch is not None and (iteration % cfg.log_every == 0 or iteration == cfg.iterations):
            accuracy = retrieval_accuracy(encoders, *holdout_batch)
        history.append({"iter": iteration, "nce": nce.item(), "rec": rec.item(),
                        "total": total.item(), "retrieval_acc": accuracy})
        if iteration % cfg.log_every == 0 or iteration == cfg.iterations:
            logger.info("pretrain_pamri: iter %d nce %.5f rec %.5f total %.5f retrieval %.3f",
                        iteration, nce.item(), rec.item(), total.item(), accuracy)

    encoders.history = history
    if store is not None:
        store.write_weights("encoders.mpfw", encoders.state_dict())
        store.write_weights("decoders.mpfw", decoders.state_dict())
        store.write_csv("pamri_log.csv", ["iter", "nce", "rec", "total", "retrieval_acc"], history)
    return encoders, decoders
