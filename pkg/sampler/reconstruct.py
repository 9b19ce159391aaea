from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from autodiff.tensor import Tensor
from flow.prior import euler_step, predict_clean
from phantoms.image import Image
from sampler.guidance import GuidanceConfig, GuidanceContext, composite_objective, guided_velocity
from sampler.workers import run_candidates


logger = logging.getLogger("sampler")


@dataclass
class Candidate:
    index: int
    state: np.ndarray  # x at t = warm_start_steps / T
    score: float  # composite objective at the clean estimate from that state
    diagnostics: list[dict] = field(default_factory=list)


@dataclass
class Reconstruction:
    image: Image | np.ndarray
    seed_index: int
    scores: list[float]
    diagnostics: list[dict]


def candidate_noise(seed: int, index: int, shape: tuple[int, ...]) -> np.ndarray:
    return np.random.default_rng((seed, index)).standard_normal(shape)


def _velocity(model, x: np.ndarray, t: float, ctx: GuidanceContext, cfg: GuidanceConfig,
              guided: bool = True) -> tuple[np.ndarray, dict]:
    if guided:
        return guided_velocity(model, x, t, ctx, cfg)
    return model(Tensor(x), t).data, {"t": t, "dc_loss": "", "pamri_loss": "", "grad_norm": 0.0}


def warm_start(model, ctx: GuidanceContext, cfg: GuidanceConfig, index: int) -> Candidate:
    """Integrate candidate <index> for the warm-start steps and score its clean estimate."""
    x = candidate_noise(cfg.seed, index, ctx.operator.input_shape)
    n_steps = cfg.warm_start_steps
    dt = 1.0 / cfg.steps
    rows = []
    for k in range(n_steps):
        v, row = _velocity(model, x, k / cfg.steps, ctx, cfg, guided=cfg.warm_start_guided)
        x = euler_step(x, v, dt)
        rows.append(row | {"candidate": index})
    t_noise = n_steps / cfg.steps
    estimate = predict_clean(model, x, t_noise)
    return Candidate(index, x, composite_objective(estimate, ctx, cfg), rows)


def noise_select(model, ctx: GuidanceContext, cfg: GuidanceConfig) -> tuple[Candidate, list[float]]:
    """
    Warm-start every candidate seed and keep the one whose clean estimate has the lowest
    composite objective; ties go to the lowest index.
    """
    arguments = [(model, ctx, cfg, index) for index in range(cfg.candidates)]
    candidates = run_candidates(warm_start, arguments, cfg.workers)
    scores = [c.score for c in candidates]
    winner = candidates[int(np.argmin(scores))]
    logger.info("noise_select: %d candidates, %d warm-start steps, chose %d (score %.6g)",
                len(candidates), cfg.warm_start_steps, winner.index, winner.score)
    return winner, scores


def reconstruct(model, ctx: GuidanceContext, cfg: GuidanceConfig) -> Reconstruction:
    """Noise selection, then guided Euler integration of the winning state up to t = 1."""
    winner, scores = noise_select(model, ctx, cfg)
    x = winner.state
    diagnostics = list(winner.diagnostics)
    dt = 1.0 / cfg.steps
    for k in range(cfg.warm_start_steps, cfg.steps):
        v, row = guided_velocity(model, x, k / cfg.steps, ctx, cfg)
        x = euler_step(x, v, dt)
        diagnostics.append(row | {"candidate": winner.index})
    image = Image(x, "target") if x.ndim == 2 else x
    return Reconstruction(image, winner.index, scores, diagnostics)
