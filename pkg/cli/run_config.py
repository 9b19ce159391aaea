from __future__ import annotations

from pathlib import Path
from typing import Literal

from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from errors import ConfigError, MissingInputError
from flow.prior import TrainConfig
from pamri.pretrain import SSLConfig
from sampler.guidance import GuidanceConfig


"""
Per-run configuration: one flat key=value file (dotenv syntax, '#' comments) validated by
RunConfig. Unknown keys are rejected. resolved_text() renders every field, defaults
included, in sorted order; feeding that text back reproduces the run.
"""


RESOLVED_NAME = "resolved_config.env"

# reconstruct --ablate arms; "baseline" is the zero-filled / upsampled adjoint
ARMS = ("full", "no-pamri", "no-noiseopt", "no-dc", "vanilla", "baseline")


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    output_dir: str = "runs/default"
    seed: int = Field(0, ge=0)

    # degradation
    task: Literal["sr", "kspace", "blur"] = "sr"
    factor: int = Field(4, ge=1)
    blur_sigma: float = Field(1.5, gt=0)
    acceleration: float = Field(8.0, ge=1)
    center_fraction: float = Field(0.04, ge=0, le=1)
    sigma: float = Field(0.01, ge=0)

    # phantoms
    height: int = Field(32, ge=16)
    width: int = Field(32, ge=16)
    n_train: int = Field(200, ge=1)
    n_test: int = Field(20, ge=1)
    lesion_prob: float = Field(0.5, ge=0, le=1)

    # prior training
    prior_iterations: int = Field(2000, ge=1)
    prior_batch: int = Field(8, ge=1)
    prior_lr: float = Field(1e-3, gt=0)
    prior_width: int = Field(16, ge=1, le=64)

    # PAMRI pretraining
    ssl_iterations: int = Field(500, ge=1)
    ssl_batch: int = Field(64, ge=1)
    ssl_lr: float = Field(1e-3, gt=0)
    patch_size: int = Field(32, ge=8, multiple_of=8)
    tau_min: float = Field(0.05, gt=0)
    tau_max: float = Field(0.5, gt=0)
    lambda_rec: float = Field(0.5, ge=0)
    nmi_bins: int = Field(32, ge=2)
    jitter: int = Field(4, ge=0, le=4)
    flip_prob: float = Field(0.1, ge=0, le=1)
    encoder_width: int = Field(8, ge=1)
    embed_dim: int = Field(64, ge=1)

    # guided sampling
    steps: int = Field(100, ge=1)
    alpha0: float = Field(1.0, ge=0)
    alpha_mode: Literal["gradnorm", "constant", "posterior"] = "gradnorm"
    prior_variance: float = Field(1.0, gt=0)
    lambda_p: float = Field(0.1, ge=0)
    candidates: int = Field(8, ge=1)
    t_noise_frac: float = Field(0.2, ge=0, le=1)
    stop_grad_through_prior: bool = False
    warm_start_guided: bool = True

    def train_config(self) -> TrainConfig:
        return TrainConfig(iterations=self.prior_iterations, batch_size=self.prior_batch,
                           learning_rate=self.prior_lr, seed=self.seed, width=self.prior_width)

    def ssl_config(self) -> SSLConfig:
        try:
            return SSLConfig(patch_size=self.patch_size, batch_size=self.ssl_batch, tau_min=self.tau_min,
                             tau_max=self.tau_max, lambda_rec=self.lambda_rec, nmi_bins=self.nmi_bins,
                             jitter=self.jitter, flip_prob=self.flip_prob, iterations=self.ssl_iterations,
                             learning_rate=self.ssl_lr, seed=self.seed, width=self.encoder_width,
                             embed_dim=self.embed_dim)
        except ValidationError as exc:
            raise ConfigError(_describe(exc)) from None

    def guidance_config(self, arm: str = "full", workers: int = 1) -> GuidanceConfig:
        overrides = {
            "full": {},
            "no-pamri": {"lambda_p": 0.0},
            "no-noiseopt": {"candidates": 1},
            "no-dc": {"use_dc": False},
            "vanilla": {"lambda_p": 0.0, "candidates": 1},
        }
        if arm not in overrides:
            raise ConfigError(f"unknown ablation arm {arm!r} (expected one of {', '.join(ARMS)})")
        settings = dict(steps=self.steps, alpha0=self.alpha0, alpha_mode=self.alpha_mode, lambda_p=self.lambda_p,
                        prior_variance=self.prior_variance,
                        candidates=self.candidates, t_noise_frac=self.t_noise_frac, patch_size=self.patch_size,
                        seed=self.seed, stop_grad_through_prior=self.stop_grad_through_prior,
                        warm_start_guided=self.warm_start_guided, workers=workers)
        return GuidanceConfig(**(settings | overrides[arm]))

    def resolved_text(self) -> str:
        values = self.model_dump()
        lines = [f"{key}={_render(values[key])}" for key in sorted(values)]
        return "\n".join(lines) + "\n"


def _render(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _describe(exc: ValidationError) -> str:
    parts = []
    for error in exc.errors():
        key = ".".join(str(item) for item in error["loc"]) or "config"
        parts.append(f"{key}: {error['msg']}")
    return "invalid run config: " + "; ".join(parts)


def parse_run_config(values: dict) -> RunConfig:
    cleaned = {key.strip().lower(): value for key, value in values.items() if value is not None}
    try:
        return RunConfig(**cleaned)
    except ValidationError as exc:
        raise ConfigError(_describe(exc)) from None


def load_run_config(path: str | Path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise MissingInputError(f"missing config file: {path}")
    return parse_run_config(dotenv_values(path))
