from sampler.guidance import (
    GuidanceConfig, GuidanceContext, composite_objective, dc_loss, guided_velocity, pamri_loss, posterior_step,
)
from sampler.reconstruct import Reconstruction, candidate_noise, noise_select, reconstruct

__all__ = [
    "GuidanceConfig", "GuidanceContext", "composite_objective", "dc_loss", "guided_velocity", "pamri_loss",
    "posterior_step",
    "Reconstruction", "candidate_noise", "noise_select", "reconstruct",
]
