from oracle.gaussian import (
    AnalyticVelocity, GaussianPrior, LinearProblem, VelocityEstimate, analytic_posterior,
    analytic_velocity, conditional_mean, mc_velocity_estimate,
)

__all__ = [
    "AnalyticVelocity", "GaussianPrior", "LinearProblem", "VelocityEstimate", "analytic_posterior",
    "analytic_velocity", "conditional_mean", "mc_velocity_estimate",
]
