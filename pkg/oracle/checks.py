from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

from autodiff import ops
from autodiff.gradcheck import finite_difference_check
from autodiff.tensor import Tensor
from flow.prior import euler_sample, fm_loss, predict_clean
from flow.velocity import VelocityMLP
from operators.degradation import (Downsample, ForwardOperator, GaussianBlur, KSpaceMask, MatrixOperator,
                                   Measurement, make_mask)
from operators.fourier import dft2, naive_dft2
from oracle.gaussian import (AnalyticVelocity, GaussianPrior, LinearProblem, analytic_posterior, analytic_velocity,
                             conditional_mean, mc_velocity_estimate)
from pamri.encoders import DecoderPair, EncoderPair
from pamri.losses import nce_loss, rec_loss
from sampler.guidance import GuidanceConfig, GuidanceContext, dc_loss, pamri_loss
from sampler.reconstruct import candidate_noise, reconstruct


"""
Self-checks run by `verify-oracle`. Each check returns a CheckResult with the worst observed
error and the tolerance it was held to; run_checks runs all of them in a fixed order.
"""


logger = logging.getLogger("evaluation")

ADJOINT_TOL = 1e-10
DFT_TOL = 1e-9
TRANSPORT_TOL = 1e-12
SIGN_TOL = 1e-10
GRAD_TOL = 1e-5


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    tolerance: float

    def row(self) -> dict:
        return {"check": self.name, "passed": int(self.passed), "value": self.value, "tolerance": self.tolerance}


class ConstantVelocity:
    """v(x, t) = velocity everywhere; with velocity = x1 - z the Euler path is the straight line."""

    def __init__(self, velocity: np.ndarray):
        self.velocity = np.asarray(velocity, dtype=np.float64)

    def __call__(self, x: Tensor, t: float) -> Tensor:
        return Tensor(self.velocity.copy())


def random_spd(dim: int, rng: np.random.Generator, floor: float = 0.1) -> np.ndarray:
    factor = rng.standard_normal((dim, dim)) / np.sqrt(dim)
    return factor @ factor.T + floor * np.eye(dim)


def random_prior(dim: int, rng: np.random.Generator) -> GaussianPrior:
    return GaussianPrior(rng.normal(0.0, 0.5, size=dim), random_spd(dim, rng))


def adjoint_error(op: ForwardOperator, rng: np.random.Generator) -> float:
    """Relative gap between <F x, m> and <x, F* m> for random x and m."""
    x = rng.standard_normal(op.input_shape)
    m = rng.standard_normal(op.output_shape)
    lhs = float(np.sum(op.forward(x) * m))
    rhs = float(np.sum(x * op.adjoint_data(m)))
    return abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1e-300)


def _operator_factories(shape: tuple[int, int]) -> dict[str, Callable[[int], ForwardOperator]]:
    h, w = shape
    return {
        "downsample_x2": lambda seed: Downsample(2, shape),
        "downsample_x4": lambda seed: Downsample(4, shape),
        "downsample_x8": lambda seed: Downsample(8, shape),
        "gaussian_blur": lambda seed: GaussianBlur(1.5, shape),
        "kspace_mask": lambda seed: KSpaceMask(make_mask(h, w, 4.0, 0.08, seed)),
        "matrix": lambda seed: MatrixOperator(np.random.default_rng(seed).standard_normal((4, 16))),
    }


def check_adjoints(seed: int = 0, instances: int = 50, shape: tuple[int, int] = (32, 32)) -> list[CheckResult]:
    results = []
    for name, factory in _operator_factories(shape).items():
        rng = np.random.default_rng((seed, len(results)))
        worst = max(adjoint_error(factory(seed + i), rng) for i in range(instances))
        results.append(CheckResult(f"adjoint_{name}", worst < ADJOINT_TOL, worst, ADJOINT_TOL))
    return results


def check_dft(seed: int = 0) -> CheckResult:
    x = np.random.default_rng(seed).standard_normal((8, 8))
    error = float(np.max(np.abs(dft2(x) - naive_dft2(x))))
    return CheckResult("dft_matches_naive", error < DFT_TOL, error, DFT_TOL)


def check_exact_transport(seed: int = 0, step_counts=(1, 10, 100)) -> CheckResult:
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((16, 16))
    x1 = rng.uniform(0.0, 1.0, size=(16, 16))
    field = ConstantVelocity(x1 - z)
    error = max(float(np.max(np.abs(euler_sample(field, z, steps) - x1))) for steps in step_counts)
    return CheckResult("exact_transport", error <= TRANSPORT_TOL, error, TRANSPORT_TOL)


def check_clean_projection_sign(seed: int = 0, dim: int = 4) -> CheckResult:
    """x_t + (1 - t) v*(x_t, t) must be the conditional mean E[x1 | x_t]."""
    rng = np.random.default_rng(seed)
    prior = random_prior(dim, rng)
    field = AnalyticVelocity(prior)
    error = 0.0
    for t in (0.0, 0.25, 0.5, 0.9, 0.99):
        x_t = rng.standard_normal(dim)
        estimate = predict_clean(field, x_t, t)
        error = max(error, float(np.max(np.abs(estimate - conditional_mean(prior, x_t, t)))))
    return CheckResult("clean_projection_sign", error < SIGN_TOL, error, SIGN_TOL)


def check_monte_carlo_velocity(seed: int = 0, queries: int = 20, dim: int = 2, n_samples: int = 50_000,
                               bandwidth: float = 0.06) -> CheckResult:
    """
    analytic_velocity against kernel-regression estimates at <queries> points drawn from the
    x_t marginal. Passes when at least 95% of coordinates lie within 3 bootstrap standard
    errors and none beyond 4; value is the worst |difference| / SE.
    """
    rng = np.random.default_rng(seed)
    prior = random_prior(dim, rng)
    ratios = []
    for query in range(queries):
        t = float(rng.uniform(0.2, 0.8))
        x_t = (1.0 - t) * rng.standard_normal(dim) + t * prior.sample(1, rng)[0]
        estimate = mc_velocity_estimate(prior, x_t, t, n_samples, bandwidth, seed=seed * 1000 + query)
        exact = analytic_velocity(prior, x_t, t)
        ratios.append(np.abs(estimate.mean - exact) / np.maximum(estimate.standard_error, 1e-12))
    ratios = np.concatenate(ratios)
    passed = float(np.mean(ratios <= 3.0)) >= 0.95 and bool(np.all(ratios <= 4.0))
    return CheckResult("analytic_vs_monte_carlo", passed, float(ratios.max()), 3.0)


def check_posterior_limits(seed: int = 0, dim: int = 6) -> list[CheckResult]:
    """A = 0 must return the prior; A = I with tiny noise must pin the mean to y."""
    rng = np.random.default_rng(seed)
    prior = random_prior(dim, rng)

    mean, cov = analytic_posterior(prior, LinearProblem(np.zeros((1, dim)), 0.1, np.zeros(1)))
    zero_error = max(float(np.max(np.abs(mean - prior.mean))), float(np.max(np.abs(cov - prior.covariance))))

    y = rng.standard_normal(dim)
    mean, _ = analytic_posterior(prior, LinearProblem(np.eye(dim), 1e-6, y))
    identity_error = float(np.max(np.abs(mean - y)))
    return [
        CheckResult("posterior_zero_operator", zero_error < 1e-12, zero_error, 1e-12),
        CheckResult("posterior_identity_operator", identity_error < 1e-6, identity_error, 1e-6),
    ]


def check_degenerate_sampler(seed: int = 0, dim: int = 8, steps: int = 10) -> CheckResult:
    """No guidance, one candidate, no warm start: guided sampling must be plain Euler sampling."""
    rng = np.random.default_rng(seed)
    prior = random_prior(dim, rng)
    field = AnalyticVelocity(prior)
    op = MatrixOperator(rng.standard_normal((2, dim)))
    ctx = GuidanceContext(op, Measurement(rng.standard_normal(2)))
    cfg = GuidanceConfig(steps=steps, alpha0=0.0, lambda_p=0.0, candidates=1, t_noise_frac=0.0, seed=seed)
    guided = reconstruct(field, ctx, cfg).image
    plain = euler_sample(field, candidate_noise(seed, 0, (dim,)), steps)
    error = float(np.max(np.abs(guided - plain)))
    return CheckResult("degenerate_sampler", error == 0.0, error, 0.0)


def _gradient_cases(seed: int) -> dict[str, tuple[Callable[[Tensor], Tensor], np.ndarray, float]]:
    rng = np.random.default_rng(seed)

    op = KSpaceMask(make_mask(8, 8, 2.0, 0.25, seed))
    y = Measurement(rng.standard_normal(op.output_shape), kind="complex")

    w_fixed = ops.l2_normalize(Tensor(rng.standard_normal((4, 6))), axis=1)
    tau = rng.uniform(0.05, 0.5, size=(4, 4))
    tau = 0.5 * (tau + tau.T)

    mlp = VelocityMLP(dim=3, hidden=8, seed=seed)
    batch = rng.standard_normal((5, 3))
    noise = rng.standard_normal((5, 3))
    times = rng.uniform(0.0, 1.0, size=5)

    def fm(weight: Tensor) -> Tensor:
        mlp.params["hidden.w"] = weight
        return fm_loss(mlp, batch, rng, z=noise, t=times)

    encoders = EncoderPair.create(width=2, embed_dim=4, seed=seed)
    decoders = DecoderPair.create(patch_size=8, width=2, embed_dim=4, seed=seed)
    aux = rng.uniform(0.0, 1.0, size=(8, 8))
    p_aux = rng.uniform(0.0, 1.0, size=(2, 1, 8, 8))

    def rec(p_tar: Tensor) -> Tensor:
        return rec_loss(decoders, encoders, ops.reshape(p_tar, (2, 1, 8, 8)), Tensor(p_aux))

    return {
        "grad_square_sum": (lambda x: ops.sum_(ops.square(x)), rng.standard_normal((3, 4)), 1e-12),
        "grad_dc_loss": (lambda x: dc_loss(op, x, y), rng.standard_normal((8, 8)), 1e-6),
        "grad_nce_loss": (lambda x: nce_loss(ops.l2_normalize(x, axis=1), w_fixed, tau),
                          rng.standard_normal((4, 6)), 1e-6),
        "grad_fm_loss": (fm, mlp.params["hidden.w"].data.copy(), 1e-6),
        "grad_pamri_loss": (lambda x: pamri_loss(encoders, x, aux, patch_size=8),
                            rng.uniform(0.0, 1.0, size=(8, 8)), 1e-6),
        "grad_rec_loss": (rec, rng.uniform(0.0, 1.0, size=(2 * 8 * 8,)), 1e-6),
    }


def check_gradients(seed: int = 0) -> list[CheckResult]:
    results = []
    for name, (f, x, floor) in _gradient_cases(seed).items():
        error = finite_difference_check(f, x, floor=floor)
        results.append(CheckResult(name, error < GRAD_TOL, error, GRAD_TOL))
    return results


def run_checks(seed: int = 0) -> list[CheckResult]:
    results = [check_dft(seed)]
    results += check_adjoints(seed)
    results.append(check_exact_transport(seed))
    results.append(check_clean_projection_sign(seed))
    results.append(check_monte_carlo_velocity(seed))
    results += check_posterior_limits(seed)
    results.append(check_degenerate_sampler(seed))
    results += check_gradients(seed)
    for result in results:
        level = logging.INFO if result.passed else logging.ERROR
        logger.log(level, "check %s: %s (value %.3g, tolerance %.3g)",
                   result.name, "pass" if result.passed else "FAIL", result.value, result.tolerance)
    return results
