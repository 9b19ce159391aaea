from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from autodiff import ops
from autodiff.tensor import Tensor
from errors import OracleError, TimeRangeError
from operators.degradation import MatrixOperator, Measurement


"""
Closed forms for Gaussian data x1 ~ N(mu, Sigma) coupled with z ~ N(0, I) through
x_t = (1 - t) z + t x1. (x1, z, x_t) is jointly Gaussian with

    Cov(x_t) = M = (1 - t)^2 I + t^2 Sigma,  Cov(x1, x_t) = t Sigma,  Cov(z, x_t) = (1 - t) I,

so every conditional expectation is an explicit linear map of x_t. Monte Carlo estimators
below check these formulas before the formulas are used to check anything else.
"""


logger = logging.getLogger("evaluation")

MAX_DIMENSION = 64


@dataclass(frozen=True)
class GaussianPrior:
    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64).reshape(-1)
        cov = np.atleast_2d(np.asarray(self.covariance, dtype=np.float64))
        d = mean.size
        if d > MAX_DIMENSION:
            raise OracleError(f"oracle dimension {d} exceeds {MAX_DIMENSION}")
        if cov.shape != (d, d):
            raise OracleError(f"covariance shape {cov.shape} does not match mean of length {d}")
        if np.max(np.abs(cov - cov.T)) > 1e-12 * max(1.0, np.max(np.abs(cov))):
            raise OracleError("covariance is not symmetric")
        if np.linalg.eigvalsh(cov).min() <= 0:
            raise OracleError("covariance is not positive definite")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)

    @property
    def dim(self) -> int:
        return self.mean.size

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        chol = np.linalg.cholesky(self.covariance)
        return self.mean + rng.standard_normal((n, self.dim)) @ chol.T


@dataclass(frozen=True)
class LinearProblem:
    matrix: np.ndarray
    sigma: float
    y: np.ndarray

    def __post_init__(self):
        matrix = np.atleast_2d(np.asarray(self.matrix, dtype=np.float64))
        y = np.asarray(self.y, dtype=np.float64).reshape(-1)
        m, d = matrix.shape
        if m > d:
            raise OracleError(f"linear problem must be under-determined (m={m} > d={d})")
        if y.size != m:
            raise OracleError(f"measurement length {y.size} does not match {m} rows")
        if self.sigma < 0:
            raise OracleError(f"noise sigma must be non-negative, got {self.sigma}")
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(self, "y", y)

    @property
    def operator(self) -> MatrixOperator:
        return MatrixOperator(self.matrix)

    @property
    def measurement(self) -> Measurement:
        return Measurement(self.y, float(self.sigma), "real")


def _marginal_factor(prior: GaussianPrior, t: float):
    marginal = (1.0 - t) ** 2 * np.eye(prior.dim) + t ** 2 * prior.covariance
    try:
        return linalg.cho_factor(marginal)
    except linalg.LinAlgError as exc:
        raise OracleError(f"marginal covariance is singular at t={t}") from exc


def velocity_map(prior: GaussianPrior, t: float) -> tuple[np.ndarray, np.ndarray]:
    """(B, c) with E[x1 - z | x_t] = B x_t + c."""
    if not (0.0 <= t < 1.0):
        raise TimeRangeError("analytic_velocity", t, "[0, 1)")
    factor = _marginal_factor(prior, t)
    # B = (t Sigma - (1 - t) I) M^-1, M symmetric
    gain = linalg.cho_solve(factor, t * prior.covariance - (1.0 - t) * np.eye(prior.dim)).T
    return gain, prior.mean - t * (gain @ prior.mean)


def analytic_velocity(prior: GaussianPrior, x_t: np.ndarray, t: float) -> np.ndarray:
    x_t = np.asarray(x_t, dtype=np.float64)
    gain, offset = velocity_map(prior, t)
    return (gain @ x_t.reshape(-1) + offset).reshape(x_t.shape)


def conditional_mean(prior: GaussianPrior, x_t: np.ndarray, t: float) -> np.ndarray:
    """E[x1 | x_t] = mu + t Sigma M^-1 (x_t - t mu); equals x_t at t = 1."""
    x_t = np.asarray(x_t, dtype=np.float64)
    if not (0.0 <= t <= 1.0):
        raise TimeRangeError("conditional_mean", t)
    if t == 1.0:
        return x_t.copy()
    factor = _marginal_factor(prior, t)
    centered = x_t.reshape(-1) - t * prior.mean
    return (prior.mean + t * prior.covariance @ linalg.cho_solve(factor, centered)).reshape(x_t.shape)


def analytic_posterior(prior: GaussianPrior, problem: LinearProblem) -> tuple[np.ndarray, np.ndarray]:
    """
    Conjugate update in gain form: K = Sigma A^T (A Sigma A^T + sigma^2 I)^-1,
    mean = mu + K (y - A mu), cov = Sigma - K A Sigma. With sigma = 0 the inverse becomes a
    pseudo-inverse, which restricts the posterior to the affine set {x : A x = y}; a y outside
    the range of A is an error.
    """
    a, sigma_sq = problem.matrix, float(problem.sigma) ** 2
    if a.shape[1] != prior.dim:
        raise OracleError(f"operator has {a.shape[1]} columns, prior has dimension {prior.dim}")
    cross = prior.covariance @ a.T
    innovation = a @ cross + sigma_sq * np.eye(a.shape[0])
    if sigma_sq > 0:
        gain = linalg.solve(innovation, cross.T, assume_a="pos").T
    else:
        gain = cross @ np.linalg.pinv(innovation)
    mean = prior.mean + gain @ (problem.y - a @ prior.mean)
    cov = prior.covariance - gain @ a @ prior.covariance
    if sigma_sq == 0 and np.linalg.norm(a @ mean - problem.y) > 1e-8 * (1.0 + np.linalg.norm(problem.y)):
        raise OracleError("noise-free measurement is outside the range of the operator")
    return mean, 0.5 * (cov + cov.T)


@dataclass
class VelocityEstimate:
    mean: np.ndarray
    standard_error: np.ndarray
    effective_sample_size: float
    low_ess: bool


def mc_velocity_estimate(prior: GaussianPrior, x_t: np.ndarray, t: float, n_samples: int,
                         bandwidth: float, seed: int = 0, n_bootstrap: int = 200) -> VelocityEstimate:
    """
    Nadaraya-Watson estimate of E[x1 - z | x_t] from coupled draws with a Gaussian kernel in
    x_t space, with bootstrap standard errors. An effective sample size below 100 is flagged.
    """
    if n_samples < 10_000:
        raise OracleError(f"mc_velocity_estimate needs at least 10^4 samples, got {n_samples}")
    if bandwidth <= 0:
        raise OracleError(f"bandwidth must be positive, got {bandwidth}")
    rng = np.random.default_rng(seed)
    x_t = np.asarray(x_t, dtype=np.float64).reshape(-1)
    x1 = prior.sample(n_samples, rng)
    z = rng.standard_normal((n_samples, prior.dim))
    states = (1.0 - t) * z + t * x1
    targets = x1 - z

    log_w = -np.sum((states - x_t) ** 2, axis=1) / (2.0 * bandwidth ** 2)
    weights = np.exp(log_w - log_w.max())
    estimate = weights @ targets / weights.sum()
    ess = float(weights.sum() ** 2 / np.sum(weights ** 2))

    boot = np.empty((n_bootstrap, prior.dim))
    for b in range(n_bootstrap):
        index = rng.integers(0, n_samples, size=n_samples)
        w = weights[index]
        boot[b] = w @ targets[index] / w.sum()
    low_ess = ess < 100
    if low_ess:
        logger.warning("mc_velocity_estimate: effective sample size %.1f at t=%.3f", ess, t)
    return VelocityEstimate(estimate, boot.std(axis=0, ddof=1), ess, low_ess)


class AnalyticVelocity:
    """The exact velocity field of a Gaussian prior, callable like a learned model."""

    def __init__(self, prior: GaussianPrior):
        self.prior = prior

    def __call__(self, x: Tensor, t: float) -> Tensor:
        gain, offset = velocity_map(self.prior, t)
        shape = x.shape
        linear = ops.linear_map(
            x,
            lambda a: (gain @ a.reshape(-1)).reshape(shape),
            lambda g: (gain.T @ g.reshape(-1)).reshape(shape),
            name="analytic_velocity",
        )
        return ops.add(linear, Tensor(offset.reshape(shape)))
