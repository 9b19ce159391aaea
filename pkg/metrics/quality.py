from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import ndimage

from autodiff.tensor import Tensor
from errors import MetricError, ShapeMismatchError
from pamri.patches import tile
from phantoms.image import Image


"""
Image-quality metrics. The second argument is always the reference. Dynamic range is 1.0.
"""


PSNR_CAP = 100.0
SSIM_WINDOW = 8
SSIM_SIGMA = 1.5
C1 = 0.01 ** 2
C2 = 0.03 ** 2
FEATURE_BETA = 4.0


def _pixels(x) -> np.ndarray:
    return x.pixels if isinstance(x, Image) else np.asarray(x, dtype=np.float64)


def _pair(op: str, x, ref) -> tuple[np.ndarray, np.ndarray]:
    a, b = _pixels(x), _pixels(ref)
    if a.shape != b.shape:
        raise ShapeMismatchError(op, a.shape, b.shape)
    return a, b


def psnr(x, ref) -> float:
    a, b = _pair("psnr", x, ref)
    mse = float(np.mean((a - b) ** 2))
    if mse < 1e-10:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * np.log10(1.0 / mse))


def _gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    offsets = np.arange(size) - (size - 1) / 2.0
    profile = np.exp(-0.5 * (offsets / sigma) ** 2)
    window = np.outer(profile, profile)
    return window / window.sum()


def ssim(x, ref) -> float:
    """Single-scale SSIM, 8x8 Gaussian window (sigma 1.5), stride 1, mean over valid windows."""
    a, b = _pair("ssim", x, ref)
    if min(a.shape) < SSIM_WINDOW:
        raise ShapeMismatchError("ssim", a.shape, (SSIM_WINDOW, SSIM_WINDOW))
    window = _gaussian_window()

    def local(values):
        return np.einsum("ijkl,kl->ij", sliding_window_view(values, window.shape), window)

    mu_a, mu_b = local(a), local(b)
    var_a = local(a * a) - mu_a * mu_a
    var_b = local(b * b) - mu_b * mu_b
    cov = local(a * b) - mu_a * mu_b
    numerator = (2.0 * mu_a * mu_b + C1) * (2.0 * cov + C2)
    denominator = (mu_a * mu_a + mu_b * mu_b + C1) * (var_a + var_b + C2)
    return float(np.mean(numerator / denominator))


def _binary(op: str, mask) -> np.ndarray:
    values = _pixels(mask)
    if not np.isin(values, (0.0, 1.0)).all():
        raise MetricError(f"{op}: mask is not binary")
    return values.astype(bool)


def dice(mask_a, mask_b) -> float:
    """2|A n B| / (|A| + |B|); two empty masks score 1."""
    a, b = _binary("dice", mask_a), _binary("dice", mask_b)
    if a.shape != b.shape:
        raise ShapeMismatchError("dice", a.shape, b.shape)
    total = int(a.sum() + b.sum())
    if total == 0:
        return 1.0
    return 2.0 * int(np.logical_and(a, b).sum()) / total


def threshold_segment(x, lo: float, hi: float, opening: bool = True) -> np.ndarray:
    """
    Pixels with lo <= value <= hi, then a 3x3 opening by reconstruction: components that hold
    no 3x3 square are dropped, the others are kept whole.
    """
    if lo >= hi:
        raise MetricError(f"threshold_segment: lo ({lo}) must be below hi ({hi})")
    pixels = _pixels(x)
    mask = (pixels >= lo) & (pixels <= hi)
    if opening:
        square = np.ones((3, 3), dtype=bool)
        mask = ndimage.binary_propagation(ndimage.binary_opening(mask, structure=square), structure=square, mask=mask)
    return mask.astype(np.float64)


def measurement_loss(op, x, y) -> float:
    """||F(x) - y||^2."""
    return float(np.sum((op.forward(_pixels(x)) - y.data) ** 2))


def feature_hallucination_score(encoders, x, ref, patch_size: int = 32, beta: float = FEATURE_BETA) -> float:
    """
    Softmax(beta * e)-weighted mean of per-tile errors e = ||phi(tile(x)) - phi(tile(ref))||^2,
    so a few strongly deviating tiles dominate the score.
    """
    a, b = _pair("feature_hallucination_score", x, ref)
    u = encoders.phi.embed(Tensor(tile(a, patch_size)[:, None])).data
    v = encoders.phi.embed(Tensor(tile(b, patch_size)[:, None])).data
    errors = np.sum((u - v) ** 2, axis=1)
    weights = np.exp(beta * (errors - errors.max()))
    return float(np.sum(weights * errors) / weights.sum())
