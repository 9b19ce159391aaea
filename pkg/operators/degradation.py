from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from autodiff import ops
from autodiff.tensor import Tensor
from errors import OperatorError, ShapeMismatchError
from operators.fourier import dft2, idft2
from phantoms.image import Image


"""
Forward degradation operators y = F(x) + noise and their exact adjoints.

Spatial operators map an (H, W) grid to a real grid; KSpaceMask maps it to a (2, H, W)
array holding the real and imaginary planes of mask * DFT2(x). Adjoints are taken with
respect to the plain real inner product on those arrays, so the dot-product test holds
for every variant. MatrixOperator acts on flattened inputs and is what the Gaussian
oracle uses for its linear problems.
"""


@dataclass(frozen=True)
class Measurement:
    data: np.ndarray
    noise_sigma: float = 0.0
    kind: str = "real"  # "real" or "complex" (stacked real/imag planes)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape


class ForwardOperator:
    name = "operator"
    kind = "real"

    def __init__(self, input_shape: tuple[int, ...]):
        self.input_shape = tuple(int(n) for n in input_shape)

    @property
    def output_shape(self) -> tuple[int, ...]:
        raise NotImplementedError

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def adjoint_data(self, m: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def check_input(self, shape) -> None:
        if tuple(shape) != self.input_shape:
            raise ShapeMismatchError(f"{self.name}.apply", shape, self.input_shape)

    def check_output(self, shape) -> None:
        if tuple(shape) != self.output_shape:
            raise ShapeMismatchError(f"{self.name}.adjoint", shape, self.output_shape)

    def apply_tensor(self, x: Tensor) -> Tensor:
        """Differentiable application on an autodiff tensor; the backward pass is the adjoint."""
        self.check_input(x.shape)
        return ops.linear_map(x, self.forward, self.adjoint_data, name=self.name)

    def describe(self) -> dict:
        return {"operator": self.name, "input_shape": "x".join(map(str, self.input_shape))}


class Downsample(ForwardOperator):
    """Block average by <factor> along both axes."""
    name = "downsample"

    def __init__(self, factor: int, input_shape: tuple[int, int]):
        super().__init__(input_shape)
        h, w = self.input_shape
        if factor < 1 or h % factor or w % factor:
            raise OperatorError(f"downsample factor {factor} must divide both {h} and {w}")
        self.factor = int(factor)

    @property
    def output_shape(self):
        h, w = self.input_shape
        return h // self.factor, w // self.factor

    def forward(self, x):
        k = self.factor
        h, w = self.output_shape
        return x.reshape(h, k, w, k).mean(axis=(1, 3))

    def adjoint_data(self, m):
        k = self.factor
        return np.repeat(np.repeat(m, k, axis=0), k, axis=1) / (k * k)

    def describe(self):
        return super().describe() | {"factor": self.factor}


def _reflect_index(index: int, n: int) -> int:
    # numpy "reflect" padding: d c b | a b c d | c b a
    while index < 0 or index >= n:
        index = -index if index < 0 else 2 * (n - 1) - index
    return index


def _blur_matrix(n: int, kernel: np.ndarray) -> np.ndarray:
    radius = len(kernel) // 2
    matrix = np.zeros((n, n))
    for row in range(n):
        for offset in range(-radius, radius + 1):
            matrix[row, _reflect_index(row + offset, n)] += kernel[offset + radius]
    return matrix


def gaussian_kernel(sigma: float, radius: int) -> np.ndarray:
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-0.5 * (offsets / sigma) ** 2)
    return kernel / kernel.sum()


class GaussianBlur(ForwardOperator):
    """Separable normalized Gaussian with reflect padding, stored as two banded matrices."""
    name = "blur"

    def __init__(self, sigma: float, input_shape: tuple[int, int], radius: int | None = None):
        super().__init__(input_shape)
        if sigma <= 0:
            raise OperatorError(f"blur sigma must be positive, got {sigma}")
        self.sigma = float(sigma)
        self.radius = int(radius if radius is not None else max(1, math.ceil(3 * sigma)))
        if self.radius >= min(self.input_shape):
            raise OperatorError(f"blur radius {self.radius} does not fit a {self.input_shape} canvas")
        kernel = gaussian_kernel(self.sigma, self.radius)
        self._rows = _blur_matrix(self.input_shape[0], kernel)
        self._cols = _blur_matrix(self.input_shape[1], kernel)

    @property
    def output_shape(self):
        return self.input_shape

    def forward(self, x):
        return self._rows @ x @ self._cols.T

    def adjoint_data(self, m):
        return self._rows.T @ m @ self._cols

    def describe(self):
        return super().describe() | {"sigma": self.sigma, "radius": self.radius}


class KSpaceMask(ForwardOperator):
    """mask * DFT2(x), returned as stacked (real, imag) planes."""
    name = "kspace"
    kind = "complex"

    def __init__(self, mask: np.ndarray, input_shape: tuple[int, int] | None = None):
        mask = np.asarray(mask, dtype=np.float64)
        super().__init__(mask.shape if input_shape is None else input_shape)
        if mask.shape != self.input_shape:
            raise ShapeMismatchError("kspace mask", mask.shape, self.input_shape)
        if not np.isin(mask, (0.0, 1.0)).all():
            raise OperatorError("k-space mask must be binary")
        self.mask = mask

    @property
    def output_shape(self):
        return (2,) + self.input_shape

    def forward(self, x):
        k = self.mask * dft2(x)
        return np.stack([k.real, k.imag])

    def adjoint_data(self, m):
        return idft2(self.mask * (m[0] + 1j * m[1])).real

    def describe(self):
        return super().describe() | {"kept_fraction": float(self.mask.mean())}


class MatrixOperator(ForwardOperator):
    """Dense A acting on the flattened input."""
    name = "matrix"

    def __init__(self, matrix: np.ndarray, input_shape: tuple[int, ...] | None = None):
        matrix = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
        super().__init__((matrix.shape[1],) if input_shape is None else input_shape)
        if int(np.prod(self.input_shape)) != matrix.shape[1]:
            raise ShapeMismatchError("matrix operator", matrix.shape, self.input_shape)
        self.matrix = matrix

    @property
    def output_shape(self):
        return (self.matrix.shape[0],)

    def forward(self, x):
        return self.matrix @ x.reshape(-1)

    def adjoint_data(self, m):
        return (self.matrix.T @ m).reshape(self.input_shape)

    def describe(self):
        return super().describe() | {"rows": self.matrix.shape[0]}


def _pixels(x) -> np.ndarray:
    return x.pixels if isinstance(x, Image) else np.asarray(x, dtype=np.float64)


def apply(op: ForwardOperator, x) -> Measurement:
    pixels = _pixels(x)
    op.check_input(pixels.shape)
    return Measurement(op.forward(pixels), 0.0, op.kind)


def adjoint(op: ForwardOperator, m: Measurement | np.ndarray) -> Image | np.ndarray:
    """Adjoint of <op>; returns an Image for 2-D inputs and a raw array otherwise."""
    data = m.data if isinstance(m, Measurement) else np.asarray(m, dtype=np.float64)
    op.check_output(data.shape)
    result = op.adjoint_data(data)
    return Image(result, "target") if result.ndim == 2 else result


def add_noise(m: Measurement, sigma: float, seed: int) -> Measurement:
    """i.i.d. N(0, sigma^2) on every real component (real and imaginary planes independently)."""
    if sigma < 0:
        raise OperatorError(f"noise sigma must be non-negative, got {sigma}")
    if sigma == 0:
        return replace(m, data=m.data.copy(), noise_sigma=0.0)
    rng = np.random.default_rng(seed)
    return replace(m, data=m.data + sigma * rng.standard_normal(m.data.shape), noise_sigma=float(sigma))


def make_mask(h: int, w: int, acceleration: float, center_fraction: float, seed: int) -> np.ndarray:
    """
    Column mask broadcast over rows, in unshifted FFT layout. A band of ceil(center_fraction * W)
    lowest-frequency columns is always kept; every other column is kept independently with the
    probability that makes the expected kept fraction 1 / acceleration.
    """
    if acceleration < 1:
        raise OperatorError(f"acceleration must be >= 1, got {acceleration}")
    if center_fraction > 1.0 / acceleration:
        raise OperatorError(
            f"center_fraction {center_fraction} exceeds the sampling budget 1/{acceleration}")
    if acceleration == 1:
        return np.ones((h, w))

    n_center = math.ceil(center_fraction * w)
    if n_center >= w:
        return np.ones((h, w))
    keep_prob = (w / acceleration - n_center) / (w - n_center)
    rng = np.random.default_rng(seed)
    columns = rng.uniform(size=w) < keep_prob
    start = (w - n_center) // 2
    columns[start:start + n_center] = True
    # columns were laid out with DC in the middle
    columns = np.fft.ifftshift(columns)
    return np.broadcast_to(columns.astype(np.float64), (h, w)).copy()


def baseline_reconstruction(op: ForwardOperator, m: Measurement) -> Image | np.ndarray:
    """Zero-filled / upsampled adjoint reconstruction, the naive baseline."""
    if isinstance(op, Downsample):
        op.check_output(m.data.shape)
        k = op.factor
        return Image(np.repeat(np.repeat(m.data, k, axis=0), k, axis=1), "target")
    return adjoint(op, m)


def null_space_component(op: ForwardOperator, x: np.ndarray) -> np.ndarray:
    """Orthogonal projection of <x> onto the null space of <op> (Downsample and MatrixOperator)."""
    x = np.asarray(x, dtype=np.float64)
    op.check_input(x.shape)
    if isinstance(op, Downsample):
        k = op.factor
        return x - np.repeat(np.repeat(op.forward(x), k, axis=0), k, axis=1)
    if isinstance(op, MatrixOperator):
        pinv = np.linalg.pinv(op.matrix)
        flat = x.reshape(-1)
        return (flat - pinv @ (op.matrix @ flat)).reshape(op.input_shape)
    raise OperatorError(f"no closed-form null-space projector for {op.name}")


def null_space_witness(op: ForwardOperator, seed: int = 0, support: np.ndarray | None = None) -> np.ndarray:
    """
    Nonzero x with apply(op, x) == 0. For Downsample with a boolean <support>, the witness is
    restricted to the blocks touching the support, which gives lesion-shaped null-space content.
    """
    rng = np.random.default_rng(seed)
    raw = rng.standard_normal(op.input_shape)
    if support is not None:
        raw = np.where(np.asarray(support, dtype=bool), raw, 0.0)
    witness = null_space_component(op, raw)
    norm = np.linalg.norm(witness)
    if norm < 1e-12:
        raise OperatorError(f"{op.name} has a trivial null space on this support")
    return witness / norm


def make_operator(task: str, shape: tuple[int, int], factor: int = 4, blur_sigma: float = 1.5,
                  acceleration: float = 8.0, center_fraction: float = 0.04, seed: int = 0) -> ForwardOperator:
    """Operator construction from run-config keys (task = sr | blur | kspace)."""
    if task == "sr":
        return Downsample(factor, shape)
    if task == "blur":
        return GaussianBlur(blur_sigma, shape)
    if task == "kspace":
        return KSpaceMask(make_mask(shape[0], shape[1], acceleration, center_fraction, seed))
    raise OperatorError(f"unknown task {task!r} (expected sr, blur or kspace)")


# ===== measurement container (MPFW tensors) =====

def measurement_to_tensors(m: Measurement) -> dict[str, np.ndarray]:
    tensors = {"sigma": np.array([m.noise_sigma])}
    if m.kind == "complex":
        tensors["real"], tensors["imag"] = m.data[0], m.data[1]
    else:
        tensors["real"] = m.data
    return tensors


def measurement_from_tensors(tensors: dict[str, np.ndarray]) -> Measurement:
    sigma = float(tensors.get("sigma", np.zeros(1))[0])
    if "imag" in tensors:
        return Measurement(np.stack([tensors["real"], tensors["imag"]]), sigma, "complex")
    return Measurement(np.asarray(tensors["real"], dtype=np.float64), sigma, "real")
