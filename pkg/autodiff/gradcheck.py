from typing import Callable

import numpy as np

from autodiff.tensor import Tape, Tensor
from errors import NonFiniteError


def finite_difference_check(f: Callable[[Tensor], Tensor], x, eps: float = 1e-5,
                            floor: float = 1e-12) -> float:
    """
    Compare the tape gradient of scalar <f> at <x> with central finite differences.
    Returns max over coordinates of |analytic - numeric| / (|numeric| + floor).
    <floor> defaults to 1e-12; pass a larger value for functions whose gradients have
    near-zero entries.
    """
    base = np.array(x.data if isinstance(x, Tensor) else x, dtype=np.float64)

    with Tape() as tape:
        point = Tensor(base.copy(), requires_grad=True)
        loss = f(point)
        (analytic,) = tape.gradient(loss, [point])

    numeric = np.zeros_like(base)
    for index in np.ndindex(base.shape):
        plus, minus = base.copy(), base.copy()
        plus[index] += eps
        minus[index] -= eps
        f_plus, f_minus = f(Tensor(plus)).item(), f(Tensor(minus)).item()
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise NonFiniteError(f"finite_difference_check: f is not finite near index {index}")
        numeric[index] = (f_plus - f_minus) / (2.0 * eps)

    return float(np.max(np.abs(analytic - numeric) / (np.abs(numeric) + floor)))
