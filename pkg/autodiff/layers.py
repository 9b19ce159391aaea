from __future__ import annotations

import numpy as np

from autodiff import ops
from autodiff.tensor import Tensor


"""
Parameter containers for the small networks in flow/ and pamri/. A Network keeps its
weights in one flat, ordered name -> Tensor dict; the names double as checkpoint keys.
"""


class Network:
    def __init__(self):
        self.params: dict[str, Tensor] = {}

    def _add(self, name: str, value: np.ndarray) -> None:
        self.params[name] = Tensor(value, requires_grad=True)

    def add_conv(self, rng: np.random.Generator, name: str, c_in: int, c_out: int, k: int) -> None:
        # He-normal fan-in init, zero bias
        std = np.sqrt(2.0 / (c_in * k * k))
        self._add(f"{name}.w", rng.normal(0.0, std, size=(c_out, c_in, k, k)))
        self._add(f"{name}.b", np.zeros(c_out))

    def add_conv_transpose(self, rng: np.random.Generator, name: str, c_in: int, c_out: int, k: int) -> None:
        std = np.sqrt(2.0 / (c_in * k * k))
        self._add(f"{name}.w", rng.normal(0.0, std, size=(c_in, c_out, k, k)))
        self._add(f"{name}.b", np.zeros(c_out))

    def add_linear(self, rng: np.random.Generator, name: str, n_in: int, n_out: int) -> None:
        std = np.sqrt(2.0 / n_in)
        self._add(f"{name}.w", rng.normal(0.0, std, size=(n_in, n_out)))
        self._add(f"{name}.b", np.zeros(n_out))

    def conv(self, name: str, x: Tensor, stride: int = 1, pad: int = 1) -> Tensor:
        return ops.conv2d(x, self.params[f"{name}.w"], self.params[f"{name}.b"], stride=stride, pad=pad)

    def conv_transpose(self, name: str, x: Tensor, stride: int = 2) -> Tensor:
        return ops.conv_transpose2d(x, self.params[f"{name}.w"], self.params[f"{name}.b"], stride=stride)

    def linear(self, name: str, x: Tensor) -> Tensor:
        # x: (N, n_in); bias is added row by row through a ones column
        weight, bias = self.params[f"{name}.w"], self.params[f"{name}.b"]
        ones = Tensor(np.ones((x.shape[0], 1)))
        return ops.add(ops.matmul(x, weight), ops.matmul(ones, ops.reshape(bias, (1, -1))))

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: tensor.data for name, tensor in self.params.items()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        missing = set(self.params) - set(state)
        if missing:
            raise KeyError(f"checkpoint is missing tensors: {sorted(missing)}")
        for name, tensor in self.params.items():
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != tensor.shape:
                raise ValueError(f"checkpoint tensor {name}: shape {value.shape}, expected {tensor.shape}")
            self.params[name] = Tensor(value.copy(), requires_grad=True)

    @property
    def num_parameters(self) -> int:
        return sum(t.size for t in self.params.values())
