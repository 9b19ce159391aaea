from __future__ import annotations

import numpy as np

from autodiff import ops
from autodiff.layers import Network
from autodiff.tensor import Tensor
from errors import ShapeMismatchError


"""
Velocity fields v(x_t, t). Every field is callable on a single state, `field(x, t) -> Tensor`
of the same shape as x, and is differentiable in x when x is tracked. The learned fields
also expose forward_batch for training.
"""


class VelocityNetwork(Network):
    def forward_batch(self, x: Tensor, t: np.ndarray) -> Tensor:
        raise NotImplementedError

    def __call__(self, x: Tensor, t: float) -> Tensor:
        raise NotImplementedError

    def evaluate(self, x: np.ndarray, t: float) -> np.ndarray:
        """Untracked evaluation on a plain array."""
        return self(Tensor(x), t).data


class VelocityModel(VelocityNetwork):
    """
    Five-conv U-Net on one-channel images with a constant-t input channel:

        [x, t] -conv-> h0 -conv/2-> h1 -conv-> h2 -up2-> concat(., h0) -conv-> h3 -conv-> v

    Canvas sides must be even.
    """

    def __init__(self, width: int = 16, seed: int = 0):
        super().__init__()
        rng = np.random.default_rng(seed)
        self.width = width
        self.add_conv(rng, "in", 2, width, 3)
        self.add_conv(rng, "down", width, width, 3)
        self.add_conv(rng, "mid", width, width, 3)
        self.add_conv(rng, "merge", 2 * width, width, 3)
        self.add_conv(rng, "out", width, 1, 3)
        # small output layer so the untrained field starts near zero
        self.params["out.w"].data = self.params["out.w"].data * 0.1

    @classmethod
    def from_state(cls, state: dict[str, np.ndarray]) -> VelocityModel:
        model = cls(width=int(state["in.w"].shape[0]))
        model.load_state(state)
        return model

    def forward_batch(self, x: Tensor, t: np.ndarray) -> Tensor:
        n, _, h, w = x.shape
        if h % 2 or w % 2:
            raise ShapeMismatchError("velocity model (even canvas)", x.shape, (n, 1, h + h % 2, w + w % 2))
        t_channel = Tensor(np.broadcast_to(np.asarray(t, dtype=np.float64).reshape(n, 1, 1, 1), (n, 1, h, w)).copy())
        h0 = ops.leaky_relu(self.conv("in", ops.concat([x, t_channel], axis=1)))
        h1 = ops.leaky_relu(self.conv("down", h0, stride=2))
        h2 = ops.leaky_relu(self.conv("mid", h1))
        up = ops.upsample_nearest(h2, 2)
        h3 = ops.leaky_relu(self.conv("merge", ops.concat([up, h0], axis=1)))
        return self.conv("out", h3)

    def __call__(self, x: Tensor, t: float) -> Tensor:
        h, w = x.shape
        out = self.forward_batch(ops.reshape(x, (1, 1, h, w)), np.array([t]))
        return ops.reshape(out, (h, w))


class VelocityMLP(VelocityNetwork):
    """Two-layer time-conditioned MLP for flat vector data."""

    def __init__(self, dim: int, hidden: int = 64, seed: int = 0):
        super().__init__()
        rng = np.random.default_rng(seed)
        self.dim = dim
        self.add_linear(rng, "hidden", dim + 1, hidden)
        self.add_linear(rng, "out", hidden, dim)

    @classmethod
    def from_state(cls, state: dict[str, np.ndarray]) -> VelocityMLP:
        n_in, hidden = state["hidden.w"].shape
        model = cls(dim=n_in - 1, hidden=hidden)
        model.load_state(state)
        return model

    def forward_batch(self, x: Tensor, t: np.ndarray) -> Tensor:
        n = x.shape[0]
        t_column = Tensor(np.asarray(t, dtype=np.float64).reshape(n, 1))
        hidden = ops.leaky_relu(self.linear("hidden", ops.concat([x, t_column], axis=1)))
        return self.linear("out", hidden)

    def __call__(self, x: Tensor, t: float) -> Tensor:
        out = self.forward_batch(ops.reshape(x, (1, self.dim)), np.array([t]))
        return ops.reshape(out, x.shape)


def load_velocity_model(state: dict[str, np.ndarray]) -> VelocityNetwork:
    """Rebuild whichever architecture a checkpoint holds."""
    if "in.w" in state:
        return VelocityModel.from_state(state)
    return VelocityMLP.from_state(state)
