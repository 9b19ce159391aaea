from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from autodiff import ops
from autodiff.layers import Network
from autodiff.tensor import Tensor
from errors import ShapeMismatchError


"""
Patch encoders and decoders. Patches are (N, 1, P, P) with P divisible by 8:

    encoder: conv -> conv/2 -> conv/2 -> conv/2 -> global mean pool -> linear(embed_dim)
    decoder: linear -> (2w, P/8, P/8) -> three stride-2 transposed convs -> (1, P, P)

`features` is the raw head output the decoders consume; `embed` is its unit-norm version.
"""


Seed = int | Sequence[int]


class Encoder(Network):
    def __init__(self, width: int = 8, embed_dim: int = 64, seed: Seed = 0):
        super().__init__()
        rng = np.random.default_rng(seed)
        self.width = width
        self.embed_dim = embed_dim
        self.add_conv(rng, "c0", 1, width, 3)
        self.add_conv(rng, "c1", width, width, 3)
        self.add_conv(rng, "c2", width, 2 * width, 3)
        self.add_conv(rng, "c3", 2 * width, 2 * width, 3)
        self.add_linear(rng, "head", 2 * width, embed_dim)

    def features(self, patches: Tensor) -> Tensor:
        if patches.ndim != 4 or patches.shape[1] != 1 or patches.shape[2] % 8 or patches.shape[3] % 8:
            raise ShapeMismatchError("encoder", patches.shape, ("N", 1, "8k", "8k"))
        h = ops.leaky_relu(self.conv("c0", patches))
        h = ops.leaky_relu(self.conv("c1", h, stride=2))
        h = ops.leaky_relu(self.conv("c2", h, stride=2))
        h = ops.leaky_relu(self.conv("c3", h, stride=2))
        return self.linear("head", ops.mean(h, axis=(2, 3)))

    def embed(self, patches: Tensor) -> Tensor:
        return ops.l2_normalize(self.features(patches), axis=1)


class Decoder(Network):
    def __init__(self, patch_size: int = 32, width: int = 8, embed_dim: int = 64, seed: Seed = 0):
        super().__init__()
        rng = np.random.default_rng(seed)
        self.patch_size = patch_size
        self.width = width
        self.add_linear(rng, "fc", embed_dim, 2 * width * (patch_size // 8) ** 2)
        self.add_conv_transpose(rng, "up1", 2 * width, width, 2)
        self.add_conv_transpose(rng, "up2", width, width, 2)
        self.add_conv_transpose(rng, "up3", width, 1, 2)

    def __call__(self, features: Tensor) -> Tensor:
        side = self.patch_size // 8
        h = ops.leaky_relu(self.linear("fc", features))
        h = ops.reshape(h, (features.shape[0], 2 * self.width, side, side))
        h = ops.leaky_relu(self.conv_transpose("up1", h))
        h = ops.leaky_relu(self.conv_transpose("up2", h))
        return self.conv_transpose("up3", h)


def _prefixed(networks: dict[str, Network]) -> dict[str, Tensor]:
    return {f"{prefix}.{name}": tensor
            for prefix, network in networks.items() for name, tensor in network.params.items()}


def _split(state: dict[str, np.ndarray], prefix: str) -> dict[str, np.ndarray]:
    return {name[len(prefix) + 1:]: value for name, value in state.items() if name.startswith(prefix + ".")}


@dataclass
class EncoderPair:
    phi: Encoder  # target modality
    psi: Encoder  # auxiliary modality

    @classmethod
    def create(cls, width: int = 8, embed_dim: int = 64, seed: int = 0) -> EncoderPair:
        return cls(Encoder(width, embed_dim, (seed, 1)), Encoder(width, embed_dim, (seed, 2)))

    @property
    def params(self) -> dict[str, Tensor]:
        return _prefixed({"phi": self.phi, "psi": self.psi})

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: tensor.data for name, tensor in self.params.items()}

    @classmethod
    def from_state(cls, state: dict[str, np.ndarray]) -> EncoderPair:
        phi_state, psi_state = _split(state, "phi"), _split(state, "psi")
        width = int(phi_state["c0.w"].shape[0])
        embed_dim = int(phi_state["head.w"].shape[1])
        pair = cls.create(width, embed_dim)
        pair.phi.load_state(phi_state)
        pair.psi.load_state(psi_state)
        return pair


@dataclass
class DecoderPair:
    tar: Decoder
    aux: Decoder

    @classmethod
    def create(cls, patch_size: int = 32, width: int = 8, embed_dim: int = 64, seed: int = 0) -> DecoderPair:
        return cls(Decoder(patch_size, width, embed_dim, (seed, 3)), Decoder(patch_size, width, embed_dim, (seed, 4)))

    @property
    def params(self) -> dict[str, Tensor]:
        return _prefixed({"tar": self.tar, "aux": self.aux})

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: tensor.data for name, tensor in self.params.items()}

    @classmethod
    def from_state(cls, state: dict[str, np.ndarray]) -> DecoderPair:
        tar_state, aux_state = _split(state, "tar"), _split(state, "aux")
        embed_dim, fc_out = tar_state["fc.w"].shape
        width = int(tar_state["up1.w"].shape[1])
        patch_size = 8 * int(round(np.sqrt(fc_out / (2 * width))))
        pair = cls.create(patch_size, width, int(embed_dim))
        pair.tar.load_state(tar_state)
        pair.aux.load_state(aux_state)
        return pair
