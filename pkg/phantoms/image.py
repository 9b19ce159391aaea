from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Image:
    # dense 2-D float64 grid plus the contrast it was rendered in ("target", "aux", "mask", ...)
    pixels: np.ndarray
    modality: str = "target"

    def __post_init__(self):
        pixels = np.asarray(self.pixels, dtype=np.float64)
        if pixels.ndim != 2:
            raise ValueError(f"Image expects a 2-D grid, got shape {pixels.shape}")
        object.__setattr__(self, "pixels", pixels)

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape


@dataclass(frozen=True)
class ImagePair:
    target: Image
    aux: Image
    lesion_mask: Image

    def __post_init__(self):
        if not (self.target.shape == self.aux.shape == self.lesion_mask.shape):
            raise ValueError(
                f"ImagePair shapes differ: {self.target.shape}, {self.aux.shape}, {self.lesion_mask.shape}")

    @property
    def shape(self) -> tuple[int, int]:
        return self.target.shape
