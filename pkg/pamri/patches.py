from __future__ import annotations

from typing import Sequence

import numpy as np

from errors import ShapeMismatchError
from phantoms.image import ImagePair


def _crop(pixels: np.ndarray, row: int, col: int, size: int) -> np.ndarray:
    return pixels[row:row + size, col:col + size]


def _augment(patch: np.ndarray, rng: np.random.Generator, flip_prob: float,
             intensity_scale: tuple[float, float]) -> np.ndarray:
    if rng.uniform() < flip_prob:
        patch = patch[:, ::-1]
    if rng.uniform() < flip_prob:
        patch = patch[::-1, :]
    return patch * rng.uniform(*intensity_scale)


def extract_patch_pairs(pairs: Sequence[ImagePair], cfg, rng: np.random.Generator,
                        batch_size: int | None = None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    <batch_size> (default cfg.batch_size) co-located (target, aux) crops, each from a randomly
    chosen pair and location, so negatives come from other images and other locations alike.
    The target crop sits at the drawn top-left corner; the aux crop is shifted by up to
    cfg.jitter pixels per axis. Flips and intensity scaling are drawn per modality.

    Returns (p_tar, p_aux, origins) with patches of shape (B, P, P) and origins (B, 3)
    holding (pair index, row, col) of the target crop.
    """
    size = cfg.patch_size
    count = cfg.batch_size if batch_size is None else batch_size
    h, w = pairs[0].shape
    if size > min(h, w):
        raise ShapeMismatchError("extract_patch_pairs", (size, size), (h, w))

    p_tar = np.empty((count, size, size))
    p_aux = np.empty((count, size, size))
    origins = np.empty((count, 3), dtype=np.int64)
    for index in range(count):
        pair_index = int(rng.integers(0, len(pairs)))
        pair = pairs[pair_index]
        row = int(rng.integers(0, h - size + 1))
        col = int(rng.integers(0, w - size + 1))
        d_row, d_col = rng.integers(-cfg.jitter, cfg.jitter + 1, size=2) if cfg.jitter else (0, 0)
        aux_row = int(np.clip(row + d_row, 0, h - size))
        aux_col = int(np.clip(col + d_col, 0, w - size))

        p_tar[index] = _augment(_crop(pair.target.pixels, row, col, size), rng, cfg.flip_prob, cfg.intensity_scale)
        p_aux[index] = _augment(_crop(pair.aux.pixels, aux_row, aux_col, size), rng, cfg.flip_prob, cfg.intensity_scale)
        origins[index] = (pair_index, row, col)
    return p_tar, p_aux, origins


def tile(pixels: np.ndarray, size: int) -> np.ndarray:
    """Non-overlapping size x size tiles of an (H, W) grid, row-major, as (n_tiles, size, size)."""
    h, w = pixels.shape
    if h % size or w % size:
        raise ShapeMismatchError(f"tile{size}", (h, w), (h - h % size, w - w % size))
    return pixels.reshape(h // size, size, w // size, size).transpose(0, 2, 1, 3).reshape(-1, size, size)
