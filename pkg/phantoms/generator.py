from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from errors import PhantomError
from phantoms.image import Image, ImagePair


"""
Paired-contrast ellipse phantoms. Each ellipse carries one intensity per modality, so the
target ("T2-like") and auxiliary ("T1-like") renderings share every boundary while their
intensities are drawn independently. Lesions are drawn last and occupy a reserved bright
band in the target, which is what makes threshold segmentation exact on ground truth.
A pixel belongs to the lesion mask when at least half of its 2x2 subsamples fall inside a
lesion; LESION_THRESHOLD sits between the brightest quarter-covered and the darkest
half-covered pixel, so thresholding the target reproduces the mask.

Coordinates are normalized: x runs along the width, y along the height, both in [0, 1];
semi-axes are fractions of the width (a) and height (b).
"""


# intensity bands used by sample_dataset
BACKGROUND_BAND = (0.0, 0.08)
# disjoint per modality; lesions always sit inside the head, on tissue
TARGET_TISSUE_BAND = (0.15, 0.35)
AUX_TISSUE_BAND = (0.4, 0.9)
TARGET_LESION_BAND = (0.95, 1.0)
# quarter coverage peaks at 0.25 * 1.0 + 0.75 * 0.35 = 0.5125,
# half coverage bottoms out at 0.5 * 0.95 + 0.5 * 0.15 = 0.55
LESION_THRESHOLD = (0.53, 1.0)
MIN_CONTRAST = 0.04


@dataclass(frozen=True)
class Ellipse:
    center: tuple[float, float]
    semi_axes: tuple[float, float]
    rotation: float
    intensity_target: float
    intensity_aux: float
    is_lesion: bool = False

    def contains(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        dx, dy = x - self.center[0], y - self.center[1]
        cos, sin = np.cos(self.rotation), np.sin(self.rotation)
        u = dx * cos + dy * sin
        v = -dx * sin + dy * cos
        return (u / self.semi_axes[0]) ** 2 + (v / self.semi_axes[1]) ** 2 <= 1.0


@dataclass(frozen=True)
class PhantomSpec:
    canvas: tuple[int, int]
    ellipses: tuple[Ellipse, ...] = ()
    background: tuple[float, float] = (0.0, 0.0)
    seed: int = 0


def _validate(spec: PhantomSpec) -> None:
    h, w = spec.canvas
    if h < 16 or w < 16:
        raise PhantomError(f"canvas must be at least 16x16, got {h}x{w}")
    for index, ellipse in enumerate(spec.ellipses):
        if min(ellipse.semi_axes) <= 0.0:
            raise PhantomError(f"ellipse {index} has zero area (semi-axes {ellipse.semi_axes})")


def _layer(spec: PhantomSpec, x: np.ndarray, y: np.ndarray):
    # last-drawn-wins layering; label is the index of the top ellipse (-1 = background)
    target = np.full(x.shape, float(spec.background[0]))
    aux = np.full(x.shape, float(spec.background[1]))
    label = np.full(x.shape, -1, dtype=np.int64)
    for index, ellipse in enumerate(spec.ellipses):
        inside = ellipse.contains(x, y)
        target[inside] = ellipse.intensity_target
        aux[inside] = ellipse.intensity_aux
        label[inside] = index
    return target, aux, label


def render(spec: PhantomSpec) -> ImagePair:
    """Render target, aux and lesion mask with 2x2 supersampling; the mask keeps pixels at least half covered."""
    _validate(spec)
    h, w = spec.canvas

    # supersampled grid: two samples per pixel and axis at +1/4 and +3/4 of the pixel
    sub_y, sub_x = np.meshgrid((np.arange(2 * h) + 0.5) / (2 * h), (np.arange(2 * w) + 0.5) / (2 * w), indexing="ij")
    target, aux, label = _layer(spec, sub_x, sub_y)
    target = np.clip(target.reshape(h, 2, w, 2).mean(axis=(1, 3)), 0.0, 1.0)
    aux = np.clip(aux.reshape(h, 2, w, 2).mean(axis=(1, 3)), 0.0, 1.0)

    lesion_ids = [i for i, e in enumerate(spec.ellipses) if e.is_lesion]
    coverage = np.isin(label, lesion_ids).reshape(h, 2, w, 2).mean(axis=(1, 3))
    mask = (coverage >= 0.5).astype(np.float64)

    return ImagePair(Image(target, "target"), Image(aux, "aux"), Image(mask, "mask"))


def _distinct(rng: np.random.Generator, band: tuple[float, float], taken: list[float]) -> float:
    # rejection sampling for a value at least MIN_CONTRAST away from every taken value
    value = rng.uniform(*band)
    for _ in range(64):
        if all(abs(value - other) >= MIN_CONTRAST for other in taken):
            break
        value = rng.uniform(*band)
    return float(value)


def random_spec(rng: np.random.Generator, h: int, w: int, lesion_prob: float, seed: int = 0) -> PhantomSpec:
    """Head ellipse, 2-6 inner structures, and at most one lesion drawn on top (3-8 ellipses)."""
    background = (rng.uniform(*BACKGROUND_BAND), rng.uniform(*BACKGROUND_BAND))
    head_center = (0.5 + rng.uniform(-0.03, 0.03), 0.5 + rng.uniform(-0.03, 0.03))
    head = Ellipse(
        center=head_center,
        semi_axes=(rng.uniform(0.36, 0.44), rng.uniform(0.36, 0.44)),
        rotation=rng.uniform(-0.3, 0.3),
        intensity_target=rng.uniform(*TARGET_TISSUE_BAND),
        intensity_aux=rng.uniform(*AUX_TISSUE_BAND),
    )
    ellipses = [head]
    targets, auxes = [head.intensity_target], [head.intensity_aux]

    for _ in range(int(rng.integers(2, 7))):
        radius, angle = rng.uniform(0.0, 0.22), rng.uniform(0.0, 2 * np.pi)
        inner = Ellipse(
            center=(head_center[0] + radius * np.cos(angle), head_center[1] + radius * np.sin(angle)),
            semi_axes=(rng.uniform(0.05, 0.16), rng.uniform(0.05, 0.16)),
            rotation=rng.uniform(0.0, np.pi),
            intensity_target=_distinct(rng, TARGET_TISSUE_BAND, targets),
            intensity_aux=_distinct(rng, AUX_TISSUE_BAND, auxes),
        )
        targets.append(inner.intensity_target)
        auxes.append(inner.intensity_aux)
        ellipses.append(inner)

    if rng.uniform() < lesion_prob:
        radius, angle = rng.uniform(0.0, 0.2), rng.uniform(0.0, 2 * np.pi)
        center = (head_center[0] + radius * np.cos(angle), head_center[1] + radius * np.sin(angle))
        # hypointense in aux relative to the tissue it sits on
        host_aux = head.intensity_aux
        for ellipse in ellipses:
            if ellipse.contains(np.array(center[0]), np.array(center[1])):
                host_aux = ellipse.intensity_aux
        ellipses.append(Ellipse(
            center=center,
            semi_axes=(rng.uniform(0.07, 0.12), rng.uniform(0.07, 0.12)),
            rotation=rng.uniform(0.0, np.pi),
            intensity_target=rng.uniform(*TARGET_LESION_BAND),
            intensity_aux=float(np.clip(host_aux - rng.uniform(0.1, 0.2), 0.0, 1.0)),
            is_lesion=True,
        ))

    return PhantomSpec(canvas=(h, w), ellipses=tuple(ellipses), background=background, seed=seed)


def sample_dataset(n: int, h: int, w: int, lesion_prob: float, seed: int) -> list[ImagePair]:
    if n < 1:
        raise PhantomError(f"sample_dataset needs n >= 1, got {n}")
    rng = np.random.default_rng(seed)
    return [render(random_spec(rng, h, w, lesion_prob, seed)) for _ in range(n)]


def edge_map(pixels: np.ndarray, threshold: float = 0.01) -> np.ndarray:
    """Support of the thresholded Sobel gradient magnitude (scaled to a central difference)."""
    grad_y = ndimage.sobel(pixels, axis=0, mode="nearest") / 8.0
    grad_x = ndimage.sobel(pixels, axis=1, mode="nearest") / 8.0
    return np.hypot(grad_x, grad_y) > threshold
