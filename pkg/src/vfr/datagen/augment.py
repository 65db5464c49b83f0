"""Joint geometric augmentation of an image and its mask."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage


@dataclass(frozen=True)
class AugmentDraw:
    hflip: bool
    vflip: bool
    rotate: bool
    angle: float


def draw_augmentation(rng, p: float = 0.3, max_angle: float = 30.0) -> AugmentDraw:
    """Four draws in fixed order, so the stream advances identically every call."""
    u_h, u_v, u_r = rng.random(), rng.random(), rng.random()
    angle = rng.uniform(-max_angle, max_angle)
    return AugmentDraw(u_h < p, u_v < p, u_r < p, float(angle))


def apply_augmentation(image: np.ndarray, mask: np.ndarray, d: AugmentDraw) -> tuple[np.ndarray, np.ndarray]:
    if image.shape[:2] != mask.shape[:2]:
        raise ValueError(f"image {image.shape[:2]} and mask {mask.shape[:2]} extents differ")
    if d.hflip:
        image, mask = image[:, ::-1], mask[:, ::-1]
    if d.vflip:
        image, mask = image[::-1], mask[::-1]
    if d.rotate and d.angle != 0.0:
        axes = (1, 0)
        image = ndimage.rotate(image.astype(np.float64), d.angle, axes=axes, reshape=False,
                               order=1, mode="constant", cval=0.0)
        image = np.clip(np.rint(image), 0, 255).astype(np.uint8)
        on = mask.max() if mask.size else 1
        mask = ndimage.rotate((mask > 0).astype(np.uint8), d.angle, axes=axes, reshape=False,
                              order=0, mode="constant", cval=0)
        mask = np.where(mask > 0, on, 0).astype(np.uint8)
    return np.ascontiguousarray(image), np.ascontiguousarray(mask)


def augment_pair(image: np.ndarray, mask: np.ndarray, rng, p: float = 0.3,
                 max_angle: float = 30.0) -> tuple[np.ndarray, np.ndarray]:
    """Horizontal flip, vertical flip and rotation in [-max_angle, max_angle],
    each independently with probability ``p``, applied identically to both.

    Images are resampled bilinearly, masks nearest-neighbour and re-binarized;
    corners exposed by rotation are black.
    """
    return apply_augmentation(image, mask, draw_augmentation(rng, p, max_angle))
