"""Photometric effects applied to composed RGB samples."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

EFFECTS = ("gradient_light", "folding", "subtle_noise", "ink_bleed")


@dataclass(frozen=True)
class EffectParams:
    gradient_center: tuple[float, float] = (1.0, 1.0)
    gradient_amplitude: tuple[float, float] = (0.2, 0.5)
    fold_count: tuple[int, int] = (1, 3)
    fold_band: tuple[float, float] = (0.03, 0.08)      # band half-width, fraction of canvas
    fold_brightness: float = 0.15
    fold_shear: int = 2
    noise_sigma: tuple[float, float] = (2.0, 8.0)
    bleed_radius: int = 1


DEFAULT_EFFECTS = EffectParams()


def _clip(a: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(a), 0, 255).astype(np.uint8)


def _coords(h: int, w: int):
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    return yy, xx


def gradient_light(image: np.ndarray, rng: np.random.Generator, params: EffectParams = DEFAULT_EFFECTS) -> np.ndarray:
    """Multiply by a linear ramp ``center + amp * p``, ``p`` in [-1, 1] along a random direction."""
    h, w = image.shape[:2]
    theta = rng.uniform(0.0, 2 * np.pi)
    center = rng.uniform(*params.gradient_center)
    amp = rng.uniform(*params.gradient_amplitude)
    yy, xx = _coords(h, w)
    proj = (xx - (w - 1) / 2) * np.cos(theta) + (yy - (h - 1) / 2) * np.sin(theta)
    reach = np.abs(proj).max() or 1.0
    factor = np.clip(center + amp * proj / reach, 0.5, 1.5)
    if image.ndim == 3:
        factor = factor[..., None]
    return _clip(image * factor)


def folding(image: np.ndarray, rng: np.random.Generator, params: EffectParams = DEFAULT_EFFECTS) -> np.ndarray:
    """1-3 fold lines: a Gaussian brightness band plus a small shear across each."""
    h, w = image.shape[:2]
    out = image.astype(np.float64)
    yy, xx = _coords(h, w)
    for _ in range(int(rng.integers(params.fold_count[0], params.fold_count[1] + 1))):
        px, py = rng.uniform(0, w - 1), rng.uniform(0, h - 1)
        theta = rng.uniform(0.0, np.pi)
        nx, ny = np.cos(theta), np.sin(theta)          # line normal
        half = rng.uniform(*params.fold_band) * max(h, w)
        bright = rng.uniform(-params.fold_brightness, params.fold_brightness)
        shear = int(rng.integers(-params.fold_shear, params.fold_shear + 1))
        d = (xx - px) * nx + (yy - py) * ny
        if shear:
            # shift the far side along the fold direction (tangent = (-ny, nx))
            side = d > 0
            sx = np.clip(np.rint(xx + shear * ny), 0, w - 1).astype(int)
            sy = np.clip(np.rint(yy - shear * nx), 0, h - 1).astype(int)
            shifted = out[sy, sx]
            out = np.where(side[..., None] if out.ndim == 3 else side, shifted, out)
        band = 1.0 + bright * np.exp(-(d / half) ** 2)
        out = out * (band[..., None] if out.ndim == 3 else band)
    return _clip(out)


def subtle_noise(image: np.ndarray, rng: np.random.Generator, params: EffectParams = DEFAULT_EFFECTS,
                 sigma: float | None = None) -> np.ndarray:
    if sigma is None:
        sigma = rng.uniform(*params.noise_sigma)
    noise = rng.normal(0.0, 1.0, size=image.shape) * sigma
    return _clip(image.astype(np.float64) + noise)


def ink_bleed(image: np.ndarray, text_color, params: EffectParams = DEFAULT_EFFECTS) -> np.ndarray:
    """Dilate text-colored pixels, then 3x3 box-blur inside the dilated region."""
    if text_color is None:
        raise ValueError("ink_bleed needs the text color")
    color = np.asarray(text_color, dtype=np.uint8)
    ink = np.all(image == color, axis=-1) if image.ndim == 3 else image == color
    if not ink.any():
        return image.copy()
    grown = ndimage.binary_dilation(ink, structure=np.ones((3, 3), bool), iterations=params.bleed_radius)
    out = image.copy()
    out[grown & ~ink] = color
    size = (3, 3, 1) if image.ndim == 3 else (3, 3)
    blurred = ndimage.uniform_filter(out.astype(np.float64), size=size, mode="nearest")
    out[grown] = _clip(blurred[grown])
    return out


def apply_effect(image: np.ndarray, kind: str, rng: np.random.Generator, *, text_color=None,
                 params: EffectParams = DEFAULT_EFFECTS) -> np.ndarray:
    if kind == "gradient_light":
        return gradient_light(image, rng, params)
    if kind == "folding":
        return folding(image, rng, params)
    if kind == "subtle_noise":
        return subtle_noise(image, rng, params)
    if kind == "ink_bleed":
        return ink_bleed(image, text_color, params)
    raise ValueError(f"unknown effect {kind!r}; expected one of {EFFECTS}")
