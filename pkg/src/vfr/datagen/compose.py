"""Compositing text masks onto backgrounds."""

from __future__ import annotations

import numpy as np

LUMA = np.array([0.299, 0.587, 0.114])


def luminance(rgb) -> np.ndarray:
    return np.asarray(rgb, dtype=np.float64) @ LUMA


def compose_sample(mask: np.ndarray, text_color, background: np.ndarray) -> np.ndarray:
    """Hard composite: mask pixels take ``text_color``, the rest keep the background."""
    if background.shape[:2] != mask.shape:
        raise ValueError(f"background {background.shape[:2]} and mask {mask.shape} extents differ")
    color = np.asarray(text_color, dtype=np.uint8)
    return np.where((mask > 0)[..., None], color, background).astype(np.uint8)


def draw_text_color(rng: np.random.Generator, background: np.ndarray, box: tuple[int, int, int, int],
                    min_contrast: float = 40.0, max_tries: int = 50) -> tuple[int, int, int]:
    """Uniform RGB color whose luminance differs from the background under
    ``box`` (x0, y0, x1, y1) by at least ``min_contrast``; redrawn until it does.

    After ``max_tries`` the farther of black and white is used.
    """
    x0, y0, x1, y1 = box
    region = background[max(y0, 0):max(y1, y0 + 1), max(x0, 0):max(x1, x0 + 1)].reshape(-1, 3)
    bg_lum = float(luminance(region).mean()) if region.size else float(luminance(background.reshape(-1, 3)).mean())
    for _ in range(max_tries):
        c = rng.integers(0, 256, size=3)
        if abs(float(luminance(c)) - bg_lum) >= min_contrast:
            return tuple(int(v) for v in c)
    return (0, 0, 0) if bg_lum >= 127.5 else (255, 255, 255)
