"""Binary text masks rendered with FreeType via Pillow."""

from __future__ import annotations

import math
from functools import lru_cache
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw, ImageFont

from .shaping import shape_text

BINARIZE_AT = 128
LINE_SPACING = 4


class RenderError(ValueError):
    pass


@lru_cache(maxsize=512)
def load_font(path: str, size: int) -> ImageFont.FreeTypeFont:
    # BASIC layout: shaping is done by shape_text, not by raqm
    return ImageFont.truetype(str(path), size, layout_engine=ImageFont.Layout.BASIC)


@lru_cache(maxsize=64)
def font_codepoints(path: str) -> frozenset[int]:
    from fontTools.ttLib import TTFont

    with TTFont(str(path), lazy=True, fontNumber=0) as f:
        return frozenset(f.getBestCmap() or {})


def prepare_text(text: str) -> tuple[str, str, int]:
    """Shape every line; returns (drawable text, alignment, unmapped count)."""
    lines = text.split("\n")
    shaped = [shape_text(ln) for ln in lines]
    rtl = any(s.direction == "rtl" for s in shaped)
    return "\n".join(s.glyphs for s in shaped), ("right" if rtl else "left"), sum(s.unmapped for s in shaped)


def missing_glyphs(text: str, font_path) -> int:
    cps = font_codepoints(str(font_path))
    return sum(1 for c in text if not c.isspace() and ord(c) not in cps)


def text_bbox(text: str, font_path, size: int) -> tuple[int, int, int, int]:
    """Ink-independent layout box of already-shaped text drawn at (0, 0)."""
    font = load_font(str(font_path), size)
    img = Image.new("L", (1, 1))
    drawable, align, _ = prepare_text(text)
    l, t, r, b = ImageDraw.Draw(img).multiline_textbbox((0, 0), drawable, font=font,
                                                        spacing=LINE_SPACING, align=align)
    return math.floor(l), math.floor(t), math.ceil(r), math.ceil(b)


def render_mask(text: str, font_path, size: int, xy: tuple[int, int], canvas: int | tuple[int, int]) -> np.ndarray:
    """White-on-black uint8 mask with values in {0, 255}.

    ``xy`` is the drawing origin; callers pick it so the box from
    :func:`text_bbox` lands inside the canvas.
    """
    if not text or not text.strip():
        raise RenderError("text is empty")
    w, h = (canvas, canvas) if isinstance(canvas, int) else canvas
    drawable, align, _ = prepare_text(text)
    font = load_font(str(font_path), int(size))
    img = Image.new("L", (w, h), 0)
    ImageDraw.Draw(img).multiline_text(tuple(int(v) for v in xy), drawable, fill=255, font=font,
                                       spacing=LINE_SPACING, align=align)
    a = np.asarray(img)
    return np.where(a >= BINARIZE_AT, 255, 0).astype(np.uint8)


def font_class_names(font_paths) -> list[str]:
    return [Path(p).stem for p in font_paths]
