"""Text and background corpora read from local files."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .shaping import PERSIAN_LETTERS

TEXT_LEVELS = ("block", "line", "word", "letter")
BACKGROUND_TYPES = ("stock", "paper", "noisy", "textured")
IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".webp", ".tif", ".tiff"}
FONT_SUFFIXES = {".ttf", ".otf", ".ttc"}


class CorpusError(ValueError):
    pass


def read_units(path) -> list[str]:
    """UTF-8 file, one unit per line; blank lines dropped."""
    text = Path(path).read_text(encoding="utf-8")
    return [ln.strip() for ln in text.splitlines() if ln.strip()]


@dataclass(frozen=True)
class TextCorpus:
    lines: tuple[str, ...]
    words: tuple[str, ...]
    letters: tuple[str, ...]

    def __post_init__(self):
        for name in ("lines", "words", "letters"):
            if not getattr(self, name):
                raise CorpusError(f"text corpus has no {name}")

    @classmethod
    def from_files(cls, lines_path, words_path, letters_path=None) -> "TextCorpus":
        letters = tuple(read_units(letters_path)) if letters_path else PERSIAN_LETTERS
        return cls(tuple(read_units(lines_path)), tuple(read_units(words_path)), letters)

    def draw(self, level: str, rng: np.random.Generator, block_lines: tuple[int, int] = (3, 6)) -> str:
        if level == "letter":
            return self.letters[rng.integers(len(self.letters))]
        if level == "word":
            return self.words[rng.integers(len(self.words))]
        if level == "line":
            return self.lines[rng.integers(len(self.lines))]
        if level == "block":
            k = int(rng.integers(block_lines[0], block_lines[1] + 1))
            start = int(rng.integers(len(self.lines)))
            return "\n".join(self.lines[(start + i) % len(self.lines)] for i in range(k))
        raise CorpusError(f"unknown text level {level!r}")


def list_fonts(fonts_dir) -> list[Path]:
    """Font files sorted by stem; the stem is the class name."""
    d = Path(fonts_dir)
    if not d.is_dir():
        raise CorpusError(f"fonts directory {d} does not exist")
    fonts = sorted((p for p in d.iterdir() if p.suffix.lower() in FONT_SUFFIXES), key=lambda p: p.stem)
    if not fonts:
        raise CorpusError(f"no font files in {d}")
    stems = [p.stem for p in fonts]
    if len(set(stems)) != len(stems):
        raise CorpusError(f"duplicate font class names in {d}")
    return fonts


class BackgroundCorpus:
    """Four typed image collections; images are decoded lazily and cached."""

    def __init__(self, paths: dict[str, list[Path]]):
        for t in BACKGROUND_TYPES:
            if not paths.get(t):
                raise CorpusError(f"background type {t!r} is empty")
        self.paths = {t: list(paths[t]) for t in BACKGROUND_TYPES}
        self._cache: dict[Path, Image.Image] = {}

    @classmethod
    def from_dir(cls, root) -> "BackgroundCorpus":
        root = Path(root)
        paths = {}
        for t in BACKGROUND_TYPES:
            d = root / t
            paths[t] = sorted(p for p in d.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES) if d.is_dir() else []
        return cls(paths)

    def __len__(self) -> int:
        return sum(len(v) for v in self.paths.values())

    def image(self, path: Path) -> Image.Image:
        img = self._cache.get(path)
        if img is None:
            with Image.open(path) as im:
                img = im.convert("RGB")
            if len(self._cache) > 256:
                self._cache.clear()
            self._cache[path] = img
        return img

    def draw(self, rng: np.random.Generator, size: int) -> tuple[str, Path, np.ndarray]:
        """Random type, random image of that type, random crop scaled to ``size``."""
        btype = BACKGROUND_TYPES[rng.integers(len(BACKGROUND_TYPES))]
        choices = self.paths[btype]
        path = choices[rng.integers(len(choices))]
        return btype, path, fit_background(self.image(path), size, rng)


def fit_background(img: Image.Image, size: int, rng: np.random.Generator) -> np.ndarray:
    """Scale so the short side is ``size`` then crop a random square."""
    w, h = img.size
    scale = size / min(w, h)
    nw, nh = max(size, round(w * scale)), max(size, round(h * scale))
    if (nw, nh) != (w, h):
        img = img.resize((nw, nh), Image.BILINEAR)
    x0 = int(rng.integers(nw - size + 1))
    y0 = int(rng.integers(nh - size + 1))
    return np.asarray(img.crop((x0, y0, x0 + size, y0 + size)), dtype=np.uint8).copy()
