"""Small self-made asset bundle: procedural backgrounds, sample corpora and
freely licensed fonts shipped with matplotlib. Used by tests and scripts."""

from __future__ import annotations

import shutil
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

from .corpus import BACKGROUND_TYPES
from .shaping import PERSIAN_LETTERS

PERSIAN_LINES = (
    "توانا بود هر که دانا بود",
    "ز دانش دل پیر برنا بود",
    "به نام خداوند جان و خرد",
    "کزین برتر اندیشه برنگذرد",
    "بنی آدم اعضای یکدیگرند",
    "که در آفرینش ز یک گوهرند",
    "چو عضوی به درد آورد روزگار",
    "دگر عضوها را نماند قرار",
    "میازار موری که دانه کش است",
    "که جان دارد و جان شیرین خوش است",
    "امروز هوا آفتابی است",
    "کتاب خوب دوست خوبی است",
)

PERSIAN_WORDS = (
    "سلام", "کتاب", "ایران", "فارسی", "دانشگاه", "خانه", "مدرسه", "دوست", "زبان", "شهر",
    "آب", "نان", "گل", "باران", "آسمان", "زمین", "دریا", "کوه", "جنگل", "پدر",
    "مادر", "برادر", "خواهر", "روز", "شب", "ماه", "سال", "کار", "بازار", "خیابان",
    "پنجره", "درخت", "ستاره", "قلم", "دفتر", "چراغ", "گربه", "پرنده", "باغ", "نامه",
)

LATIN_WORDS = tuple("""
apple river stone light garden window paper letter orange silver market forest
candle morning quiet yellow bridge castle dragon ember feather glass harbor island
jungle kettle lemon meadow needle ocean pepper quartz rocket saddle timber umbrella
valley wagon yonder zephyr anchor basket copper desert engine falcon ginger hollow
ivory jacket kingdom ladder marble nectar orchid pillow quiver ribbon shadow thunder
velvet winter amber breeze cobalt dolphin echo fabric gravel hazel indigo jasmine
""".split())

LATIN_LETTERS = tuple("abcdefghijklmnopqrstuvwxyzABCDEFGHJKLMNPQRSTUVWXYZ")

# visually distinct faces with Latin coverage
LATIN_FONTS = ("DejaVuSans-Bold", "DejaVuSerif", "DejaVuSansMono", "cmtt10", "STIXGeneralBolIta")
# faces that carry the Arabic presentation-form blocks
PERSIAN_FONTS = ("DejaVuSans", "DejaVuSans-Bold", "DejaVuSansMono", "DejaVuSansMono-Bold")


def matplotlib_font_dir() -> Path:
    import matplotlib

    return Path(matplotlib.get_data_path()) / "fonts" / "ttf"


def copy_fonts(dest, names=LATIN_FONTS) -> Path:
    dest = Path(dest)
    dest.mkdir(parents=True, exist_ok=True)
    src = matplotlib_font_dir()
    for n in names:
        shutil.copyfile(src / f"{n}.ttf", dest / f"{n}.ttf")
    return dest


def latin_lines(n: int = 200, seed: int = 0, words: tuple[int, int] = (2, 3)) -> list[str]:
    rng = np.random.default_rng(seed)
    lo, hi = words
    return [" ".join(LATIN_WORDS[i] for i in rng.integers(len(LATIN_WORDS), size=rng.integers(lo, hi + 1)))
            for _ in range(n)]


def write_corpus(dest, script: str = "latin", line_words: tuple[int, int] = (2, 3)) -> dict[str, Path]:
    dest = Path(dest)
    dest.mkdir(parents=True, exist_ok=True)
    if script == "latin":
        lines, words, letters = latin_lines(words=line_words), LATIN_WORDS, LATIN_LETTERS
    elif script == "persian":
        lines, words, letters = PERSIAN_LINES, PERSIAN_WORDS, PERSIAN_LETTERS
    else:
        raise ValueError(f"unknown script {script!r}")
    paths = {}
    for name, units in (("lines", lines), ("words", words), ("letters", letters)):
        p = dest / f"{name}.txt"
        p.write_text("\n".join(units) + "\n", encoding="utf-8")
        paths[name] = p
    return paths


def _smooth_noise(rng, size, sigma, channels=3):
    n = rng.normal(size=(size, size, channels))
    n = ndimage.gaussian_filter(n, sigma=(sigma, sigma, 0))
    n -= n.min()
    return n / (n.max() or 1.0)


def synth_background(kind: str, rng: np.random.Generator, size: int = 256) -> np.ndarray:
    if kind == "stock":
        base = rng.integers(0, 256, size=3)
        other = rng.integers(0, 256, size=3)
        t = _smooth_noise(rng, size, size / 6, 1)
        img = base * (1 - t) + other * t
    elif kind == "paper":
        tone = np.array([235, 225, 200]) + rng.integers(-20, 15, size=3)
        fibres = _smooth_noise(rng, size, 1.0, 1) - 0.5
        img = tone + 18 * fibres + rng.normal(0, 3, size=(size, size, 1))
    elif kind == "noisy":
        base = _smooth_noise(rng, size, size / 10) * 255
        img = base + rng.normal(0, 25, size=(size, size, 3))
        salt = rng.random((size, size)) < 0.01
        img[salt] = rng.choice([0, 255], size=(salt.sum(), 1))
    elif kind == "textured":
        yy, xx = np.mgrid[0:size, 0:size]
        f = rng.uniform(0.05, 0.4)
        th = rng.uniform(0, np.pi)
        wave = 0.5 + 0.5 * np.sin(f * (xx * np.cos(th) + yy * np.sin(th)))
        check = ((xx // rng.integers(4, 16) + yy // rng.integers(4, 16)) % 2) * 0.3
        t = np.clip(wave * 0.7 + check, 0, 1)[..., None]
        img = rng.integers(0, 256, size=3) * (1 - t) + rng.integers(0, 256, size=3) * t
    else:
        raise ValueError(f"unknown background type {kind!r}")
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def write_backgrounds(dest, per_type: int = 8, size: int = 256, seed: int = 0) -> Path:
    dest = Path(dest)
    rng = np.random.default_rng(seed)
    for kind in BACKGROUND_TYPES:
        (dest / kind).mkdir(parents=True, exist_ok=True)
        for i in range(per_type):
            Image.fromarray(synth_background(kind, rng, size), "RGB").save(dest / kind / f"{kind}_{i:03d}.png")
    return dest


def write_assets(dest, script: str = "latin", fonts=None, per_type: int = 8, seed: int = 0,
                 line_words: tuple[int, int] = (2, 3)) -> dict[str, Path]:
    """Fonts, corpus and backgrounds under ``dest``; returns their paths."""
    dest = Path(dest)
    fonts = fonts or (LATIN_FONTS if script == "latin" else PERSIAN_FONTS)
    out = {"fonts_dir": copy_fonts(dest / "fonts", fonts),
           "backgrounds_dir": write_backgrounds(dest / "backgrounds", per_type, seed=seed)}
    corpus = write_corpus(dest / "corpus", script, line_words)
    out.update({"lines_path": corpus["lines"], "words_path": corpus["words"], "letters_path": corpus["letters"]})
    return out


# At 64 px the reference size ranges shrink block text to 3-6 px, below what a
# small segmenter can resolve; the desk preset floors glyph size at 8 px and
# keeps blocks to two or three lines. Pair it with one- or two-word corpus lines.
# Fold shear is off: a whole-pixel shift is several times the reference 2 px
# at 224 px, and it moves the text against its unchanged mask.
DESK_LINE_WORDS = (1, 2)
DESK_GENERATOR = dict(image_size=64, min_size=8, block_lines=(2, 3), fold_shear=0)


def desk_config(assets: dict, mode: str, seed: int, dataset_size: int = 500, **overrides):
    """Generator config for the 5-font, 64 px desk experiments."""
    from .generate import GeneratorConfig
    kw = dict(DESK_GENERATOR, seed=seed, mode=mode, dataset_size=dataset_size,
              fonts_dir=str(assets["fonts_dir"]), lines_path=str(assets["lines_path"]),
              words_path=str(assets["words_path"]), letters_path=str(assets["letters_path"]),
              backgrounds_dir=str(assets["backgrounds_dir"]))
    kw.update(overrides)
    return GeneratorConfig(**kw)
