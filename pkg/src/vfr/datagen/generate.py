"""Dataset generation: text masks (PFR mode) or composed images plus masks (PTISEG mode)."""

from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
from PIL import Image

from .compose import compose_sample, draw_text_color
from .corpus import TEXT_LEVELS, BackgroundCorpus, CorpusError, TextCorpus, list_fonts
from .effects import EFFECTS, EffectParams, apply_effect
from .render import missing_glyphs, prepare_text, render_mask, text_bbox

MODES = ("PFR", "PTISEG")
REFERENCE_CANVAS = 224


class GenerationError(RuntimeError):
    pass


@dataclass
class GeneratorConfig:
    seed: int
    fonts_dir: str
    lines_path: str
    words_path: str
    letters_path: str | None = None
    backgrounds_dir: str | None = None
    mode: str = "PFR"
    num_fonts: int | None = None
    dataset_size: int = 10000
    image_size: int = 224
    color_mode: str = "rgb"
    # font size ranges in pixels on a 224 canvas, scaled with image_size
    size_block: tuple[int, int] = (12, 20)
    size_line: tuple[int, int] = (18, 36)
    size_word: tuple[int, int] = (32, 72)
    size_letter: tuple[int, int] = (48, 120)
    min_size: int = 4
    block_lines: tuple[int, int] = (3, 6)
    min_contrast: float = 40.0
    max_retries: int = 20
    effect_probability: float = 0.5
    gradient_center: tuple[float, float] = (1.0, 1.0)
    gradient_amplitude: tuple[float, float] = (0.2, 0.5)
    fold_count: tuple[int, int] = (1, 3)
    fold_band: tuple[float, float] = (0.03, 0.08)
    fold_brightness: float = 0.15
    fold_shear: int = 2
    noise_sigma: tuple[float, float] = (2.0, 8.0)
    bleed_radius: int = 1

    def __post_init__(self):
        self.mode = self.mode.upper().replace(" ", "").replace("_", "")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.color_mode not in ("rgb", "grayscale"):
            raise ValueError(f"color_mode must be rgb or grayscale, got {self.color_mode!r}")
        if self.num_fonts is not None and self.num_fonts < 1:
            raise ValueError("num_fonts must be >= 1")
        if self.image_size < 8:
            raise ValueError("image_size too small")
        if self.mode == "PTISEG" and not self.backgrounds_dir:
            raise ValueError("PTISEG mode needs backgrounds_dir")

    def effect_params(self) -> EffectParams:
        names = {f.name for f in fields(EffectParams)}
        return EffectParams(**{k: v for k, v in asdict(self).items() if k in names})

    def size_range(self, level: str) -> tuple[int, int]:
        lo, hi = getattr(self, f"size_{level}")
        s = self.image_size / REFERENCE_CANVAS
        return max(self.min_size, round(lo * s)), max(self.min_size, round(hi * s))

    def to_dict(self) -> dict:
        return asdict(self)

    def config_hash(self) -> str:
        """Hash of generation parameters (paths excluded, so the same assets
        in another location hash identically)."""
        d = {k: v for k, v in self.to_dict().items() if not k.endswith(("_dir", "_path"))}
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()


@dataclass
class SamplePair:
    id: str
    label: int
    font: str
    text: str
    text_level: str
    size: int
    text_xy: tuple[int, int]
    mask: np.ndarray
    image: np.ndarray | None = None
    text_color: tuple[int, int, int] | None = None
    background_type: str | None = None
    background: str | None = None
    effect: str = "none"
    glyph_warnings: int = 0

    def record(self) -> dict:
        return {
            "id": self.id, "font": self.font, "label": self.label, "text": self.text,
            "text_level": self.text_level, "size": self.size, "xy": list(self.text_xy),
            "effect": self.effect, "background_type": self.background_type,
            "background": self.background,
            "text_color": None if self.text_color is None else "#%02x%02x%02x" % self.text_color,
            "split": None,
        }


def sample_rng(seed: int, font_index: int, sample_index: int) -> np.random.Generator:
    """Independent stream keyed by (seed, font, sample); order-free."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(font_index, sample_index)))


def sample_id(sample_index: int, font_index: int) -> str:
    return f"s{sample_index:06d}_f{font_index:03d}"


class Assets:
    def __init__(self, cfg: GeneratorConfig):
        fonts = list_fonts(cfg.fonts_dir)
        n = cfg.num_fonts or len(fonts)
        if n > len(fonts):
            raise CorpusError(f"num_fonts={n} but only {len(fonts)} fonts in {cfg.fonts_dir}")
        self.fonts = fonts[:n]
        self.corpus = TextCorpus.from_files(cfg.lines_path, cfg.words_path, cfg.letters_path)
        self.backgrounds = BackgroundCorpus.from_dir(cfg.backgrounds_dir) if cfg.mode == "PTISEG" else None
        self.effects = cfg.effect_params()

    @property
    def class_names(self) -> list[str]:
        return [p.stem for p in self.fonts]


def make_sample(cfg: GeneratorConfig, assets: Assets, sample_index: int, font_index: int) -> SamplePair:
    rng = sample_rng(cfg.seed, font_index, sample_index)
    font = assets.fonts[font_index]
    S = cfg.image_size
    level = TEXT_LEVELS[int(rng.integers(len(TEXT_LEVELS)))]
    lo, hi = cfg.size_range(level)
    for _ in range(cfg.max_retries):
        text = assets.corpus.draw(level, rng, cfg.block_lines)
        size = int(rng.integers(lo, hi + 1))
        l, t, r, b = text_bbox(text, font, size)
        if r - l > S or b - t > S:
            # shrink to fit rather than discard long lines
            size = int(size * min(S / (r - l), S / (b - t)) * 0.97)
            if size < cfg.min_size:
                continue
            l, t, r, b = text_bbox(text, font, size)
        if r - l > S or b - t > S or r <= l or b <= t:
            continue
        x = int(rng.integers(-l, S - r + 1))
        y = int(rng.integers(-t, S - b + 1))
        mask = render_mask(text, font, size, (x, y), S)
        if mask.any():
            break
    else:
        raise GenerationError(f"no {level} text fits a {S}px canvas in {font.name} "
                              f"after {cfg.max_retries} draws")
    drawable, _, unmapped = prepare_text(text)
    pair = SamplePair(sample_id(sample_index, font_index), font_index, font.stem, text, level, size,
                      (x, y), mask, glyph_warnings=unmapped + missing_glyphs(drawable, font))
    if cfg.mode == "PFR":
        return pair

    btype, bpath, bg = assets.backgrounds.draw(rng, S)
    color = draw_text_color(rng, bg, (x + l, y + t, x + r, y + b), cfg.min_contrast)
    image = compose_sample(mask, color, bg)
    if rng.random() < cfg.effect_probability:
        kind = EFFECTS[int(rng.integers(len(EFFECTS)))]
        image = apply_effect(image, kind, rng, text_color=color, params=assets.effects)
        pair.effect = kind
    if cfg.color_mode == "grayscale":
        image = np.asarray(Image.fromarray(image, "RGB").convert("L"))
    pair.image = image
    pair.text_color = color
    pair.background_type = btype
    pair.background = f"{btype}/{bpath.name}"
    return pair


def write_sample(pair: SamplePair, root: Path) -> None:
    Image.fromarray(pair.mask, "L").save(root / "masks" / f"{pair.id}.png")
    if pair.image is not None:
        mode = "L" if pair.image.ndim == 2 else "RGB"
        Image.fromarray(pair.image, mode).save(root / "images" / f"{pair.id}.png")


# -- worker plumbing ---------------------------------------------------------

_worker: dict = {}


def _init_worker(cfg: GeneratorConfig, root: str) -> None:
    _worker["cfg"] = cfg
    _worker["assets"] = Assets(cfg)
    _worker["root"] = Path(root)


def _run_chunk(jobs: list[tuple[int, int]]) -> list[tuple[int, int, dict, int]]:
    cfg, assets, root = _worker["cfg"], _worker["assets"], _worker["root"]
    out = []
    for e, f in jobs:
        pair = make_sample(cfg, assets, e, f)
        write_sample(pair, root)
        out.append((e, f, pair.record(), pair.glyph_warnings))
    return out


@dataclass
class GenerationResult:
    root: Path
    each_font_samples: int
    emitted: int
    shortfall: int
    manifest_sha256: str
    glyph_warnings: int = 0
    class_names: list[str] = field(default_factory=list)


def generate(cfg: GeneratorConfig, out_dir, workers: int = 1, chunk: int = 64) -> GenerationResult:
    """Generate the dataset described by ``cfg`` into ``out_dir``.

    Output is byte-identical for any ``workers`` value.
    """
    assets = Assets(cfg)
    n_fonts = len(assets.fonts)
    if cfg.dataset_size < n_fonts:
        raise ValueError(f"dataset_size {cfg.dataset_size} < number of fonts {n_fonts}")
    each = cfg.dataset_size // n_fonts
    root = Path(out_dir)
    try:
        (root / "masks").mkdir(parents=True, exist_ok=True)
        if cfg.mode == "PTISEG":
            (root / "images").mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise GenerationError(f"cannot write to {root}: {exc}") from exc

    jobs = [(e, f) for e in range(each) for f in range(n_fonts)]
    chunks = [jobs[i:i + chunk] for i in range(0, len(jobs), chunk)]
    if workers <= 1:
        _init_worker(cfg, str(root))
        results = [_run_chunk(c) for c in chunks]
    else:
        with ProcessPoolExecutor(workers, initializer=_init_worker, initargs=(cfg, str(root))) as pool:
            results = list(pool.map(_run_chunk, chunks))
    rows = sorted((r for res in results for r in res), key=lambda r: (r[0], r[1]))

    manifest = "".join(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n" for _, _, rec, _ in rows)
    (root / "manifest.jsonl").write_text(manifest, encoding="utf-8")
    digest = hashlib.sha256(manifest.encode("utf-8")).hexdigest()
    warnings_total = sum(r[3] for r in rows)
    emitted = len(rows)
    summary = {
        "mode": cfg.mode, "seed": cfg.seed, "image_size": cfg.image_size, "color_mode": cfg.color_mode,
        "requested": cfg.dataset_size, "each_font_samples": each, "emitted": emitted,
        "shortfall": cfg.dataset_size - emitted, "classes": assets.class_names,
        "manifest_sha256": digest, "config_hash": cfg.config_hash(), "glyph_warnings": warnings_total,
        "config": cfg.to_dict(),
    }
    (root / "dataset.json").write_text(json.dumps(summary, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    return GenerationResult(root, each, emitted, cfg.dataset_size - emitted, digest, warnings_total,
                            assets.class_names)


def default_workers() -> int:
    return max(1, min(4, os.cpu_count() or 1))
