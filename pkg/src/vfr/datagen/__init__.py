"""Synthetic text-image dataset generation."""

from .augment import augment_pair
from .compose import compose_sample
from .corpus import BACKGROUND_TYPES, TEXT_LEVELS, BackgroundCorpus, TextCorpus
from .effects import EFFECTS, apply_effect
from .generate import GeneratorConfig, SamplePair, generate, make_sample
from .render import render_mask
from .shaping import PERSIAN_LETTERS, shape_text

__all__ = [
    "BACKGROUND_TYPES", "EFFECTS", "PERSIAN_LETTERS", "TEXT_LEVELS", "BackgroundCorpus",
    "GeneratorConfig", "SamplePair", "TextCorpus", "apply_effect", "augment_pair",
    "compose_sample", "generate", "make_sample", "render_mask", "shape_text",
]
