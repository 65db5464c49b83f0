"""Visual font recognition: synthetic data, a numpy CNN engine, segmenter and classifier."""

__version__ = "0.1.0"
