"""Segmentation and classification metrics, and the latency harness."""

from __future__ import annotations

import math
import platform
import time
import warnings
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

EPS = 1e-7


def _as_binary_pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"mask extents differ: {a.shape} vs {b.shape}")
    return a.astype(bool), b.astype(bool)


def bce_loss(y, yhat) -> float:
    """Mean binary cross-entropy with probabilities clamped to [1e-7, 1-1e-7]."""
    y = np.asarray(y, dtype=np.float64)
    p = np.asarray(yhat, dtype=np.float64)
    if y.shape != p.shape:
        raise ValueError(f"extent mismatch: {y.shape} vs {p.shape}")
    p = np.clip(p, EPS, 1.0 - EPS)
    return float(-(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)).mean())


def cross_entropy_loss(labels, probs) -> float:
    labels = np.asarray(labels, dtype=np.int64)
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 2 or labels.shape != (probs.shape[0],):
        raise ValueError(f"need (N, C) probs and N labels, got {probs.shape} and {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= probs.shape[1]):
        raise ValueError(f"label out of range [0, {probs.shape[1]})")
    picked = np.clip(probs[np.arange(len(labels)), labels], EPS, 1.0 - EPS)
    return float(-np.log(picked).mean())


def iou(a, b) -> float:
    """|A and B| / |A or B|; two empty masks agree perfectly (1.0)."""
    a, b = _as_binary_pair(a, b)
    union = np.count_nonzero(a | b)
    if union == 0:
        return 1.0
    return np.count_nonzero(a & b) / union


def dice(a, b) -> float:
    a, b = _as_binary_pair(a, b)
    total = np.count_nonzero(a) + np.count_nonzero(b)
    if total == 0:
        return 1.0
    return 2.0 * np.count_nonzero(a & b) / total


def iou_threshold_rate(ious: Sequence[float], t: float) -> float:
    """Percentage of samples with IoU strictly above ``t``."""
    v = np.asarray(ious, dtype=np.float64)
    if v.size == 0:
        raise ValueError("no IoU values")
    return 100.0 * float(np.mean(v > t))


def topk_accuracy(probs, labels, k: int) -> float:
    """Fraction of rows whose label is among the k most probable classes.

    Ties rank the lower class index first.
    """
    probs = np.asarray(probs)
    labels = np.asarray(labels)
    if k < 1:
        raise ValueError("k must be >= 1")
    n_cls = probs.shape[1]
    if k > n_cls:
        warnings.warn(f"k={k} exceeds {n_cls} classes; clamped", stacklevel=2)
        k = n_cls
    if len(labels) == 0:
        return 0.0
    order = np.argsort(-probs, axis=1, kind="stable")[:, :k]
    return float(np.mean((order == labels[:, None]).any(axis=1)))


# --------------------------------------------------------------------------
# Latency


@dataclass
class LatencyStats:
    mean: float
    std: float
    min: float
    max: float
    runs: int
    processor: str


def processor_description() -> str:
    name = ""
    try:
        with open("/proc/cpuinfo") as fh:
            for line in fh:
                if line.startswith("model name"):
                    name = line.split(":", 1)[1].strip()
                    break
    except OSError:
        pass
    name = name or platform.processor() or platform.machine()
    return f"{name} ({platform.system()}, Python {platform.python_version()})"


def bench_latency(pipeline: Callable[[], object], n: int = 100, warmup: int = 3) -> LatencyStats:
    """Wall-clock seconds of ``n`` calls after ``warmup`` untimed calls."""
    if n < 1:
        raise ValueError("n must be >= 1")
    for _ in range(warmup):
        pipeline()
    times = np.empty(n)
    for i in range(n):
        t0 = time.perf_counter()
        pipeline()
        times[i] = time.perf_counter() - t0
    return LatencyStats(float(times.mean()), float(times.std()), float(times.min()),
                        float(times.max()), n, processor_description())


# --------------------------------------------------------------------------
# Reports


@dataclass
class EvalReport:
    n_samples: int = 0
    bce: float | None = None
    iou_mean: float | None = None
    iou_rate_50: float | None = None
    iou_rate_75: float | None = None
    dice_mean: float | None = None
    top1: float | None = None
    top3: float | None = None
    top5: float | None = None
    e2e_top1: float | None = None
    e2e_top3: float | None = None
    e2e_top5: float | None = None
    latency_mean: float | None = None
    latency_std: float | None = None
    params: int | None = None
    macs: int | None = None
    test_augmentation: bool = False
    notes: list[str] = field(default_factory=list)

    def items(self) -> list[tuple[str, object]]:
        return [(k, v) for k, v in asdict(self).items() if v is not None and v != []]

    def to_text(self) -> str:
        """Flat ``key = value`` record, one line per populated field."""
        lines = []
        for k, v in self.items():
            if isinstance(v, list):
                v = "; ".join(v)
            lines.append(f"{k} = {v}")
        return "\n".join(lines) + "\n"

    def table(self) -> str:
        rows = [(k, _fmt(v)) for k, v in self.items() if k != "notes"]
        w = max(len(k) for k, _ in rows)
        return "\n".join(f"{k:<{w}}  {v}" for k, v in rows)


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.4f}" if math.isfinite(v) else str(v)
    return str(v)


def parse_record(text: str) -> dict[str, str]:
    out = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#") or "=" not in line:
            continue
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out
