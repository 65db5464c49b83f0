"""On-disk datasets: manifest reading, stratified splits, batch loading and
import of external directory-per-class collections."""

from __future__ import annotations

import hashlib
import json
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

SPLITS = ("train", "val", "test")
TEST_FRACTION = 0.2
VAL_FRACTION = 0.2      # of what remains after the test split
MIN_PER_CLASS = 5
IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff")


class DataError(RuntimeError):
    pass


def read_manifest(root) -> list[dict]:
    path = Path(root) / "manifest.jsonl"
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    try:
        return [json.loads(ln) for ln in text.splitlines() if ln.strip()]
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: malformed record ({exc})") from exc


def manifest_text(records: list[dict]) -> str:
    return "".join(json.dumps(r, ensure_ascii=False, sort_keys=True) + "\n" for r in records)


def write_manifest(root, records: list[dict]) -> str:
    text = manifest_text(records)
    (Path(root) / "manifest.jsonl").write_text(text, encoding="utf-8")
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def source_hash(records: list[dict]) -> str:
    """Hash of the manifest with split tags cleared, so re-splitting is stable."""
    bare = [{**r, "split": None} for r in records]
    return hashlib.sha256(manifest_text(bare).encode("utf-8")).hexdigest()


# --------------------------------------------------------------------------
# Splitting


@dataclass
class SplitManifest:
    seed: int
    source_sha256: str
    tags: dict[str, str]                        # sample id -> split
    counts: dict[str, int] = field(default_factory=dict)

    def ids(self, split: str) -> list[str]:
        return [i for i, s in self.tags.items() if s == split]

    def to_json(self) -> str:
        return json.dumps({"seed": self.seed, "source_sha256": self.source_sha256,
                           "counts": self.counts, "tags": self.tags}, indent=1, sort_keys=True)


def split_sizes(n: int) -> tuple[int, int, int]:
    """(train, val, test) sizes for one class of ``n`` samples: 64/16/20."""
    n_test = int(round(n * TEST_FRACTION))
    n_val = int(round((n - n_test) * VAL_FRACTION))
    return n - n_test - n_val, n_val, n_test


def split_dataset(records: list[dict], seed: int) -> SplitManifest:
    """Stratified train/val/test assignment, a pure function of (records, seed)."""
    if not records:
        raise DataError("cannot split an empty manifest")
    by_class: dict[str, list[str]] = defaultdict(list)
    for r in records:
        if r.get("font") is None:
            raise DataError(f"record {r.get('id')} has no class label")
        by_class[r["font"]].append(r["id"])
    small = {c: len(v) for c, v in by_class.items() if len(v) < MIN_PER_CLASS}
    if small:
        raise DataError(f"stratified split needs >= {MIN_PER_CLASS} samples per class; too few: {small}")
    tags: dict[str, str] = {}
    for ci, cls in enumerate(sorted(by_class)):
        ids = sorted(by_class[cls])
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(ci,)))
        order = rng.permutation(len(ids))
        n_train, n_val, _ = split_sizes(len(ids))
        for rank, j in enumerate(order):
            tags[ids[j]] = "train" if rank < n_train else "val" if rank < n_train + n_val else "test"
    counts = {s: sum(1 for t in tags.values() if t == s) for s in SPLITS}
    return SplitManifest(seed, source_hash(records), tags, counts)


def apply_split(root, seed: int) -> SplitManifest:
    """Split the dataset at ``root`` in place: tags go into the manifest and split.json."""
    records = read_manifest(root)
    sm = split_dataset(records, seed)
    for r in records:
        r["split"] = sm.tags[r["id"]]
    write_manifest(root, records)
    (Path(root) / "split.json").write_text(sm.to_json() + "\n", encoding="utf-8")
    return sm


# --------------------------------------------------------------------------
# Loading


def _read_png(path: Path, mode: str) -> np.ndarray:
    try:
        with Image.open(path) as im:
            return np.asarray(im.convert(mode))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc


class Dataset:
    """Read-only view of a generated (or imported) dataset directory."""

    def __init__(self, root, split: str | None = None, class_names: list[str] | None = None):
        self.root = Path(root)
        records = read_manifest(self.root)
        info = self._info()
        self.class_names = list(class_names or info.get("classes") or sorted({r["font"] for r in records}))
        index = {c: i for i, c in enumerate(self.class_names)}
        unknown = sorted({r["font"] for r in records} - set(index))
        if unknown:
            raise DataError(f"labels not in class list: {unknown[:5]}")
        if split is not None:
            if split not in SPLITS:
                raise DataError(f"unknown split {split!r}")
            if any(r.get("split") is None for r in records):
                raise DataError(f"{self.root} has not been split; run the split step first")
            records = [r for r in records if r["split"] == split]
        self.records = records
        self.split = split
        self.labels = np.array([index[r["font"]] for r in records], dtype=np.int64)
        self.has_images = (self.root / "images").is_dir()
        self._cache: dict[tuple[str, int], np.ndarray] = {}

    def _info(self) -> dict:
        p = self.root / "dataset.json"
        return json.loads(p.read_text(encoding="utf-8")) if p.exists() else {}

    def __len__(self) -> int:
        return len(self.records)

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    def mask(self, i: int) -> np.ndarray:
        key = ("mask", i)
        if key not in self._cache:
            self._cache[key] = _read_png(self.root / "masks" / f"{self.records[i]['id']}.png", "L")
        return self._cache[key]

    def image(self, i: int, color_mode: str = "rgb") -> np.ndarray:
        if not self.has_images:
            raise DataError(f"{self.root} holds masks only (PFR layout); images are needed here")
        key = (color_mode, i)
        if key not in self._cache:
            mode = "L" if color_mode == "grayscale" else "RGB"
            self._cache[key] = _read_png(self.root / "images" / f"{self.records[i]['id']}.png", mode)
        return self._cache[key]

    def extent(self) -> tuple[int, int]:
        if not self.records:
            raise DataError("empty dataset")
        return self.mask(0).shape[:2]


def to_nchw(images: list[np.ndarray]) -> np.ndarray:
    """Stack uint8 HxW / HxWxC arrays into float32 NCHW in [0, 1]."""
    a = np.stack([im if im.ndim == 3 else im[..., None] for im in images])
    return a.transpose(0, 3, 1, 2).astype(np.float32) / np.float32(255.0)


def masks_to_nchw(masks: list[np.ndarray]) -> np.ndarray:
    return (np.stack(masks) > 0).astype(np.float32)[:, None]


# --------------------------------------------------------------------------
# External collections


def import_directory(src, dest, image_size: int = 224, threshold: int | None = None) -> int:
    """Convert a directory-per-class collection of text images into the
    manifest layout. Each image is letterboxed onto a black square canvas
    and binarized into a mask (dark ink on a light page by default)."""
    src, dest = Path(src), Path(dest)
    classes = sorted(p.name for p in src.iterdir() if p.is_dir()) if src.is_dir() else []
    if not classes:
        raise DataError(f"{src} has no class subdirectories")
    (dest / "masks").mkdir(parents=True, exist_ok=True)
    records = []
    for ci, cls in enumerate(classes):
        files = sorted(p for p in (src / cls).iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
        for fi, path in enumerate(files):
            gray = _read_png(path, "L")
            mask = binarize_page(gray, threshold)
            mask = letterbox(mask, image_size)
            sid = f"x{fi:06d}_f{ci:03d}"
            Image.fromarray(mask, "L").save(dest / "masks" / f"{sid}.png")
            records.append({"id": sid, "font": cls, "label": ci, "text": None, "text_level": "line",
                            "source": f"{cls}/{path.name}", "split": None})
    if not records:
        raise DataError(f"no images found under {src}")
    records.sort(key=lambda r: r["id"])
    digest = write_manifest(dest, records)
    info = {"mode": "PFR", "imported_from": str(src), "image_size": image_size, "classes": classes,
            "emitted": len(records), "manifest_sha256": digest}
    (dest / "dataset.json").write_text(json.dumps(info, indent=2) + "\n", encoding="utf-8")
    return len(records)


def binarize_page(gray: np.ndarray, threshold: int | None = None) -> np.ndarray:
    """Ink -> 255, page -> 0. Threshold defaults to the midpoint of the
    intensity range; polarity is chosen so ink is the minority class."""
    g = gray.astype(np.int32)
    t = (int(g.min()) + int(g.max())) / 2 if threshold is None else threshold
    ink = g < t
    if ink.mean() > 0.5:
        ink = ~ink
    return np.where(ink, 255, 0).astype(np.uint8)


def letterbox(mask: np.ndarray, size: int) -> np.ndarray:
    h, w = mask.shape
    s = size / max(h, w)
    nh, nw = max(1, round(h * s)), max(1, round(w * s))
    small = np.asarray(Image.fromarray(mask, "L").resize((nw, nh), Image.NEAREST))
    out = np.zeros((size, size), np.uint8)
    y, x = (size - nh) // 2, (size - nw) // 2
    out[y:y + nh, x:x + nw] = small
    return out
