"""Training loops for the segmenter and the classifier."""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import checkpoint
from . import tensor as T
from .arch import Model, build_model
from .dataset import Dataset, DataError, masks_to_nchw, to_nchw
from .datagen.augment import augment_pair
from .evaluate import class_index, evaluate, predict_masks, predict_probs, segmentation_scores, _topk
from .metrics import EvalReport, cross_entropy_loss
from .models import classifier_spec, get_profile, unet_spec
from .optim import Adam, NonFiniteGradientError

TASKS = ("seg", "cls")
# spawn-key tags for the independent random streams of one run
SHUFFLE_STREAM, AUGMENT_STREAM = 1, 2


class NumericFailure(FloatingPointError):
    def __init__(self, message: str, epoch: int):
        super().__init__(message)
        self.epoch = epoch


@dataclass
class TrainConfig:
    task: str = "seg"
    seed: int = 0
    profile: str = "desk"
    batch_size: int = 8
    max_epochs: int = 30
    initial_lr: float = 1e-5
    # plateau rule: switch to plateau_lr once the monitored val metric has
    # improved by less than plateau_min_delta for plateau_patience epochs
    plateau_lr: float | None = 1e-4
    plateau_patience: int = 3
    plateau_min_delta: float = 1e-3
    augment: bool = True
    aug_probability: float = 0.3
    aug_max_angle: float = 30.0
    color_mode: str = "rgb"
    eval_batch_size: int = 16
    track_train_metric: bool = False

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"task must be one of {TASKS}, got {self.task!r}")
        if self.initial_lr <= 0 or (self.plateau_lr is not None and self.plateau_lr <= 0):
            raise ValueError("learning rates must be positive")
        if self.plateau_patience < 1:
            raise ValueError("plateau_patience must be >= 1")
        if self.batch_size < 2:
            # batch norm needs more than one value per channel
            raise ValueError("batch_size must be >= 2")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if self.color_mode not in ("rgb", "grayscale"):
            raise ValueError(f"color_mode must be rgb or grayscale, got {self.color_mode!r}")

    @classmethod
    def for_task(cls, task: str, **overrides) -> "TrainConfig":
        """Task defaults: seg 1e-5 -> 1e-4 on plateau; cls constant 1e-4."""
        base = dict(task=task)
        if task == "cls":
            base.update(initial_lr=1e-4, plateau_lr=None, max_epochs=40)
        if overrides.get("profile", "desk") == "paper":
            base.update(batch_size=16)
        base.update(overrides)
        return cls(**base)

    @property
    def monitor(self) -> str:
        return "val_dice" if self.task == "seg" else "val_top1"


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    train_loss: float
    val_loss: float
    val_metric: float
    seconds: float
    train_metric: float | None = None


@dataclass
class RunReport:
    config: dict
    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: int | None = None
    best_val: float | None = None
    lr_switch_epoch: int | None = None
    checkpoint: str | None = None
    test: EvalReport | None = None
    wall_clock: float = 0.0
    aborted: str | None = None
    class_names: list[str] = field(default_factory=list)

    def to_text(self) -> str:
        lines = [f"config.{k} = {v}" for k, v in self.config.items()]
        for name in ("best_epoch", "best_val", "lr_switch_epoch", "checkpoint", "wall_clock", "aborted"):
            v = getattr(self, name)
            if v is not None:
                lines.append(f"{name} = {v}")
        for e in self.epochs:
            for k, v in asdict(e).items():
                if k != "epoch" and v is not None:
                    lines.append(f"epoch.{e.epoch}.{k} = {v}")
        if self.test is not None:
            lines += [f"test.{ln}" for ln in self.test.to_text().splitlines()]
        return "\n".join(lines) + "\n"

    def write(self, path) -> Path:
        p = Path(path)
        p.write_text(self.to_text(), encoding="utf-8")
        return p


def report_path(ckpt_path) -> Path:
    p = Path(ckpt_path)
    return p.with_name(p.name + ".report.txt")


def stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


class _Plateau:
    """Single lr switch once improvement stalls for ``patience`` epochs."""

    def __init__(self, patience: int, min_delta: float):
        self.patience, self.min_delta = patience, min_delta
        self.best = -math.inf
        self.stalled = 0

    def update(self, value: float) -> bool:
        if value - self.best < self.min_delta:
            self.stalled += 1
        else:
            self.stalled = 0
        self.best = max(self.best, value)
        return self.stalled >= self.patience


def _batch(ds: Dataset, idx, cfg: TrainConfig, rng_seed: int | None, epoch: int):
    """Network inputs and targets for the given sample indices."""
    xs, ys = [], []
    for i in idx:
        m = ds.mask(i)
        im = ds.image(i, cfg.color_mode) if cfg.task == "seg" else m
        if rng_seed is not None:
            im, m = augment_pair(im, m, stream(rng_seed, AUGMENT_STREAM, epoch, int(i)),
                                 cfg.aug_probability, cfg.aug_max_angle)
        xs.append(im)
        ys.append(m)
    if cfg.task == "seg":
        return to_nchw(xs), masks_to_nchw(ys)
    return masks_to_nchw(ys), None


def _loss(model: Model, x: np.ndarray, target) -> T.Tensor:
    out = model(x)
    if model.spec.head == "mask":
        return T.binary_cross_entropy(out, target)
    return T.categorical_cross_entropy(out, target)


def _validate(model: Model, ds: Dataset, cfg: TrainConfig, labels) -> tuple[float, float]:
    """(val loss, monitored metric), augmentation always off."""
    idx = range(len(ds))
    if cfg.task == "seg":
        prob = predict_masks(model, [ds.image(i, cfg.color_mode) for i in idx], cfg.eval_batch_size)
        s = segmentation_scores(prob, [ds.mask(i) for i in idx])
        return float(s["bce"].mean()), float(s["dice"].mean())
    probs = predict_probs(model, [ds.mask(i) for i in idx], cfg.eval_batch_size)
    return cross_entropy_loss(labels, probs), _topk(probs, labels, (1,))[0]


def build_for(cfg: TrainConfig, hw: tuple[int, int], num_classes: int) -> Model:
    channels = 1 if cfg.color_mode == "grayscale" else 3
    profile = get_profile(cfg.profile, hw, channels)
    spec = unet_spec(profile) if cfg.task == "seg" else classifier_spec(profile, num_classes)
    return build_model(spec, cfg.seed)


def train(cfg: TrainConfig, root, ckpt_path, log=None) -> RunReport:
    """Train on the ``train`` split of the dataset at ``root``, select by
    ``val``, score the best checkpoint on ``test``.

    The run is a pure function of (dataset, cfg) for a fixed thread count.
    """
    t_start = time.perf_counter()
    train_ds = Dataset(root, "train")
    val_ds = Dataset(root, "val", train_ds.class_names)
    test_ds = Dataset(root, "test", train_ds.class_names)
    if len(train_ds) < cfg.batch_size:
        raise DataError(f"train split has {len(train_ds)} samples, fewer than batch_size={cfg.batch_size}")
    if len(val_ds) == 0:
        raise DataError("validation split is empty")
    if cfg.task == "seg" and not train_ds.has_images:
        raise DataError("segmentation training needs the image+mask (PTISEG) layout")
    model = build_for(cfg, train_ds.extent(), train_ds.num_classes)
    opt = Adam(model.params, lr=cfg.initial_lr)
    plateau = _Plateau(cfg.plateau_patience, cfg.plateau_min_delta)
    report = RunReport(asdict(cfg), checkpoint=str(ckpt_path), class_names=train_ds.class_names)
    meta = {"task": cfg.task, "profile": cfg.profile, "seed": cfg.seed, "color_mode": cfg.color_mode,
            "class_names": train_ds.class_names, "train_config": asdict(cfg)}
    labels = train_ds.labels
    n = len(train_ds)
    steps = n // cfg.batch_size          # drop the ragged tail: BN wants full batches

    for epoch in range(1, cfg.max_epochs + 1):
        t0 = time.perf_counter()
        order = stream(cfg.seed, SHUFFLE_STREAM, epoch).permutation(n)
        model.train()
        losses = []
        for s in range(steps):
            idx = order[s * cfg.batch_size:(s + 1) * cfg.batch_size]
            x, y = _batch(train_ds, idx, cfg, cfg.seed if cfg.augment else None, epoch)
            target = y if cfg.task == "seg" else labels[idx]
            model.zero_grad()
            with T.Tape() as tape:
                loss = _loss(model, x, target)
            value = float(loss.item())
            if not math.isfinite(value):
                report.aborted = f"non-finite training loss at epoch {epoch}, step {s}"
                report.wall_clock = time.perf_counter() - t_start
                raise NumericFailure(report.aborted, epoch)
            tape.backward(loss)
            try:
                opt.step()
            except NonFiniteGradientError as exc:
                report.aborted = f"non-finite gradient at epoch {epoch}, step {s}: {exc}"
                raise NumericFailure(report.aborted, epoch) from exc
            losses.append(value)
        val_loss, val_metric = _validate(model, val_ds, cfg, val_ds.labels)
        train_metric = _validate(model, train_ds, cfg, labels)[1] if cfg.track_train_metric else None
        rec = EpochRecord(epoch, opt.lr, float(np.mean(losses)), val_loss, val_metric,
                          time.perf_counter() - t0, train_metric)
        report.epochs.append(rec)
        if report.best_val is None or val_metric > report.best_val:
            report.best_val, report.best_epoch = val_metric, epoch
            checkpoint.save(model, ckpt_path, {**meta, "epoch": epoch, cfg.monitor: val_metric}, opt)
        stalled = plateau.update(val_metric)
        if stalled and cfg.plateau_lr is not None and report.lr_switch_epoch is None:
            opt.lr = cfg.plateau_lr
            report.lr_switch_epoch = epoch
        if log:
            log(f"epoch {epoch:3d}  lr {rec.lr:.1e}  train {rec.train_loss:.4f}  val {val_loss:.4f}  "
                f"{cfg.monitor} {val_metric:.4f}  {rec.seconds:.1f}s")

    best = checkpoint.load(ckpt_path)
    seg, cls = (best, None) if cfg.task == "seg" else (None, best)
    report.test = evaluate(test_ds, seg, cls, color_mode=cfg.color_mode,
                           class_names=train_ds.class_names, batch_size=cfg.eval_batch_size)
    report.wall_clock = time.perf_counter() - t_start
    report.write(report_path(ckpt_path))
    return report


def train_segmentation(cfg: TrainConfig, root, ckpt_path, log=None) -> RunReport:
    if cfg.task != "seg":
        raise ValueError("train_segmentation needs task='seg'")
    return train(cfg, root, ckpt_path, log)


def train_classifier(cfg: TrainConfig, root, ckpt_path, log=None) -> RunReport:
    if cfg.task != "cls":
        raise ValueError("train_classifier needs task='cls'")
    return train(cfg, root, ckpt_path, log)


def checkpoint_classes(ckpt: checkpoint.Checkpoint) -> list[str] | None:
    return ckpt.meta.get("class_names")
