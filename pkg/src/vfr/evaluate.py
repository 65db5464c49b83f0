"""Test-split evaluation of segmenter and/or classifier checkpoints."""

from __future__ import annotations

import warnings

import numpy as np

from . import metrics as M
from .arch import Model, count_flops, count_parameters
from .dataset import Dataset, DataError, masks_to_nchw, to_nchw
from .datagen.augment import augment_pair
from .models import rank_classes

EVAL_STREAM = 7     # spawn-key tag separating test-time augmentation draws from training draws


class ProfileMismatchError(DataError):
    pass


def eval_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(EVAL_STREAM, index)))


def _forward(model: Model, x: np.ndarray) -> np.ndarray:
    model.eval()
    return model(x).data


def predict_masks(model: Model, images: list[np.ndarray], batch_size: int = 16) -> np.ndarray:
    """Sigmoid probabilities, shape (N, H, W)."""
    out = [_forward(model, to_nchw(images[i:i + batch_size]))[:, 0] for i in range(0, len(images), batch_size)]
    return np.concatenate(out) if out else np.zeros((0,), np.float32)


def predict_probs(model: Model, masks: list[np.ndarray], batch_size: int = 32) -> np.ndarray:
    out = [_forward(model, masks_to_nchw(masks[i:i + batch_size])) for i in range(0, len(masks), batch_size)]
    return np.concatenate(out) if out else np.zeros((0, model.spec.output_shape[0]), np.float32)


def segmentation_scores(prob: np.ndarray, masks: list[np.ndarray]) -> dict:
    """Per-sample BCE, IoU and Dice of thresholded predictions."""
    bces, ious, dices = [], [], []
    for p, m in zip(prob, masks):
        y = (m > 0).astype(np.float64)
        bces.append(M.bce_loss(y, p))
        pred = p >= 0.5
        ious.append(M.iou(y > 0, pred))
        dices.append(M.dice(y > 0, pred))
    return {"bce": np.array(bces), "iou": np.array(ious), "dice": np.array(dices)}


def _topk(probs, labels, ks=(1, 3, 5)) -> list[float]:
    with warnings.catch_warnings():
        # fewer than five classes: top-5 clamps to all classes, which is fine here
        warnings.simplefilter("ignore")
        return [M.topk_accuracy(probs, labels, k) for k in ks]


def check_input(model: Model, ds: Dataset, channels: int | None = None) -> None:
    h, w = ds.extent()
    c, mh, mw = model.spec.input_shape
    if (mh, mw) != (h, w) or (channels is not None and c != channels):
        raise ProfileMismatchError(f"{model.spec.name} expects input {model.spec.input_shape}, "
                                   f"dataset provides {channels or c}x{h}x{w}")


def load_inputs(ds: Dataset, indices, color_mode: str, test_augmentation: bool, seed: int,
                need_images: bool = True):
    images, masks = [], []
    for i in indices:
        m = ds.mask(i)
        im = ds.image(i, color_mode) if need_images else m
        if test_augmentation:
            im, m = augment_pair(im, m, eval_rng(seed, int(i)))
        images.append(im)
        masks.append(m)
    return images, masks


def class_index(model_classes: list[str] | None, ds: Dataset) -> np.ndarray:
    """Dataset labels expressed in the classifier's class order."""
    if not model_classes:
        return ds.labels
    pos = {c: i for i, c in enumerate(model_classes)}
    missing = sorted(set(ds.class_names) - set(pos))
    if missing:
        raise ProfileMismatchError(f"dataset classes unknown to the classifier: {missing[:5]}")
    return np.array([pos[ds.class_names[l]] for l in ds.labels], dtype=np.int64)


def evaluate(ds: Dataset, seg_model: Model | None = None, cls_model: Model | None = None,
             test_augmentation: bool = False, seed: int = 0, color_mode: str = "rgb",
             class_names: list[str] | None = None, batch_size: int = 16) -> M.EvalReport:
    """Run the metric suites that the given checkpoints support on ``ds``.

    With ``test_augmentation`` every sample first goes through
    :func:`augment_pair` with a per-sample stream derived from ``seed``.
    """
    if seg_model is None and cls_model is None:
        raise ValueError("evaluate needs at least one model")
    rep = M.EvalReport(n_samples=len(ds), test_augmentation=test_augmentation)
    if len(ds) == 0:
        raise DataError("nothing to evaluate: empty split")
    idx = np.arange(len(ds))
    params = macs = 0
    images = None
    if seg_model is not None:
        chans = 1 if color_mode == "grayscale" else 3
        check_input(seg_model, ds, chans)
        images, masks = load_inputs(ds, idx, color_mode, test_augmentation, seed)
        prob = predict_masks(seg_model, images, batch_size)
        s = segmentation_scores(prob, masks)
        rep.bce = float(s["bce"].mean())
        rep.iou_mean = float(s["iou"].mean())
        rep.dice_mean = float(s["dice"].mean())
        rep.iou_rate_50 = M.iou_threshold_rate(s["iou"], 0.5) / 100.0
        rep.iou_rate_75 = M.iou_threshold_rate(s["iou"], 0.75) / 100.0
        params += count_parameters(seg_model.spec).trainable
        macs += count_flops(seg_model.spec).macs
    if cls_model is not None:
        check_input(cls_model, ds, 1)
        labels = class_index(class_names, ds)
        _, masks = load_inputs(ds, idx, color_mode, test_augmentation, seed, need_images=False)
        probs = predict_probs(cls_model, masks, batch_size)
        rep.top1, rep.top3, rep.top5 = _topk(probs, labels)
        params += count_parameters(cls_model.spec).trainable
        macs += count_flops(cls_model.spec).macs
        if seg_model is not None:
            predicted = [(p >= 0.5).astype(np.uint8) for p in prob]
            e2e = predict_probs(cls_model, predicted, batch_size)
            rep.e2e_top1, rep.e2e_top3, rep.e2e_top5 = _topk(e2e, labels)
    rep.params, rep.macs = params, macs
    return rep


def e2e_rankings(seg_model: Model, cls_model: Model, images: list[np.ndarray], k: int = 5,
                 batch_size: int = 16) -> np.ndarray:
    """Top-k class indices per image through segment -> classify."""
    prob = predict_masks(seg_model, images, batch_size)
    probs = predict_probs(cls_model, [(p >= 0.5).astype(np.uint8) for p in prob], batch_size)
    k = min(k, probs.shape[1])
    return np.stack([rank_classes(p, k) for p in probs])
