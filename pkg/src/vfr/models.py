"""The segmenter and classifier networks, plus inference helpers."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .arch import LayerSpec, Model, ModelSpec, SpecError
from .tensor import ContractError, Tensor


@dataclass(frozen=True)
class ScaleProfile:
    name: str
    input_hw: tuple[int, int]
    unet_channels: tuple[int, ...]          # encoder stages then bottleneck
    classifier_widths: tuple[int, ...]
    classifier_convs: tuple[int, ...]       # Conv-BN-ReLU blocks per stage
    image_channels: int = 3

    def with_input(self, hw: tuple[int, int] | None = None, image_channels: int | None = None) -> "ScaleProfile":
        return ScaleProfile(self.name, tuple(hw or self.input_hw), self.unet_channels,
                            self.classifier_widths, self.classifier_convs,
                            image_channels or self.image_channels)


PAPER = ScaleProfile("paper", (224, 224), (32, 64, 128, 256, 512), (32, 64, 96, 192, 256), (2, 2, 2, 1, 1))
DESK = ScaleProfile("desk", (64, 64), (16, 32, 64, 80, 96), (16, 32, 48, 64, 96), (2, 2, 2, 1, 1))
PROFILES = {"paper": PAPER, "desk": DESK}


def get_profile(name: str, input_hw: tuple[int, int] | None = None, image_channels: int | None = None) -> ScaleProfile:
    try:
        base = PROFILES[name]
    except KeyError:
        raise SpecError(f"unknown profile {name!r}; expected one of {sorted(PROFILES)}") from None
    return base.with_input(input_hw, image_channels)


def _check_hw(profile: ScaleProfile, pools: int) -> None:
    h, w = profile.input_hw
    f = 2 ** pools
    if h % f or w % f:
        raise SpecError(f"profile {profile.name}: input {h}x{w} not divisible by {f}")


def _cbr(layers: list, prefix: str, cin: int, cout: int) -> str:
    """Append Conv-BN-ReLU; return the BatchNorm layer id."""
    layers.append(LayerSpec(f"{prefix}.conv", "Conv", cin, cout, kernel=3, stride=1, pad=1))
    layers.append(LayerSpec(f"{prefix}.bn", "BatchNorm", cout, cout))
    layers.append(LayerSpec(f"{prefix}.relu", "ReLU"))
    return f"{prefix}.bn"


def unet_spec(profile: ScaleProfile) -> ModelSpec:
    """Four-stage encoder/decoder with BN-output skip connections and a sigmoid mask head."""
    *enc, neck = profile.unet_channels
    _check_hw(profile, len(enc))
    layers: list[LayerSpec] = []
    skips = []
    c = profile.image_channels
    for i, w in enumerate(enc, 1):
        _cbr(layers, f"enc{i}.a", c, w)
        skips.append(_cbr(layers, f"enc{i}.b", w, w))
        layers.append(LayerSpec(f"enc{i}.pool", "MaxPool2x2"))
        c = w
    _cbr(layers, "neck.a", c, neck)
    _cbr(layers, "neck.b", neck, neck)
    c = neck
    for i, w in zip(range(len(enc), 0, -1), reversed(enc)):
        layers.append(LayerSpec(f"dec{i}.up", "ConvTranspose", c, w, kernel=2, stride=2))
        layers.append(LayerSpec(f"dec{i}.cat", "ConcatWith", source=skips[i - 1]))
        _cbr(layers, f"dec{i}.a", 2 * w, w)
        _cbr(layers, f"dec{i}.b", w, w)
        c = w
    layers.append(LayerSpec("head.conv", "Conv", c, 1, kernel=3, stride=1, pad=1))
    layers.append(LayerSpec("head.sigmoid", "Sigmoid"))
    h, w = profile.input_hw
    return ModelSpec(f"unet-{profile.name}", (profile.image_channels, h, w), tuple(layers), "mask")


def classifier_spec(profile: ScaleProfile, num_classes: int) -> ModelSpec:
    """Conv-BN-ReLU stages separated by 2x2 pooling, then GAP, Dense, Softmax.

    Input is a single-channel binary mask.
    """
    if num_classes < 2:
        raise SpecError(f"classifier needs at least 2 classes, got {num_classes}")
    _check_hw(profile, len(profile.classifier_widths) - 1)
    layers: list[LayerSpec] = []
    c = 1
    for s, (w, n) in enumerate(zip(profile.classifier_widths, profile.classifier_convs), 1):
        if s > 1:
            layers.append(LayerSpec(f"s{s - 1}.pool", "MaxPool2x2"))
        for j in range(n):
            _cbr(layers, f"s{s}.{j}", c, w)
            c = w
    layers.append(LayerSpec("gap", "GAP"))
    layers.append(LayerSpec("fc", "Dense", c, num_classes))
    layers.append(LayerSpec("softmax", "Softmax"))
    h, w = profile.input_hw
    return ModelSpec(f"classifier-{profile.name}", (1, h, w), tuple(layers), "classes")


# --------------------------------------------------------------------------
# Inference


@dataclass
class SegmentationOutput:
    prob_mask: np.ndarray     # (N, H, W) float32 in [0, 1]
    binary_mask: np.ndarray   # (N, H, W) uint8 in {0, 1}


def image_to_tensor(image: np.ndarray) -> Tensor:
    """uint8 HxW or HxWxC image (or a batch of them) to float NCHW in [0, 1]."""
    a = np.asarray(image)
    if a.ndim == 2:
        a = a[None, :, :, None]
    elif a.ndim == 3:
        a = a[None]
    return Tensor(a.transpose(0, 3, 1, 2).astype(np.float32) / 255.0)


def mask_to_tensor(mask: np.ndarray) -> Tensor:
    """{0,255} or {0,1} HxW mask(s) to a float (N, 1, H, W) tensor of 0/1."""
    m = np.asarray(mask)
    if m.ndim == 2:
        m = m[None]
    return Tensor((m > 0).astype(np.float32)[:, None])


def segment_image(model: Model, image, threshold: float = 0.5) -> SegmentationOutput:
    x = image if isinstance(image, Tensor) else Tensor(image)
    if x.data.ndim != 4 or x.shape[1:] != model.spec.input_shape:
        raise ContractError(f"segment_image: image shape {x.shape} does not match model input "
                            f"{model.spec.input_shape}")
    was = model.training
    model.eval()
    try:
        prob = model(x).data[:, 0]
    finally:
        model.training = was
    return SegmentationOutput(prob, (prob >= threshold).astype(np.uint8))


def rank_classes(probs: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k largest probabilities, ties by ascending index."""
    return np.argsort(-np.asarray(probs), kind="stable")[:k]


@dataclass
class FontPrediction:
    ranking: list[tuple[str, float]]
    segmentation: SegmentationOutput
    warnings: list[str]


def predict_font(seg_model: Model, cls_model: Model, image, k: int = 5,
                 class_names: list[str] | None = None) -> FontPrediction:
    """Segment one image, classify its binary mask, return the top-k fonts."""
    seg_hw = seg_model.spec.input_shape[1:]
    if seg_hw != cls_model.spec.input_shape[1:]:
        raise ContractError(f"segmenter output {seg_hw} does not match classifier input "
                            f"{cls_model.spec.input_shape[1:]}")
    seg = segment_image(seg_model, image)
    if seg.binary_mask.shape[0] != 1:
        raise ContractError("predict_font takes a single image")
    cls_model.eval()
    probs = cls_model(mask_to_tensor(seg.binary_mask)).data[0]
    n = probs.shape[0]
    notes = []
    if k > n:
        notes.append(f"k={k} exceeds {n} classes; clamped to {n}")
        warnings.warn(notes[-1], stacklevel=2)
        k = n
    names = class_names or [str(i) for i in range(n)]
    top = rank_classes(probs, k)
    return FontPrediction([(names[i], float(probs[i])) for i in top], seg, notes)
