"""Declarative layer graphs, shape inference, model building and accounting.

A :class:`ModelSpec` is an ordered list of layers. Each layer consumes the
output of the layer before it; ``ConcatWith`` additionally pulls in the
output of an earlier layer named by ``source``. The last layer is the output.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np

from . import tensor as T
from .tensor import DTYPE, Tensor

KINDS = ("Conv", "ConvTranspose", "BatchNorm", "ReLU", "MaxPool2x2", "ConcatWith",
         "GAP", "Dense", "Softmax", "Sigmoid")

BN_EPS = 1e-5
BN_MOMENTUM = 0.1


class SpecError(ValueError):
    """A model spec is malformed; the message names the offending layer."""


@dataclass(frozen=True)
class LayerSpec:
    id: str
    kind: str
    in_channels: int | None = None
    out_channels: int | None = None
    kernel: int = 3
    stride: int = 1
    pad: int = 0
    source: str | None = None

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}


@dataclass(frozen=True)
class ModelSpec:
    name: str
    input_shape: tuple[int, int, int]
    layers: tuple[LayerSpec, ...]
    head: str = ""

    def __post_init__(self):
        object.__setattr__(self, "input_shape", tuple(int(v) for v in self.input_shape))
        object.__setattr__(self, "layers", tuple(self.layers))

    @property
    def output_shape(self) -> tuple[int, ...]:
        return infer_shapes(self)[self.layers[-1].id]

    def layer(self, layer_id: str) -> LayerSpec:
        for l in self.layers:
            if l.id == layer_id:
                return l
        raise KeyError(layer_id)

    def to_dict(self) -> dict:
        return {"name": self.name, "input_shape": list(self.input_shape), "head": self.head,
                "layers": [l.to_dict() for l in self.layers]}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        layers = tuple(LayerSpec(**l) for l in d["layers"])
        return cls(d["name"], tuple(d["input_shape"]), layers, d.get("head", ""))

    def to_json(self) -> str:
        """Canonical text encoding: sorted keys, no insignificant whitespace."""
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"), ensure_ascii=False)

    @classmethod
    def from_json(cls, text: str) -> "ModelSpec":
        return cls.from_dict(json.loads(text))


# --------------------------------------------------------------------------
# Shape inference


def infer_shapes(spec: ModelSpec) -> dict[str, tuple[int, ...]]:
    """Per-layer output shape (without batch axis). Pure integer algebra."""
    if not spec.layers:
        raise SpecError(f"{spec.name}: no layers")
    if len(spec.input_shape) != 3 or min(spec.input_shape) < 1:
        raise SpecError(f"{spec.name}: input_shape must be positive (C, H, W), got {spec.input_shape}")
    shapes: dict[str, tuple[int, ...]] = {}
    cur: tuple[int, ...] = spec.input_shape
    for layer in spec.layers:
        if layer.id in shapes:
            raise SpecError(f"layer {layer.id!r}: duplicate id")
        if layer.kind not in KINDS:
            raise SpecError(f"layer {layer.id!r}: unknown kind {layer.kind!r}")
        cur = _layer_shape(layer, cur, shapes)
        shapes[layer.id] = cur
    return shapes


def _need(layer: LayerSpec, cur, rank: int):
    if len(cur) != rank:
        what = "(C, H, W) feature map" if rank == 3 else "(C,) feature vector"
        raise SpecError(f"layer {layer.id!r} ({layer.kind}) needs a {what}, got {cur}")


def _channels_in(layer: LayerSpec, cur) -> None:
    if layer.in_channels is None or layer.in_channels != cur[0]:
        raise SpecError(f"layer {layer.id!r} ({layer.kind}): in_channels={layer.in_channels} "
                        f"but incoming tensor has {cur[0]} channels")


def _layer_shape(layer: LayerSpec, cur, shapes) -> tuple[int, ...]:
    kind = layer.kind
    if kind in ("Conv", "ConvTranspose"):
        _need(layer, cur, 3)
        _channels_in(layer, cur)
        if not layer.out_channels or layer.out_channels < 1:
            raise SpecError(f"layer {layer.id!r}: out_channels must be positive")
        if layer.kernel < 1 or layer.stride < 1 or layer.pad < 0:
            raise SpecError(f"layer {layer.id!r}: bad kernel/stride/pad")
        if kind == "Conv":
            h, w = T.conv2d_out_hw(cur[1], cur[2], layer.kernel, layer.stride, layer.pad)
        else:
            h, w = T.conv2d_transpose_out_hw(cur[1], cur[2], layer.kernel, layer.stride)
        if h < 1 or w < 1:
            raise SpecError(f"layer {layer.id!r}: kernel does not fit {cur[1]}x{cur[2]}")
        return (layer.out_channels, h, w)
    if kind == "BatchNorm":
        _channels_in(layer, cur)
        return cur
    if kind in ("ReLU", "Sigmoid"):
        return cur
    if kind == "MaxPool2x2":
        _need(layer, cur, 3)
        if cur[1] % 2 or cur[2] % 2:
            raise SpecError(f"layer {layer.id!r}: MaxPool2x2 on odd extent {cur[1]}x{cur[2]}")
        return (cur[0], cur[1] // 2, cur[2] // 2)
    if kind == "ConcatWith":
        _need(layer, cur, 3)
        if layer.source not in shapes:
            raise SpecError(f"layer {layer.id!r}: ConcatWith source {layer.source!r} is not an earlier layer")
        src = shapes[layer.source]
        if len(src) != 3 or src[1:] != cur[1:]:
            raise SpecError(f"layer {layer.id!r}: spatial mismatch {cur} vs source {layer.source!r} {src}")
        return (cur[0] + src[0], cur[1], cur[2])
    if kind == "GAP":
        _need(layer, cur, 3)
        return (cur[0],)
    if kind == "Dense":
        _need(layer, cur, 1)
        _channels_in(layer, cur)
        if not layer.out_channels or layer.out_channels < 1:
            raise SpecError(f"layer {layer.id!r}: out_channels must be positive")
        return (layer.out_channels,)
    if kind == "Softmax":
        _need(layer, cur, 1)
        return cur
    raise SpecError(f"layer {layer.id!r}: unhandled kind {kind}")  # pragma: no cover


# --------------------------------------------------------------------------
# Accounting


class ParamCount(NamedTuple):
    trainable: int
    non_trainable: int


def count_parameters(spec: ModelSpec) -> ParamCount:
    infer_shapes(spec)
    trainable = non_trainable = 0
    for l in spec.layers:
        if l.kind in ("Conv", "ConvTranspose"):
            trainable += l.kernel * l.kernel * l.in_channels * l.out_channels + l.out_channels
        elif l.kind == "Dense":
            trainable += l.in_channels * l.out_channels + l.out_channels
        elif l.kind == "BatchNorm":
            trainable += 2 * l.in_channels
            non_trainable += 2 * l.in_channels
    return ParamCount(trainable, non_trainable)


@dataclass(frozen=True)
class LayerFlops:
    id: str
    kind: str
    macs: int
    adds: int = 0


@dataclass(frozen=True)
class FlopsReport:
    macs: int
    flops_2x: int
    adds: int
    layers: tuple[LayerFlops, ...] = field(default=())


def count_flops(spec: ModelSpec, input_shape: tuple[int, int, int] | None = None) -> FlopsReport:
    """Multiply-accumulate count of one forward pass on a single sample.

    Conv: Hout*Wout*Cout*k*k*Cin. ConvTranspose: Hin*Win*Cin*Cout*k*k.
    Dense: Cin*Cout. GAP reductions are tallied as ``adds``, not MACs;
    normalization and activations count as zero.
    """
    if input_shape is not None and tuple(input_shape) != spec.input_shape:
        spec = ModelSpec(spec.name, tuple(input_shape), spec.layers, spec.head)
    shapes = infer_shapes(spec)
    prev = spec.input_shape
    rows = []
    for l in spec.layers:
        out = shapes[l.id]
        macs = adds = 0
        if l.kind == "Conv":
            macs = out[1] * out[2] * l.out_channels * l.kernel * l.kernel * l.in_channels
        elif l.kind == "ConvTranspose":
            macs = prev[1] * prev[2] * l.in_channels * l.out_channels * l.kernel * l.kernel
        elif l.kind == "Dense":
            macs = l.in_channels * l.out_channels
        elif l.kind == "GAP":
            adds = prev[0] * prev[1] * prev[2]
        rows.append(LayerFlops(l.id, l.kind, macs, adds))
        prev = out
    total = sum(r.macs for r in rows)
    return FlopsReport(total, 2 * total, sum(r.adds for r in rows), tuple(rows))


# --------------------------------------------------------------------------
# Executable models


class Model:
    """Parameters and running buffers bound to a validated spec."""

    def __init__(self, spec: ModelSpec, params: dict[str, Tensor], buffers: dict[str, np.ndarray]):
        self.spec = spec
        self.params = params
        self.buffers = buffers
        self.training = False
        self._keep = {l.source for l in spec.layers if l.kind == "ConcatWith"}

    def train(self) -> "Model":
        self.training = True
        return self

    def eval(self) -> "Model":
        self.training = False
        return self

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def num_parameters(self) -> int:
        return sum(p.size for p in self.params.values())

    def state(self) -> dict[str, np.ndarray]:
        """All tensors by name: parameters then buffers."""
        out = {n: p.data for n, p in self.params.items()}
        out.update(self.buffers)
        return out

    def __call__(self, x) -> Tensor:
        return self.forward(x)

    def forward(self, x) -> Tensor:
        x = T.as_tensor(x)
        if x.data.ndim != 4 or x.shape[1:] != self.spec.input_shape:
            raise T.ContractError(f"{self.spec.name}: input shape {x.shape} does not match "
                                  f"(N, {', '.join(map(str, self.spec.input_shape))})")
        saved: dict[str, Tensor] = {}
        p = self.params
        for l in self.spec.layers:
            k = l.kind
            if k == "Conv":
                x = T.conv2d(x, p[f"{l.id}.weight"], p[f"{l.id}.bias"], l.stride, l.pad)
            elif k == "ConvTranspose":
                x = T.conv2d_transpose(x, p[f"{l.id}.weight"], p[f"{l.id}.bias"], l.stride)
            elif k == "BatchNorm":
                x = T.batchnorm(x, p[f"{l.id}.gamma"], p[f"{l.id}.beta"],
                                self.buffers[f"{l.id}.running_mean"], self.buffers[f"{l.id}.running_var"],
                                self.training, BN_EPS, BN_MOMENTUM)
            elif k == "ReLU":
                x = T.relu(x)
            elif k == "Sigmoid":
                x = T.sigmoid(x)
            elif k == "MaxPool2x2":
                x, _ = T.maxpool2x2(x)
            elif k == "ConcatWith":
                x = T.concat_channels(x, saved[l.source])
            elif k == "GAP":
                x = T.global_avg_pool(x)
            elif k == "Dense":
                x = T.dense(x, p[f"{l.id}.weight"], p[f"{l.id}.bias"])
            elif k == "Softmax":
                x = T.softmax(x)
            if l.id in self._keep:
                saved[l.id] = x
        return x


def parameter_shapes(spec: ModelSpec) -> tuple[dict[str, tuple], dict[str, tuple]]:
    """Names and shapes of trainable parameters and of running buffers."""
    params: dict[str, tuple] = {}
    buffers: dict[str, tuple] = {}
    for l in spec.layers:
        if l.kind == "Conv":
            params[f"{l.id}.weight"] = (l.out_channels, l.in_channels, l.kernel, l.kernel)
            params[f"{l.id}.bias"] = (l.out_channels,)
        elif l.kind == "ConvTranspose":
            params[f"{l.id}.weight"] = (l.in_channels, l.out_channels, l.kernel, l.kernel)
            params[f"{l.id}.bias"] = (l.out_channels,)
        elif l.kind == "Dense":
            params[f"{l.id}.weight"] = (l.out_channels, l.in_channels)
            params[f"{l.id}.bias"] = (l.out_channels,)
        elif l.kind == "BatchNorm":
            params[f"{l.id}.gamma"] = (l.in_channels,)
            params[f"{l.id}.beta"] = (l.in_channels,)
            buffers[f"{l.id}.running_mean"] = (l.in_channels,)
            buffers[f"{l.id}.running_var"] = (l.in_channels,)
    return params, buffers


def build_model(spec: ModelSpec, seed: int) -> Model:
    """Instantiate ``spec`` with He-uniform weights drawn from ``seed``.

    Biases and BN beta start at zero, gamma at one, running stats at (0, 1).
    """
    infer_shapes(spec)
    rng = np.random.default_rng(seed)
    pshapes, bshapes = parameter_shapes(spec)
    params: dict[str, Tensor] = {}
    for name, shape in pshapes.items():
        layer_id, what = name.rsplit(".", 1)
        l = spec.layer(layer_id)
        if what == "weight":
            if l.kind == "Conv":
                fan_in = l.in_channels * l.kernel ** 2
            elif l.kind == "ConvTranspose":
                # each output pixel sees Cin * (k/stride)^2 inputs
                fan_in = l.in_channels * max(1, (l.kernel // l.stride) ** 2)
            else:
                fan_in = l.in_channels
            bound = np.sqrt(6.0 / fan_in)
            data = rng.uniform(-bound, bound, size=shape)
        elif what == "gamma":
            data = np.ones(shape)
        else:
            data = np.zeros(shape)
        params[name] = Tensor(data.astype(DTYPE), requires_grad=True, name=name)
    buffers = {name: (np.zeros(s, DTYPE) if name.endswith("mean") else np.ones(s, DTYPE))
               for name, s in bshapes.items()}
    return Model(spec, params, buffers)
