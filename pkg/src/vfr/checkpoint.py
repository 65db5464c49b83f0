"""Binary checkpoint format.

Layout, all integers little-endian::

    b"VFRC" | u32 version | u32 blob_len | blob | u32 n_tensors |
    n_tensors * ( u32 name_len | name | u8 dtype (0 = f32) | u8 rank |
                  u32 extents[rank] | u32 crc32(payload) | payload )

``blob`` is canonical JSON holding the model spec, a ``meta`` object
(seed, config hash, class names, optimizer step, ...) and the CRC32 of the
canonical encoding of those two, so every byte of the file is covered by
some check.
"""

from __future__ import annotations

import math
import json
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .arch import Model, ModelSpec, parameter_shapes
from .tensor import DTYPE, Tensor

MAGIC = b"VFRC"
VERSION = 1
DTYPE_F32 = 0
MAX_RANK = 8
OPTIM_PREFIX = "adam."


class CheckpointError(Exception):
    pass


class BadMagicError(CheckpointError):
    pass


class VersionMismatchError(CheckpointError):
    pass


class TruncatedError(CheckpointError):
    pass


class ChecksumError(CheckpointError):
    pass


class TableError(CheckpointError):
    """Tensor table disagrees with the spec (missing, extra, or misshapen)."""


class ShapeMismatchError(CheckpointError):
    pass


class BlobError(CheckpointError):
    """Spec/meta blob is not the canonical encoding it claims to be."""


@dataclass
class Checkpoint:
    spec: ModelSpec
    tensors: dict[str, np.ndarray]
    meta: dict = field(default_factory=dict)


def _canonical(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def _encode_blob(spec: ModelSpec, meta: dict) -> bytes:
    body = {"spec": spec.to_dict(), "meta": meta}
    return _canonical({**body, "crc32": zlib.crc32(_canonical(body))})


def _decode_blob(raw: bytes) -> tuple[ModelSpec, dict]:
    try:
        blob = json.loads(raw.decode("utf-8"))
        body = {"spec": blob["spec"], "meta": blob["meta"]}
        crc = blob["crc32"]
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise BlobError(f"unreadable spec blob ({exc.__class__.__name__})") from None
    if zlib.crc32(_canonical(body)) != crc or _canonical({**body, "crc32": crc}) != raw:
        raise BlobError("spec blob checksum mismatch")
    try:
        spec = ModelSpec.from_dict(body["spec"])
    except (KeyError, TypeError, ValueError) as exc:
        raise BlobError(f"malformed spec ({exc})") from None
    return spec, body["meta"]


def encode(ckpt: Checkpoint) -> bytes:
    blob = _encode_blob(ckpt.spec, ckpt.meta)
    out = [MAGIC, struct.pack("<II", VERSION, len(blob)), blob, struct.pack("<I", len(ckpt.tensors))]
    for name, arr in ckpt.tensors.items():
        a = np.ascontiguousarray(arr, dtype="<f4")
        nb = name.encode("utf-8")
        payload = a.tobytes()
        out.append(struct.pack("<I", len(nb)))
        out.append(nb)
        out.append(struct.pack("<BB", DTYPE_F32, a.ndim))
        out.append(struct.pack(f"<{a.ndim}I", *a.shape))
        out.append(struct.pack("<I", zlib.crc32(payload)))
        out.append(payload)
    return b"".join(out)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise TruncatedError(f"file ends inside {what} (need {n} bytes at offset {self.pos})")
        b = self.buf[self.pos:self.pos + n]
        self.pos += n
        return b

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]


def decode(buf: bytes) -> Checkpoint:
    r = _Reader(buf)
    if r.take(4, "magic") != MAGIC:
        raise BadMagicError("not a VFRC checkpoint")
    version = r.u32("version")
    if version != VERSION:
        raise VersionMismatchError(f"checkpoint version {version}, reader supports {VERSION}")
    spec, meta = _decode_blob(r.take(r.u32("spec length"), "spec blob"))
    tensors: dict[str, np.ndarray] = {}
    for _ in range(r.u32("tensor count")):
        try:
            name = r.take(r.u32("name length"), "tensor name").decode("utf-8")
        except UnicodeDecodeError:
            raise TableError("tensor name is not valid UTF-8") from None
        if name in tensors:
            raise TableError(f"{name}: duplicate tensor")
        dtype, rank = struct.unpack("<BB", r.take(2, f"{name} header"))
        if dtype != DTYPE_F32:
            raise TableError(f"{name}: unsupported dtype tag {dtype}")
        if rank > MAX_RANK:
            raise TableError(f"{name}: rank {rank} exceeds {MAX_RANK}")
        shape = struct.unpack(f"<{rank}I", r.take(4 * rank, f"{name} extents"))
        crc = r.u32(f"{name} checksum")
        payload = r.take(4 * math.prod(shape), f"{name} payload")  # python ints: no overflow
        if zlib.crc32(payload) != crc:
            raise ChecksumError(f"{name}: payload checksum mismatch")
        try:
            tensors[name] = np.frombuffer(payload, dtype="<f4").reshape(shape).astype(DTYPE)
        except ValueError:
            raise TableError(f"{name}: extents {shape} do not fit an array") from None
    if r.pos != len(buf):
        raise TableError(f"{len(buf) - r.pos} trailing bytes after tensor table")
    return Checkpoint(spec, tensors, meta)


def save(model: Model, path, meta: dict | None = None, optimizer=None) -> None:
    tensors = dict(model.state())
    meta = dict(meta or {})
    if optimizer is not None:
        for name, st in optimizer.state.items():
            tensors[f"{OPTIM_PREFIX}m.{name}"] = st.m
            tensors[f"{OPTIM_PREFIX}v.{name}"] = st.v
        meta["optimizer"] = {"t": optimizer.t, "lr": optimizer.lr}
    Path(path).write_bytes(encode(Checkpoint(model.spec, tensors, meta)))


def load_checkpoint(path) -> Checkpoint:
    return decode(Path(path).read_bytes())


def model_from_checkpoint(ckpt: Checkpoint, expected_input_shape=None) -> Model:
    spec = ckpt.spec
    if expected_input_shape is not None and tuple(expected_input_shape) != spec.input_shape:
        raise ShapeMismatchError(f"checkpoint model expects input {spec.input_shape}, "
                                 f"caller needs {tuple(expected_input_shape)}")
    pshapes, bshapes = parameter_shapes(spec)
    model_names = set(pshapes) | set(bshapes)
    stored = {n for n in ckpt.tensors if not n.startswith(OPTIM_PREFIX)}
    for n in set(ckpt.tensors) - stored:
        # optimizer moments must shadow a real parameter exactly
        parts = n[len(OPTIM_PREFIX):].split(".", 1)
        if len(parts) != 2 or parts[0] not in ("m", "v") or parts[1] not in pshapes \
                or ckpt.tensors[n].shape != tuple(pshapes[parts[1]]):
            raise TableError(f"optimizer tensor {n!r} does not match any parameter")
    if stored != model_names:
        missing = sorted(model_names - stored)
        extra = sorted(stored - model_names)
        raise TableError(f"tensor table does not match spec: missing={missing[:5]} extra={extra[:5]}")
    for name, shape in {**pshapes, **bshapes}.items():
        if ckpt.tensors[name].shape != tuple(shape):
            raise TableError(f"{name}: stored shape {ckpt.tensors[name].shape} != spec shape {tuple(shape)}")
    params = {n: Tensor(ckpt.tensors[n].copy(), requires_grad=True, name=n) for n in pshapes}
    buffers = {n: ckpt.tensors[n].copy() for n in bshapes}
    return Model(spec, params, buffers)


def load(path, expected_input_shape=None) -> Model:
    return model_from_checkpoint(load_checkpoint(path), expected_input_shape)


checkpoint_save = save
checkpoint_load = load
