import struct

import numpy as np
import pytest

from vfr import checkpoint as C
from vfr.arch import LayerSpec, ModelSpec, build_model
from vfr.models import DESK, classifier_spec, unet_spec
from vfr.optim import Adam
from vfr.tensor import Tape


def tiny_spec():
    return ModelSpec("tiny", (1, 4, 4), (
        LayerSpec("c", "Conv", 1, 2, kernel=3, pad=1),
        LayerSpec("bn", "BatchNorm", 2, 2),
        LayerSpec("gap", "GAP"),
        LayerSpec("fc", "Dense", 2, 3),
        LayerSpec("sm", "Softmax"),
    ), "classes")


def trained_tiny(tmp_path):
    model = build_model(tiny_spec(), 1).train()
    opt = Adam(model.params, lr=1e-2)
    x = np.random.default_rng(0).normal(size=(4, 1, 4, 4)).astype(np.float32)
    from vfr.tensor import categorical_cross_entropy
    with Tape() as tape:
        loss = categorical_cross_entropy(model(x), np.array([0, 1, 2, 0]))
    tape.backward(loss)
    opt.step()
    path = tmp_path / "tiny.ckpt"
    C.save(model, path, {"seed": 1, "class_names": ["a", "b", "c"]}, opt)
    return model.eval(), path


def test_round_trip_bit_exact(tmp_path):
    model = build_model(unet_spec(DESK), 5)
    path = tmp_path / "m.ckpt"
    C.save(model, path, {"seed": 5})
    back = C.load(path)
    assert back.spec == model.spec
    for name, arr in model.state().items():
        assert back.state()[name].tobytes() == arr.tobytes()
    rng = np.random.default_rng(0)
    for _ in range(3):
        x = rng.random((2, 3, 64, 64), dtype=np.float32)
        assert np.array_equal(model.eval()(x).data, back.eval()(x).data)


def test_meta_and_optimizer_state_survive(tmp_path):
    model, path = trained_tiny(tmp_path)
    ck = C.load_checkpoint(path)
    assert ck.meta["class_names"] == ["a", "b", "c"] and ck.meta["optimizer"]["t"] == 1
    assert "adam.m.fc.weight" in ck.tensors and "adam.v.c.bias" in ck.tensors


def test_header_layout(tmp_path):
    _, path = trained_tiny(tmp_path)
    buf = path.read_bytes()
    assert buf[:4] == b"VFRC"
    version, blob_len = struct.unpack("<II", buf[4:12])
    assert version == C.VERSION
    (count,) = struct.unpack("<I", buf[12 + blob_len:16 + blob_len])
    assert count == len(C.load_checkpoint(path).tensors)


def test_distinct_errors(tmp_path):
    _, path = trained_tiny(tmp_path)
    buf = bytearray(path.read_bytes())
    with pytest.raises(C.BadMagicError):
        C.decode(b"XXXX" + bytes(buf[4:]))
    bad = bytearray(buf)
    bad[4:8] = struct.pack("<I", 99)
    with pytest.raises(C.VersionMismatchError):
        C.decode(bytes(bad))
    with pytest.raises(C.TruncatedError):
        C.decode(bytes(buf[:-3]))
    with pytest.raises(C.TableError):
        C.decode(bytes(buf) + b"\0")
    bad = bytearray(buf)
    bad[-1] ^= 0xFF
    with pytest.raises(C.ChecksumError):
        C.decode(bytes(bad))


def test_every_single_byte_corruption_detected(tmp_path):
    _, path = trained_tiny(tmp_path)
    buf = path.read_bytes()
    for pos in range(len(buf)):
        for flip in (0x01, 0x80):
            bad = bytearray(buf)
            bad[pos] ^= flip
            with pytest.raises(C.CheckpointError):
                C.model_from_checkpoint(C.decode(bytes(bad)))


def test_huge_extents_are_truncation(tmp_path):
    _, path = trained_tiny(tmp_path)
    buf = bytearray(path.read_bytes())
    blob_len = struct.unpack("<I", buf[8:12])[0]
    pos = 16 + blob_len
    (nlen,) = struct.unpack("<I", buf[pos:pos + 4])
    rank = buf[pos + 4 + nlen + 1]
    ext = pos + 4 + nlen + 2
    # extents whose product overflows int64
    buf[ext:ext + 4 * rank] = struct.pack(f"<{rank}I", *([0xFFFFFFF0] * rank))
    with pytest.raises(C.TruncatedError):
        C.decode(bytes(buf))


def test_bad_rank_is_table_error(tmp_path):
    _, path = trained_tiny(tmp_path)
    buf = bytearray(path.read_bytes())
    pos = 16 + struct.unpack("<I", buf[8:12])[0]
    (nlen,) = struct.unpack("<I", buf[pos:pos + 4])
    buf[pos + 4 + nlen + 1] = 40
    with pytest.raises(C.TableError):
        C.decode(bytes(buf))


def test_expected_input_shape_mismatch(tmp_path):
    model = build_model(classifier_spec(DESK, 5), 0)
    path = tmp_path / "c.ckpt"
    C.save(model, path)
    with pytest.raises(C.ShapeMismatchError):
        C.load(path, expected_input_shape=(1, 32, 32))
    assert C.load(path, expected_input_shape=(1, 64, 64)).spec.input_shape == (1, 64, 64)


def test_missing_tensor_is_table_error(tmp_path):
    model = build_model(tiny_spec(), 0)
    state = model.state()
    state.pop("fc.bias")
    buf = C.encode(C.Checkpoint(model.spec, state, {}))
    with pytest.raises(C.TableError):
        C.model_from_checkpoint(C.decode(buf))
