import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vfr import tensor as T
from vfr.gradcheck import check_gradients

CASES = 20
TOL = 1e-2


def _away_from_zero(rng, shape, gap=0.1):
    x = rng.normal(size=shape)
    return np.where(np.abs(x) < gap, np.sign(x + 1e-12) * gap, x).astype(np.float32)


def _distinct(rng, shape, gap=0.05):
    """Values whose pairwise gaps exceed 2h, so max selection is stable under FD."""
    n = int(np.prod(shape))
    return (rng.permutation(n) * gap).reshape(shape).astype(np.float32) - n * gap / 2


def _cases(op_seed):
    rng = np.random.default_rng(op_seed)
    for _ in range(CASES):
        yield rng


def _assert_close(errs, what):
    assert max(errs) < TOL, f"{what}: relative errors {errs}"


# -- per-op finite-difference checks, extents <= 6 ---------------------------


def test_grad_add_mul():
    for rng in _cases(1):
        shape = tuple(rng.integers(1, 7, size=rng.integers(1, 4)))
        a, b = rng.normal(size=shape), rng.normal(size=shape)
        _assert_close(check_gradients(T.add, [a, b]), "add")
        _assert_close(check_gradients(T.mul, [a, b]), "mul")


def test_grad_reductions():
    for rng in _cases(2):
        shape = tuple(rng.integers(1, 7, size=rng.integers(1, 4)))
        x = rng.normal(size=shape)
        for fn in (T.sum_all, T.mean_all):
            _assert_close(check_gradients(lambda t: T.mul(fn(t), fn(t)), [x]), fn.__name__)


def test_grad_relu():
    for rng in _cases(3):
        shape = tuple(rng.integers(1, 7, size=3))
        _assert_close(check_gradients(T.relu, [_away_from_zero(rng, shape)]), "relu")


def test_grad_sigmoid():
    for rng in _cases(4):
        shape = tuple(rng.integers(1, 7, size=2))
        _assert_close(check_gradients(T.sigmoid, [rng.normal(size=shape) * 3]), "sigmoid")


def test_grad_softmax():
    for rng in _cases(5):
        x = rng.normal(size=(rng.integers(1, 7), rng.integers(2, 7)))
        _assert_close(check_gradients(T.softmax, [x]), "softmax")


def test_grad_conv2d():
    for rng in _cases(6):
        n, cin, cout = rng.integers(1, 4), rng.integers(1, 4), rng.integers(1, 4)
        k = int(rng.choice([1, 2, 3]))
        stride, pad = int(rng.integers(1, 3)), int(rng.integers(0, 2))
        h, w = rng.integers(k, 7), rng.integers(k, 7)
        x = rng.normal(size=(n, cin, h, w))
        wt = rng.normal(size=(cout, cin, k, k))
        b = rng.normal(size=cout)
        errs = check_gradients(lambda a, c, d: T.conv2d(a, c, d, stride, pad), [x, wt, b])
        _assert_close(errs, f"conv2d k={k} s={stride} p={pad}")


def test_grad_conv2d_transpose():
    for rng in _cases(7):
        n, cin, cout = rng.integers(1, 4), rng.integers(1, 4), rng.integers(1, 4)
        k = int(rng.choice([2, 3]))
        h, w = rng.integers(1, 4), rng.integers(1, 4)
        x = rng.normal(size=(n, cin, h, w))
        wt = rng.normal(size=(cin, cout, k, k))
        b = rng.normal(size=cout)
        _assert_close(check_gradients(lambda a, c, d: T.conv2d_transpose(a, c, d, 2), [x, wt, b]),
                      f"conv2d_transpose k={k}")


def test_grad_maxpool():
    for rng in _cases(8):
        shape = (rng.integers(1, 4), rng.integers(1, 4), 2 * rng.integers(1, 4), 2 * rng.integers(1, 4))
        _assert_close(check_gradients(lambda t: T.maxpool2x2(t)[0], [_distinct(rng, shape)]), "maxpool")


@pytest.mark.parametrize("training", [True, False])
def test_grad_batchnorm(training):
    for rng in _cases(9 + training):
        c = int(rng.integers(1, 5))
        shape = (int(rng.integers(2, 5)), c, int(rng.integers(1, 5)), int(rng.integers(1, 5)))
        if rng.random() < 0.3:
            shape = (int(rng.integers(3, 7)), c)
        x = rng.normal(size=shape) * 2 + 1
        gamma, beta = rng.normal(size=c), rng.normal(size=c)
        rm, rv = rng.normal(size=c).astype(np.float32), rng.uniform(0.5, 2, size=c).astype(np.float32)

        def fn(a, g, b):
            return T.batchnorm(a, g, b, rm.copy(), rv.copy(), training)

        _assert_close(check_gradients(fn, [x, gamma, beta], h=1e-2), f"batchnorm train={training}")


def test_grad_gap_concat_split_dense():
    for rng in _cases(11):
        n, c1, c2 = rng.integers(1, 4), rng.integers(1, 4), rng.integers(1, 4)
        h, w = rng.integers(1, 7), rng.integers(1, 7)
        a, b = rng.normal(size=(n, c1, h, w)), rng.normal(size=(n, c2, h, w))
        _assert_close(check_gradients(T.global_avg_pool, [a]), "gap")
        _assert_close(check_gradients(T.concat_channels, [a, b]), "concat")
        ab = np.concatenate([a, b], axis=1)
        for half in (0, 1):
            _assert_close(check_gradients(lambda t: T.split_channels(t, int(c1))[half], [ab]), "split")
        cin, cout = rng.integers(1, 7), rng.integers(1, 7)
        x, wt, bias = rng.normal(size=(n, cin)), rng.normal(size=(cout, cin)), rng.normal(size=cout)
        _assert_close(check_gradients(T.dense, [x, wt, bias]), "dense")


def test_grad_losses():
    for rng in _cases(12):
        shape = tuple(rng.integers(1, 7, size=2))
        p = rng.uniform(0.05, 0.95, size=shape)
        y = (rng.random(shape) < 0.5).astype(np.float32)
        _assert_close(check_gradients(lambda t: T.binary_cross_entropy(t, y), [p], h=1e-3), "bce")
        nb, nc = rng.integers(1, 7), rng.integers(2, 7)
        probs = rng.uniform(0.05, 1, size=(nb, nc))
        labels = rng.integers(0, nc, size=nb)
        _assert_close(check_gradients(lambda t: T.categorical_cross_entropy(t, labels), [probs], h=1e-3),
                      "cce")


def test_grad_composite_chain():
    # softmax -> cce through dense: the classifier head end to end. Inputs are
    # scaled so no true-class probability falls inside the 1e-7 clamp, where
    # finite differences are flat by construction.
    for rng in _cases(13):
        nb, cin, nc = rng.integers(2, 6), rng.integers(1, 6), rng.integers(2, 6)
        x, wt, b = rng.normal(size=(nb, cin)) / 2, rng.normal(size=(nc, cin)) / 2, rng.normal(size=nc)
        labels = rng.integers(0, nc, size=nb)
        fn = lambda a, c, d: T.categorical_cross_entropy(T.softmax(T.dense(a, c, d)), labels)
        _assert_close(check_gradients(fn, [x, wt, b]), "dense-softmax-cce")


# -- forward semantics -------------------------------------------------------


def test_conv2d_matches_direct_loop():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(2, 3, 6, 5)).astype(np.float32)
    w = rng.normal(size=(4, 3, 3, 3)).astype(np.float32)
    b = rng.normal(size=4).astype(np.float32)
    out = T.conv2d(T.Tensor(x), T.Tensor(w), T.Tensor(b), stride=2, pad=1).data
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1))).astype(np.float64)
    ref = np.zeros(out.shape)
    for n in range(2):
        for o in range(4):
            for i in range(out.shape[2]):
                for j in range(out.shape[3]):
                    ref[n, o, i, j] = (xp[n, :, 2 * i:2 * i + 3, 2 * j:2 * j + 3] * w[o]).sum() + b[o]
    np.testing.assert_allclose(out, ref, rtol=1e-5, atol=1e-5)


def test_conv2d_transpose_is_adjoint_of_conv():
    # <conv_t(x), y> == <x, conv(y)> for stride 2, kernel 2, no bias
    rng = np.random.default_rng(1)
    x = rng.normal(size=(1, 3, 4, 4)).astype(np.float32)
    y = rng.normal(size=(1, 2, 8, 8)).astype(np.float32)
    w = rng.normal(size=(3, 2, 2, 2)).astype(np.float32)
    up = T.conv2d_transpose(T.Tensor(x), T.Tensor(w), T.Tensor(np.zeros(2, np.float32))).data
    down = T.conv2d(T.Tensor(y), T.Tensor(w), T.Tensor(np.zeros(3, np.float32)), stride=2).data
    assert np.isclose((up * y).sum(), (x * down).sum(), rtol=1e-4)


def test_maxpool_tie_goes_to_first():
    x = np.ones((1, 1, 2, 2), np.float32)
    out, idx = T.maxpool2x2(T.Tensor(x))
    assert out.data.item() == 1.0 and idx.item() == 0


def test_maxpool_rejects_odd():
    with pytest.raises(T.ContractError):
        T.maxpool2x2(T.Tensor(np.zeros((1, 1, 3, 4), np.float32)))


def test_batchnorm_running_stats_and_degenerate():
    x = np.arange(8, dtype=np.float32).reshape(4, 2)
    rm, rv = np.zeros(2, np.float32), np.ones(2, np.float32)
    T.batchnorm(T.Tensor(x), T.Tensor(np.ones(2)), T.Tensor(np.zeros(2)), rm, rv, True, momentum=0.1)
    np.testing.assert_allclose(rm, 0.1 * x.mean(0), rtol=1e-6)
    np.testing.assert_allclose(rv, 0.9 + 0.1 * x.var(0, ddof=1), rtol=1e-6)
    with pytest.raises(T.DegenerateStatisticsError):
        T.batchnorm(T.Tensor(x[:1]), T.Tensor(np.ones(2)), T.Tensor(np.zeros(2)), rm, rv, True)


def test_tape_consumed_once_and_scalar_only():
    w = T.Tensor(np.ones(3), requires_grad=True)
    with T.Tape() as tape:
        y = T.sum_all(T.mul(w, w))
    tape.backward(y)
    np.testing.assert_array_equal(w.grad, 2 * np.ones(3))
    with pytest.raises(T.ContractError):
        tape.backward(y)
    with T.Tape() as tape2:
        z = T.mul(w, w)
    with pytest.raises(T.ContractError):
        tape2.backward(z)


def test_no_recording_without_tape():
    w = T.Tensor(np.ones(3), requires_grad=True)
    out = T.relu(w)
    assert not out.requires_grad


def test_shape_errors_name_the_op():
    with pytest.raises(T.ContractError, match="conv2d"):
        T.conv2d(T.Tensor(np.zeros((1, 2, 4, 4))), T.Tensor(np.zeros((3, 1, 3, 3))), T.Tensor(np.zeros(3)))
    with pytest.raises(T.ContractError, match="dense"):
        T.dense(T.Tensor(np.zeros((2, 3))), T.Tensor(np.zeros((4, 5))), T.Tensor(np.zeros(4)))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-30, 30), min_size=2, max_size=8))
def test_softmax_rows_are_distributions(row):
    p = T.softmax(T.Tensor(np.array([row]))).data
    assert np.all(p >= 0) and abs(p.sum() - 1) < 1e-5


@settings(max_examples=50, deadline=None)
@given(st.floats(-80, 80))
def test_sigmoid_stable_and_bounded(v):
    s = T.sigmoid(T.Tensor(np.array([v]))).data[0]
    assert np.isfinite(s) and 0.0 <= s <= 1.0


def test_bce_clamp_is_finite():
    loss = T.binary_cross_entropy(T.Tensor(np.zeros(4)), np.ones(4))
    assert np.isclose(loss.item(), -np.log(1e-7), rtol=1e-5)
