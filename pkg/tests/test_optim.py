import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vfr.optim import Adam, NonFiniteGradientError, ParamState, adam_step
from vfr.tensor import Tape, Tensor, mul, sum_all


def reference_adam(x0, grads, lr, b1=0.9, b2=0.999, eps=1e-8):
    x, m, v = x0.astype(np.float64), 0.0, 0.0
    for t, g in enumerate(grads, 1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        x = x - lr * (m / (1 - b1 ** t)) / (np.sqrt(v / (1 - b2 ** t)) + eps)
    return x


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 8))
def test_matches_reference(seed, steps):
    rng = np.random.default_rng(seed)
    x0 = rng.normal(size=5).astype(np.float32)
    grads = [rng.normal(size=5).astype(np.float32) for _ in range(steps)]
    p = Tensor(x0.copy(), requires_grad=True)
    opt = Adam({"p": p}, lr=1e-3)
    for g in grads:
        opt.step({"p": g})
    np.testing.assert_allclose(p.data, reference_adam(x0, grads, 1e-3), rtol=1e-5, atol=1e-6)
    assert opt.t == steps


def test_first_step_is_lr_times_sign():
    p = Tensor(np.zeros(3), requires_grad=True)
    Adam({"p": p}, lr=0.1).step({"p": np.array([2.0, -0.5, 1e-3], np.float32)})
    np.testing.assert_allclose(p.data, [-0.1, 0.1, -0.1], rtol=1e-4)


def test_minimises_quadratic_through_tape():
    w = Tensor(np.array([3.0, -2.0]), requires_grad=True)
    opt = Adam({"w": w}, lr=0.1)
    for _ in range(300):
        opt.zero_grad()
        with Tape() as tape:
            loss = sum_all(mul(w, w))
        tape.backward(loss)
        opt.step()
    assert np.abs(w.data).max() < 1e-2


def test_non_finite_gradient_rejected_without_update():
    a, b = Tensor(np.ones(2), requires_grad=True), Tensor(np.ones(2), requires_grad=True)
    opt = Adam({"a": a, "b": b}, lr=0.1)
    with pytest.raises(NonFiniteGradientError) as err:
        opt.step({"a": np.array([1.0, 1.0]), "b": np.array([np.nan, 0.0])})
    assert err.value.names == ["b"]
    assert np.all(a.data == 1) and np.all(b.data == 1) and opt.t == 0


def test_functional_form_equals_class():
    rng = np.random.default_rng(4)
    g = rng.normal(size=4).astype(np.float32)
    p1, p2 = Tensor(np.ones(4), requires_grad=True), Tensor(np.ones(4), requires_grad=True)
    Adam({"p": p1}, lr=0.01).step({"p": g})
    adam_step({"p": ParamState.for_tensor(p2)}, {"p": g}, lr=0.01)
    assert np.array_equal(p1.data, p2.data)


def test_rejects_bad_lr_and_shape():
    with pytest.raises(ValueError):
        Adam({"p": Tensor(np.ones(1))}, lr=0)
    opt = Adam({"p": Tensor(np.ones(2), requires_grad=True)}, lr=0.1)
    with pytest.raises(ValueError):
        opt.step({"p": np.ones(3)})
