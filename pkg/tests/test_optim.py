import numpy as np
import pytest
from hypothesis import given, strategies as st

from pcflow.energy import ParamGradient, param_grad
from pcflow.netcore import ActivityState, init_network
from pcflow.optim import adam_update, apply_update, init_optim, sgd_update

from conftest import scalar_chain


def zero_grads(net):
    return ParamGradient(
        tuple(np.zeros_like(l.weight) for l in net.layers),
        tuple(None if l.bias is None else np.zeros_like(l.bias) for l in net.layers),
    )


def scalar_grad(g):
    return ParamGradient((np.array([[g]]),), (None,))


def test_sgd_zero_gradient_is_identity():
    net = init_network([3, 4, 2], "tanh", seed=0)
    new = sgd_update(net, zero_grads(net), 0.1)
    for a, b in zip(net.layers, new.layers):
        np.testing.assert_array_equal(a.weight, b.weight)


def test_sgd_scalar_arithmetic():
    net = scalar_chain(1.0)
    assert sgd_update(net, scalar_grad(2.0), 0.5).layers[0].weight[0, 0] == 0.0
    assert net.layers[0].weight[0, 0] == 1.0  # input untouched


def test_sgd_drives_quadratic_gradient_to_zero():
    # learning a single linear layer on a fixed clamped state is least squares
    rng = np.random.default_rng(0)
    net = init_network([3, 2], "identity", seed=1)
    x, y = rng.normal(size=(10, 3)), rng.normal(size=(10, 2))
    state = ActivityState((x, y), True, True)
    for _ in range(3000):
        g = param_grad(net, state)
        net = sgd_update(net, g, 0.5)
    g = param_grad(net, state)
    norm = np.sqrt(sum(np.sum(w**2) for w in g.weights) + sum(np.sum(b**2) for b in g.biases))
    assert norm < 1e-6


@given(st.floats(-10, 10).filter(lambda g: abs(g) > 1e-3))
def test_adam_first_step_closed_form(g):
    net = scalar_chain(0.5)
    state = init_optim(net, "adam", lr=1e-3)
    new, st1 = adam_update(net, scalar_grad(g), state)
    b1, b2, eps = state.beta1, state.beta2, state.eps
    # m_hat = g, v_hat = g^2 after one step
    expected = 0.5 - 1e-3 * g / (abs(g) + eps)
    assert new.layers[0].weight[0, 0] == pytest.approx(expected, rel=1e-12)
    assert abs(new.layers[0].weight[0, 0] - 0.5) == pytest.approx(1e-3, rel=1e-4)
    assert st1.step_count == 1


def test_adam_zero_gradient_forever():
    net = init_network([3, 4, 2], "tanh", seed=0)
    state = init_optim(net, "adam")
    cur = net
    for _ in range(20):
        cur, state = adam_update(cur, zero_grads(cur), state)
    for a, b in zip(net.layers, cur.layers):
        np.testing.assert_array_equal(a.weight, b.weight)
        np.testing.assert_array_equal(a.bias, b.bias)
    assert state.step_count == 20


def reference_adam(w, grad_fn, steps, lr=1e-3, b1=0.9, b2=0.999, eps=1e-8):
    m = v = 0.0
    for t in range(1, steps + 1):
        g = grad_fn(w)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        w = w - lr * (m / (1 - b1**t)) / ((v / (1 - b2**t)) ** 0.5 + eps)
    return w


def test_adam_matches_reference_loop():
    # minimize (w - 3)^2 / 2 for 100 steps
    def grad(w):
        return w - 3.0

    net = scalar_chain(0.25)
    state = init_optim(net, "adam", lr=0.05)
    for _ in range(100):
        w = net.layers[0].weight[0, 0]
        net, state = adam_update(net, scalar_grad(grad(w)), state)
    assert net.layers[0].weight[0, 0] == pytest.approx(reference_adam(0.25, grad, 100, lr=0.05), abs=1e-12)


def test_adam_rejects_sgd_state_and_apply_dispatch():
    net = scalar_chain(1.0)
    sgd = init_optim(net, "sgd", lr=0.5)
    with pytest.raises(ValueError):
        adam_update(net, scalar_grad(1.0), sgd)
    new, st1 = apply_update(net, scalar_grad(2.0), sgd)
    assert new.layers[0].weight[0, 0] == 0.0 and st1.step_count == 1
    with pytest.raises(ValueError):
        init_optim(net, "rmsprop")


def test_adam_moments_stay_finite():
    net = init_network([3, 2], "identity", seed=0)
    state = init_optim(net, "adam")
    big = ParamGradient((np.full((2, 3), 1e150),), (np.full(2, -1e150),))
    net, state = adam_update(net, big, state)
    for m, v in zip(state.first_moment, state.second_moment):
        assert np.all(np.isfinite(m[0])) and np.all(np.isfinite(v[0]))
