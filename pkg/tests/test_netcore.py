import numpy as np
import pytest

from pcflow.errors import InvalidDimensionError, PCFlowError, ShapeError
from pcflow.netcore import (
    Activation,
    Layer,
    Network,
    forward,
    init_activities_random,
    init_activities_with_ffwd,
    init_network,
    load_network,
    save_network,
)
from pcflow.energy import activity_grad, pc_energy

from conftest import ACTIVATIONS, scalar_chain


def test_forward_single_linear_layer():
    net = Network((Layer(np.array([[2.0]]), np.array([0.0])),), 1)
    assert forward(net, np.array([[1.0]])).tolist() == [[2.0]]


@pytest.mark.parametrize("act", ["identity", "tanh"])
def test_forward_zero_in_zero_out(act):
    net = init_network([5, 7, 3], act, seed=3)
    np.testing.assert_array_equal(forward(net, np.zeros((4, 5))), 0.0)


def test_forward_matches_hand_composition():
    rng = np.random.default_rng(0)
    net = init_network([3, 4, 2], "tanh", seed=1)
    l1, l2 = net.layers
    l1 = Layer(l1.weight, rng.normal(size=4), l1.activation)
    net = Network((l1, l2), 3)
    x = rng.normal(size=(5, 3))
    h = np.tanh(np.einsum("ij,nj->ni", l1.weight, x) + l1.bias)
    expected = np.tanh(np.einsum("ij,nj->ni", l2.weight, h) + l2.bias)
    np.testing.assert_allclose(forward(net, x), expected, rtol=1e-14)


def test_forward_shape_error_names_layer():
    net = init_network([3, 4, 2], "tanh")
    with pytest.raises(ShapeError, match="layer 1"):
        forward(net, np.zeros((2, 5)))


def test_network_rejects_broken_chain():
    a = Layer(np.zeros((4, 3)), None)
    b = Layer(np.zeros((2, 5)), None)
    with pytest.raises(ShapeError, match="layer 2"):
        Network((a, b), 3)


def test_layer_rejects_bad_bias_and_nonfinite():
    with pytest.raises(ShapeError):
        Layer(np.zeros((2, 2)), np.zeros(3))
    with pytest.raises(PCFlowError):
        Layer(np.array([[np.nan]]), None)


def test_init_network_bounds_and_shapes():
    net = init_network([2, 3], "tanh", seed=11)
    (layer,) = net.layers
    assert layer.weight.shape == (3, 2)
    assert layer.bias.shape == (3,)
    assert np.all(layer.bias == 0)
    assert np.all(np.abs(layer.weight) <= 1 / np.sqrt(2))


def test_init_network_deterministic():
    a = init_network([6, 5, 4], "tanh", seed=42)
    b = init_network([6, 5, 4], "tanh", seed=42)
    for la, lb in zip(a.layers, b.layers):
        assert la.weight.tobytes() == lb.weight.tobytes()
    c = init_network([6, 5, 4], "tanh", seed=43)
    assert not np.array_equal(a.layers[0].weight, c.layers[0].weight)


def test_init_network_experiment_shape():
    net = init_network([784, 300, 300, 300, 10], "tanh")
    assert net.depth == 4 and net.dims == [784, 300, 300, 300, 10]
    assert all(layer.activation.kind == "tanh" for layer in net.layers)


def test_init_network_rejects_zero_dim():
    with pytest.raises(InvalidDimensionError):
        init_network([3, 0, 2])
    with pytest.raises(InvalidDimensionError):
        init_network([3])


def test_ffwd_init_zero_errors_and_zero_energy():
    net = init_network([4, 6, 6, 3], "tanh", seed=0)
    x = np.random.default_rng(1).normal(size=(5, 4))
    state = init_activities_with_ffwd(net, x)
    assert state.clamped_input and not state.clamped_output
    assert pc_energy(net, state).total == 0.0
    clamped = state.with_output(forward(net, x))
    assert pc_energy(net, clamped).total == 0.0
    for g in activity_grad(net, clamped):
        assert np.all(g == 0)
    np.testing.assert_array_equal(state.activities[-1], forward(net, x))


def test_ffwd_init_scalar():
    net = scalar_chain(2.0)
    state = init_activities_with_ffwd(net, np.array([[1.0]]))
    assert [z.tolist() for z in state.activities] == [[[1.0]], [[2.0]]]


def test_random_init():
    net = init_network([3, 4, 2], "tanh")
    with pytest.raises(ValueError):
        init_activities_random(net, 2, seed=0, scale=0.0)
    a = init_activities_random(net, 2, seed=5)
    b = init_activities_random(net, 2, seed=5)
    for za, zb in zip(a.activities, b.activities):
        assert za.tobytes() == zb.tobytes()
    assert not a.clamped_input


def test_random_init_std():
    net = Network((Layer(np.zeros((10, 10)), None),), 10)
    state = init_activities_random(net, 10_000, seed=9, scale=0.05)
    sample = np.concatenate([z.ravel() for z in state.activities])
    assert sample.size >= 100_000
    assert abs(sample.std() / 0.05 - 1) < 0.02


@pytest.mark.parametrize("act", ACTIVATIONS, ids=lambda a: a.tag)
def test_activation_derivative_matches_fd(act):
    a = np.linspace(-2, 2, 41) + 0.013  # keep off the relu kink
    h = 1e-6
    fd = (act(a + h) - act(a - h)) / (2 * h)
    np.testing.assert_allclose(act.deriv(a), fd, atol=1e-8)


def test_activation_parse_roundtrip():
    for act in ACTIVATIONS:
        assert Activation.parse(act.tag) == act
    assert Activation.parse("linear").kind == "identity"
    with pytest.raises(ValueError):
        Activation("softplus")


def test_checkpoint_roundtrip(tmp_path):
    net = init_network([5, 4, 3], [Activation("tanh"), Activation("leaky_relu", 0.2)], seed=2)
    bare = init_network([3, 2], "identity", seed=1, bias=False)
    for n in (net, bare):
        path = tmp_path / "net.pcf"
        save_network(n, path)
        back = load_network(path)
        assert back.dims == n.dims
        for la, lb in zip(n.layers, back.layers):
            np.testing.assert_array_equal(la.weight, lb.weight)
            assert (la.bias is None) == (lb.bias is None)
            assert la.activation == lb.activation


def test_checkpoint_rejects_garbage(tmp_path):
    path = tmp_path / "bad.pcf"
    path.write_bytes(b"nope")
    with pytest.raises(PCFlowError):
        load_network(path)
