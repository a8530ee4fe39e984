import numpy as np
import pytest

from pcflow.energy import pc_energy
from pcflow.errors import ShapeError
from pcflow.inference import SolverConfig, solve_inference
from pcflow.netcore import Activation, Layer, Network, init_activities_with_ffwd, init_network
from pcflow.optim import init_optim
from pcflow.trainer import (
    amortised_init,
    make_hpc_step,
    make_pc_step,
    test_discriminative_pc,
    test_generative_pc,
    update_params,
)

from conftest import scalar_chain

EULER_ONE_STEP = SolverConfig("euler", dt0=0.1, t_max=0.1)


def test_single_layer_step_by_hand():
    # nothing free: E = (3 - 1)^2 / 2, dW = -2, SGD lr 0.5 gives w = 2
    net = scalar_chain(1.0)
    res = make_pc_step(net, init_optim(net, "sgd", 0.5), np.array([[3.0]]), np.array([[1.0]]), EULER_ONE_STEP)
    assert res.energies.total == 2.0
    assert res.network.layers[0].weight[0, 0] == 2.0
    assert res.solve_stats.rhs_evaluations == 0  # no free layer, nothing to integrate


def test_two_layer_scalar_step_by_hand():
    net = scalar_chain(1.0, 2.0)
    res = make_pc_step(net, init_optim(net, "sgd", 0.1), np.array([[5.0]]), np.array([[1.0]]), EULER_ONE_STEP)
    # dF/dz1 at ffwd init = 0 - 2 (5 - 2) = -6, so z1 = 1.6 after one step
    assert res.activities.activities[1][0, 0] == pytest.approx(1.6, abs=1e-14)
    assert res.energies.total == pytest.approx(0.5 * 0.6**2 + 0.5 * 1.8**2, abs=1e-14)
    w1, w2 = (l.weight[0, 0] for l in res.network.layers)
    assert w1 == pytest.approx(1.0 + 0.1 * 0.6, abs=1e-14)
    assert w2 == pytest.approx(2.0 + 0.1 * 1.8 * 1.6, abs=1e-14)


def test_make_pc_step_is_the_composition():
    net = init_network([5, 8, 8, 3], "tanh", seed=3)
    rng = np.random.default_rng(0)
    x, y = rng.normal(size=(6, 5)), rng.normal(size=(6, 3))
    solver = SolverConfig("heun", dt0=0.5, t_max=10.0)
    opt = init_optim(net, "adam")
    res = make_pc_step(net, opt, y, x, solver)

    state = init_activities_with_ffwd(net, x).with_output(y)
    eq, stats = solve_inference(net, state, solver)
    new_net, new_opt = update_params(net, eq, opt, y, x)
    for a, b in zip(res.network.layers, new_net.layers):
        np.testing.assert_array_equal(a.weight, b.weight)
        np.testing.assert_array_equal(a.bias, b.bias)
    assert res.energies.total == pc_energy(net, eq).total
    assert res.solve_stats.rhs_evaluations == stats.rhs_evaluations
    assert new_opt.step_count == res.optim_state.step_count == 1


def test_training_lowers_energy_on_a_fixed_batch():
    net = init_network([4, 16, 2], ["tanh", "identity"], seed=0)
    rng = np.random.default_rng(1)
    x = rng.normal(size=(32, 4))
    y = np.stack([np.sin(x[:, 0]), x[:, 1] * x[:, 2]], axis=1)
    opt = init_optim(net, "adam", lr=1e-2)
    energies = []
    for _ in range(30):
        res = make_pc_step(net, opt, y, x, SolverConfig("euler", dt0=0.2, t_max=4.0))
        net, opt = res.network, res.optim_state
        energies.append(res.energies.total)
    assert energies[-1] < 0.7 * energies[0]


def test_shape_mismatch_rejected():
    net = init_network([3, 2], "identity")
    with pytest.raises(ShapeError):
        make_pc_step(net, init_optim(net), np.zeros((4, 2)), np.zeros((5, 3)))


def test_unsupervised_step_is_seeded():
    net = init_network([3, 5, 4], "tanh", seed=0)
    y = np.random.default_rng(0).normal(size=(4, 4))
    a = make_pc_step(net, init_optim(net), y, seed=7, solver=SolverConfig(t_max=2.0))
    b = make_pc_step(net, init_optim(net), y, seed=7, solver=SolverConfig(t_max=2.0))
    np.testing.assert_array_equal(a.network.layers[0].weight, b.network.layers[0].weight)
    assert not a.activities.clamped_input and a.activities.clamped_output


def test_amortised_init_reverses_amortiser_activities():
    gen = init_network([2, 5, 4], "tanh", seed=0)
    amo = init_network([4, 5, 2], "tanh", seed=1)
    y = np.random.default_rng(0).normal(size=(3, 4))
    state = amortised_init(gen, amo, y)
    np.testing.assert_array_equal(state.activities[-1], y)
    assert [a.shape[1] for a in state.activities] == gen.dims
    with pytest.raises(ShapeError):
        amortised_init(gen, init_network([4, 6, 2], "tanh"), y)


def test_hpc_amortiser_learns_generator_equilibria():
    gen = init_network([2, 6, 4], "tanh", seed=0)
    amo = init_network([4, 6, 2], "tanh", seed=1)
    rng = np.random.default_rng(2)
    y = np.tanh(rng.normal(size=(16, 2)) @ rng.normal(size=(2, 4)))
    opts = (init_optim(gen, "adam", 1e-2), init_optim(amo, "adam", 1e-2))
    solver = SolverConfig("heun", dt0=0.5, t_max=5.0)
    amo_energy = []
    for _ in range(40):
        g, a = make_hpc_step(gen, amo, opts, y, solver=solver)
        gen, amo, opts = g.network, a.network, (g.optim_state, a.optim_state)
        amo_energy.append(a.energies.total)
    assert amo_energy[-1] < 0.5 * amo_energy[0]
    assert a.solve_stats.rhs_evaluations == 0


def test_discriminative_accuracy_and_ties():
    net = scalar_chain(1.0)  # output width 1: argmax always 0
    assert test_discriminative_pc(net, np.ones((4, 1)), np.array([0, 0, 0, 1])) == 0.75
    ident = Network((Layer(np.eye(3), None, Activation("identity")),), 3)
    x = np.array([[0.0, 1.0, 0.0], [0.5, 0.5, 0.0], [0.0, 0.0, 2.0]])
    # row 1 ties 0 and 1, argmax picks index 0
    assert test_discriminative_pc(ident, x, np.array([1, 0, 2])) == 1.0
    assert test_discriminative_pc(ident, x, np.eye(3)[[1, 0, 2]]) == 1.0


def test_generative_mse_zero_for_exact_model():
    # y = W z1 exactly reachable: inference finds it and the prediction is perfect
    net = scalar_chain(1.0, 2.0)
    mse, energy = test_generative_pc(
        net, np.array([[4.0]]), solver=SolverConfig("euler", dt0=0.1, t_max=500.0, early_stop_grad_norm=1e-12)
    )
    assert mse < 1e-10 and energy.total < 1e-10
