"""One-call PC / hybrid-PC training steps and the convenience testers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .energy import EnergyReport, amortiser_state, param_grad, pc_energy, _check_mirrored
from .errors import ShapeError
from .inference import SolverConfig, SolveStats, solve_inference
from .netcore import (
    ActivityState,
    Network,
    forward,
    init_activities_random,
    init_activities_with_ffwd,
)
from .optim import OptimState, apply_update


@dataclass
class StepResult:
    network: Network
    optim_state: OptimState
    energies: EnergyReport
    solve_stats: SolveStats
    activities: ActivityState


def update_params(
    network: Network,
    equilibrated: ActivityState,
    optim_state: OptimState,
    y: np.ndarray | None = None,
    x: np.ndarray | None = None,
) -> tuple[Network, OptimState]:
    """Parameter update at the supplied (equilibrated) activities."""
    state = equilibrated
    if y is not None:
        state = state.with_output(y)
    if x is not None:
        state = state.with_input(x)
    return apply_update(network, param_grad(network, state), optim_state)


def _initial_state(network: Network, y, x, seed: int, init_scale: float) -> ActivityState:
    y = np.asarray(y, dtype=network.dtype)
    if x is not None:
        x = np.asarray(x, dtype=network.dtype)
        if x.shape[0] != y.shape[0]:
            raise ShapeError(f"x has {x.shape[0]} rows but y has {y.shape[0]}")
        return init_activities_with_ffwd(network, x).with_output(y)
    return init_activities_random(network, y.shape[0], seed, init_scale, y=y)


def _step_from_state(network, optim_state, state, solver, record_energies, record_activities) -> StepResult:
    eq, stats = solve_inference(
        network, state, solver, record_energies=record_energies, record_activities=record_activities
    )
    energies = pc_energy(network, eq)
    net, opt = apply_update(network, param_grad(network, eq), optim_state)
    return StepResult(net, opt, energies, stats, eq)


def make_pc_step(
    network: Network,
    optim_state: OptimState,
    y: np.ndarray,
    x: np.ndarray | None = None,
    solver: SolverConfig = SolverConfig(),
    *,
    record_energies: bool = False,
    record_activities: bool = False,
    seed: int = 0,
    init_scale: float = 0.05,
    activities: ActivityState | None = None,
) -> StepResult:
    """Initialize activities, run inference to ``solver.t_max``, update parameters.

    Supervised (``x`` given): feedforward init with ``z_0 = x`` and ``z_L = y``
    clamped. Unsupervised: every layer but ``z_L`` starts Gaussian (``seed``,
    ``init_scale``) and ``z_0`` stays free. ``activities`` overrides the
    initialization entirely.
    """
    state = activities if activities is not None else _initial_state(network, y, x, seed, init_scale)
    return _step_from_state(network, optim_state, state, solver, record_energies, record_activities)


def amortised_init(generator: Network, amortiser: Network, y: np.ndarray, x: np.ndarray | None = None) -> ActivityState:
    """Generator activities predicted by one feedforward pass of the amortiser from ``y``."""
    _check_mirrored(generator, amortiser)
    pred = init_activities_with_ffwd(amortiser, np.asarray(y, dtype=amortiser.dtype)).activities
    state = ActivityState(tuple(pred[::-1]), clamped_input=False, clamped_output=True)
    if x is not None:
        state = state.with_input(x)
    return state


def make_hpc_step(
    generator: Network,
    amortiser: Network,
    optim_states: tuple[OptimState, OptimState],
    y: np.ndarray,
    x: np.ndarray | None = None,
    solver: SolverConfig = SolverConfig(),
    *,
    record_energies: bool = False,
    record_activities: bool = False,
) -> tuple[StepResult, StepResult]:
    """Hybrid PC step: amortised init, generator inference, update both models.

    The amortiser is trained locally to predict the generator's equilibrium
    activities in reverse order; its energy is reported on that target state.
    """
    gen_opt, amo_opt = optim_states
    state = amortised_init(generator, amortiser, y, x)
    gen = _step_from_state(generator, gen_opt, state, solver, record_energies, record_activities)
    target = amortiser_state(gen.activities)
    amo_energy = pc_energy(amortiser, target)
    amo_net, amo_opt = apply_update(amortiser, param_grad(amortiser, target), amo_opt)
    amo_stats = SolveStats(t_reached=0.0, final_grad_norm=0.0)
    return gen, StepResult(amo_net, amo_opt, amo_energy, amo_stats, target)


def _labels(labels) -> np.ndarray:
    labels = np.asarray(labels)
    return labels.argmax(axis=1) if labels.ndim == 2 else labels.astype(int)


def test_discriminative_pc(network: Network, x: np.ndarray, labels) -> float:
    """Feedforward accuracy; ``np.argmax`` breaks ties toward the lowest index."""
    out = forward(network, np.asarray(x, dtype=network.dtype))
    return float(np.mean(out.argmax(axis=1) == _labels(labels)))


def test_generative_pc(
    network: Network,
    y: np.ndarray,
    x: np.ndarray | None = None,
    solver: SolverConfig = SolverConfig(),
    *,
    seed: int = 0,
    init_scale: float = 0.05,
) -> tuple[float, EnergyReport]:
    """Inference with ``y`` clamped; MSE of the top-layer prediction against ``y``."""
    state = _initial_state(network, y, x, seed, init_scale)
    eq, _ = solve_inference(network, state, solver)
    top = network.layers[-1]
    pred = top.activation(top.preact(eq.activities[-2]))
    mse = float(np.mean((pred - np.asarray(y, dtype=network.dtype)) ** 2))
    return mse, pc_energy(network, eq)


# not pytest tests
test_discriminative_pc.__test__ = False
test_generative_pc.__test__ = False
