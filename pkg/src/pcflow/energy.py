"""PC energy and its hand-derived gradients.

Convention: every quantity carries the factor ``1/(2N)``::

    F = 1/(2N) * sum_l sum_i || z_l,i - f_l(W_l z_{l-1},i + b_l) ||^2

so the equilibrium value of a deep linear network is exactly the closed form in
:mod:`pcflow.theory`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ShapeError
from .netcore import ActivityState, Network


@dataclass(frozen=True)
class EnergyReport:
    per_layer: tuple[float, ...]
    total: float


class ParamGradient(NamedTuple):
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray | None, ...]


class _Residuals(NamedTuple):
    eps: list[np.ndarray]  # eps[l-1] is the error of layer l
    delta: list[np.ndarray]  # eps * f'(a), the signal fed back through W


def _layer_output(layer, z_prev):
    """``(f(a), f'(a))`` for one layer; ``f'`` is None for the identity."""
    a = layer.preact(z_prev)
    fa = layer.activation(a)
    return fa, None if layer.activation.kind == "identity" else layer.activation.deriv(a, fa)


def _residuals(network: Network, acts, first=None) -> _Residuals:
    """Errors and fed-back signals; ``first`` reuses a cached layer-1 output when z_0 is clamped."""
    eps, delta = [], []
    for i, (layer, z_prev, z) in enumerate(zip(network.layers, acts[:-1], acts[1:])):
        fa, df = first if (i == 0 and first is not None) else _layer_output(layer, z_prev)
        e = z - fa
        eps.append(e)
        delta.append(e if df is None else e * df)
    return _Residuals(eps, delta)


def _check(network: Network, state: ActivityState) -> None:
    state.check_against(network)
    if state.batch_size < 1:
        raise ShapeError("batch must be non-empty")


def pc_energy(network: Network, state: ActivityState) -> EnergyReport:
    _check(network, state)
    n = state.batch_size
    per_layer = []
    for layer, z_prev, z in zip(network.layers, state.activities[:-1], state.activities[1:]):
        e = z - layer.activation(layer.preact(z_prev))
        per_layer.append(float(np.vdot(e, e)) / (2.0 * n))
    return EnergyReport(tuple(per_layer), float(sum(per_layer)))


def activity_grad_from_residuals(res: _Residuals, network: Network, free: list[int], n: int) -> list[np.ndarray]:
    """dF/dz_l for each index in ``free``; shared with the solver's hot loop."""
    L = network.depth
    scale = 1.0 / n
    out = []
    for l in free:
        if l == L:
            g = res.eps[L - 1] * scale
        else:
            # build the result in the matmul's own buffer
            g = res.delta[l] @ network.layers[l].weight
            if l == 0:
                g *= -scale
            else:
                np.subtract(res.eps[l - 1], g, out=g)
                g *= scale
        out.append(g)
    return out


def activity_grad(network: Network, state: ActivityState) -> list[np.ndarray]:
    """Gradient of :func:`pc_energy` w.r.t. every activity; clamped layers get exact zeros."""
    _check(network, state)
    res = _residuals(network, state.activities)
    free = state.free_indices()
    grads = [np.zeros_like(z) for z in state.activities]
    for l, g in zip(free, activity_grad_from_residuals(res, network, free, state.batch_size)):
        grads[l] = g
    return grads


def param_grad(network: Network, state: ActivityState) -> ParamGradient:
    _check(network, state)
    n = state.batch_size
    res = _residuals(network, state.activities)
    dws, dbs = [], []
    for layer, d, z_prev in zip(network.layers, res.delta, state.activities[:-1]):
        dws.append(-(d.T @ z_prev) / n)
        dbs.append(None if layer.bias is None else -d.sum(axis=0) / n)
    return ParamGradient(tuple(dws), tuple(dbs))


def _check_mirrored(generator: Network, amortiser: Network) -> None:
    if amortiser.dims != generator.dims[::-1]:
        raise ShapeError(
            f"amortiser widths {amortiser.dims} must mirror generator widths reversed {generator.dims[::-1]}"
        )


def amortiser_state(generator_state: ActivityState) -> ActivityState:
    """The amortiser's targets: generator activities in reverse order, all clamped.

    Amortiser layer ``k`` predicts generator activity ``z_{L-k}`` from its own
    input, which is generator activity ``z_{L-k+1}``.
    """
    return ActivityState(tuple(generator_state.activities[::-1]), clamped_input=True, clamped_output=True)


def hpc_energy(
    generator: Network,
    amortiser: Network,
    gen_state: ActivityState,
    y: np.ndarray | None = None,
    x: np.ndarray | None = None,
) -> tuple[EnergyReport, EnergyReport]:
    """Generator and amortiser energies for a hybrid PC pair.

    ``y`` / ``x``, when given, are clamped into ``gen_state`` before evaluation.
    """
    _check_mirrored(generator, amortiser)
    if y is not None:
        gen_state = gen_state.with_output(y)
    if x is not None:
        gen_state = gen_state.with_input(x)
    return pc_energy(generator, gen_state), pc_energy(amortiser, amortiser_state(gen_state))
