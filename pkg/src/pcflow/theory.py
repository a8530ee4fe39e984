"""Closed-form equilibrium energy of deep linear PC networks.

For identity activations and no biases, the energy minimized over the hidden
activities is a rescaled MSE::

    F* = 1/(2N) sum_i r_i^T S^{-1} r_i,   r_i = y_i - W_{L:1} x_i
    S  = I + sum_{l=2}^{L} W_{L:l} W_{L:l}^T

with ``W_{k:l} = W_k ... W_l``.
"""

from __future__ import annotations

from functools import reduce

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .energy import pc_energy
from .errors import NotLinearNetworkError, ShapeError
from .inference import SolverConfig, solve_inference
from .netcore import Network, init_activities_with_ffwd


def _require_linear(network: Network, *, biases: bool = False) -> None:
    if not network.is_linear():
        raise NotLinearNetworkError("closed form needs identity activations on every layer")
    if biases and network.has_biases():
        raise NotLinearNetworkError("closed form is stated for bias-free networks")


def weight_chain(network: Network, k: int, l: int) -> np.ndarray:
    """``W_k W_{k-1} ... W_l`` with 1-based layer indices, ``1 <= l <= k <= L``."""
    _require_linear(network)
    if not 1 <= l <= k <= network.depth:
        raise IndexError(f"need 1 <= l <= k <= {network.depth}, got k={k}, l={l}")
    ws = [network.layers[i - 1].weight for i in range(k, l - 1, -1)]
    return reduce(np.matmul, ws)


def rescaling_matrix(network: Network) -> np.ndarray:
    _require_linear(network)
    L = network.depth
    S = np.eye(network.output_dim, dtype=network.dtype)
    # W_{L:l} for l = L, L-1, ..., 2, built by right-multiplying
    chain = None
    for l in range(L, 1, -1):
        w = network.layers[l - 1].weight
        chain = w if chain is None else chain @ w
        S = S + chain @ chain.T
    return S


def linear_equilibrium_energy(network: Network, x: np.ndarray, y: np.ndarray) -> float:
    _require_linear(network, biases=True)
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape[0] != y.shape[0]:
        raise ShapeError("x and y need the same number of rows")
    net = network.astype(np.float64)
    r = y - x @ weight_chain(net, net.depth, 1).T
    S = rescaling_matrix(net)
    try:
        factor = cho_factor(S, lower=True)
    except LinAlgError as exc:  # S >= I, so this means corrupted weights
        raise AssertionError("rescaling matrix is not positive definite") from exc
    sol = cho_solve(factor, r.T)
    return float(np.sum(r.T * sol)) / (2.0 * x.shape[0])


def energy_gap(network: Network, x: np.ndarray, y: np.ndarray, solver: SolverConfig) -> tuple[float, float, float]:
    """(theoretical, numerical, numerical - theoretical) after running inference."""
    theoretical = linear_equilibrium_energy(network, x, y)
    state = init_activities_with_ffwd(network, x).with_output(y)
    eq, _ = solve_inference(network, state, solver)
    numerical = pc_energy(network, eq).total
    return theoretical, numerical, numerical - theoretical
