import os
from pathlib import Path

import numpy as np
import pytest
from hypothesis import strategies as st
from scipy.linalg import expm

from pcflow.energy import activity_grad, param_grad
from pcflow.inference import SolverConfig, solve_inference
from pcflow.netcore import Activation, ActivityState, Layer, Network, init_activities_with_ffwd, init_network

ROOT = Path(__file__).resolve().parents[1]
ACTIVATIONS = [
    Activation("identity"),
    Activation("tanh"),
    Activation("relu"),
    Activation("leaky_relu", 0.1),
]


def scalar_chain(*ws, activation=Activation("identity"), bias=False) -> Network:
    layers = [Layer(np.array([[float(w)]]), np.zeros(1) if bias else None, activation) for w in ws]
    return Network(tuple(layers), 1)


def random_state(net: Network, n: int, rng, *, clamp_in=True, clamp_out=True) -> ActivityState:
    acts = tuple(rng.normal(size=(n, d)) for d in net.dims)
    return ActivityState(acts, clamp_in, clamp_out)


def fd_grad(f, arrays, index, h=1e-6):
    """Central finite differences of scalar ``f(arrays)`` w.r.t. ``arrays[index]``.

    The arrays are copied to extended precision so the oracle's roundoff
    (``eps * |f| / h``) stays far below the tolerances it is checked at.
    """
    arrays = [None if a is None else np.array(a, dtype=np.longdouble) for a in arrays]
    a = arrays[index]
    out = np.zeros(a.shape)
    it = np.nditer(a, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = a[i]
        a[i] = old + h
        fp = f(arrays)
        a[i] = old - h
        fm = f(arrays)
        a[i] = old
        out[i] = float((fp - fm) / (2 * h))
    return out


def oracle_energy(net: Network, acts, weights=None, biases=None):
    """Energy summed layer by layer without touching pcflow.energy; precision follows the inputs."""
    n = acts[0].shape[0]
    total = 0
    for l, layer in enumerate(net.layers):
        w = layer.weight if weights is None else weights[l]
        b = layer.bias if biases is None else biases[l]
        a = acts[l] @ w.T
        if b is not None:
            a = a + b
        e = acts[l + 1] - layer.activation(a)
        total = total + (e * e).sum()
    return total / (2 * n)


def rel_err(a, b, floor=1e-8):
    """Elementwise relative error, guarded by ``floor`` where both values are near zero."""
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def quadratic_equilibrium_energy(net: Network, x, y) -> float:
    """Independent oracle for linear bias-free nets: solve grad = 0 by one dense linear solve.

    The energy is quadratic in the stacked hidden activities, so its minimizer is
    ``H^{-1} b`` with the Hessian and linear term assembled layer by layer.
    """
    L = net.depth
    n = x.shape[0]
    dims = net.dims
    hidden = dims[1:L]
    offs = np.concatenate([[0], np.cumsum(hidden)]).astype(int)
    m = int(offs[-1])
    if m == 0:
        r = y - x @ net.layers[0].weight.T
        return float(np.sum(r * r)) / (2 * n)
    Hm = np.zeros((m, m))
    B = np.zeros((n, m))
    W = [layer.weight for layer in net.layers]
    for k in range(1, L):  # hidden layer k, block index k-1
        s = slice(offs[k - 1], offs[k])
        Hm[s, s] += np.eye(dims[k]) + W[k].T @ W[k]
        if k + 1 < L:
            t = slice(offs[k], offs[k + 1])
            Hm[s, t] -= W[k].T
            Hm[t, s] -= W[k]
    B[:, slice(offs[0], offs[1])] += x @ W[0].T
    B[:, slice(offs[L - 2], offs[L - 1])] += y @ W[L - 1]
    Z = np.linalg.solve(Hm, B.T).T
    zs = [x] + [Z[:, offs[k - 1] : offs[k]] for k in range(1, L)] + [y]
    total = 0.0
    for k in range(1, L + 1):
        e = zs[k] - zs[k - 1] @ W[k - 1].T
        total += float(np.sum(e * e))
    return total / (2 * n)


@st.composite
def random_problem(draw):
    L = draw(st.integers(1, 4))
    dims = [draw(st.integers(1, 8)) for _ in range(L + 1)]
    acts = [draw(st.sampled_from(ACTIVATIONS)) for _ in range(L)]
    n = draw(st.integers(1, 4))
    seed = draw(st.integers(0, 2**32 - 1))
    clamp_in = draw(st.booleans())
    clamp_out = draw(st.booleans())
    return build_problem(dims, acts, n, seed, clamp_in, clamp_out)


def build_problem(dims, acts, n, seed, clamp_in, clamp_out):
    rng = np.random.default_rng(seed)
    layers = tuple(
        Layer(rng.normal(size=(dout, din)), rng.normal(size=dout), act)
        for din, dout, act in zip(dims[:-1], dims[1:], acts)
    )
    net = Network(layers, dims[0])
    return net, random_state(net, n, rng, clamp_in=clamp_in, clamp_out=clamp_out)


def check_gradients(net, state, tol=1e-5):
    acts = list(state.activities)
    grads = activity_grad(net, state)
    free = set(state.free_indices())
    for l in range(len(acts)):
        if l not in free:
            assert not grads[l].any()
            continue
        fd = fd_grad(lambda a: oracle_energy(net, a), acts, l)
        assert rel_err(grads[l], fd).max() < tol

    pg = param_grad(net, state)
    params = [layer.weight for layer in net.layers] + [layer.bias for layer in net.layers]
    L = net.depth

    def energy(p):
        return oracle_energy(net, acts, p[:L], p[L:])

    for i in range(L):
        assert rel_err(pg.weights[i], fd_grad(energy, params, i)).max() < tol
        assert rel_err(pg.biases[i], fd_grad(energy, params, L + i)).max() < tol


def linear_problem(seed=0, dims=(3, 4, 4, 2)):
    net = init_network(list(dims), "identity", seed=seed, bias=False)
    rng = np.random.default_rng(seed + 100)
    x, y = rng.normal(size=(1, dims[0])), rng.normal(size=(1, dims[-1]))
    state = init_activities_with_ffwd(net, x).with_output(y)
    return net, state


def exact_flow(net, state, t):
    """Solution of the linear activity ODE via the matrix exponential of its Hessian."""
    W = [layer.weight for layer in net.layers]
    dims = net.dims
    L = net.depth
    offs = np.concatenate([[0], np.cumsum(dims[1:L])]).astype(int)
    m = offs[-1]
    H = np.zeros((m, m))
    b = np.zeros(m)
    x, y = state.activities[0][0], state.activities[-1][0]
    for k in range(1, L):
        s = slice(offs[k - 1], offs[k])
        H[s, s] += np.eye(dims[k]) + W[k].T @ W[k]
        if k + 1 < L:
            u = slice(offs[k], offs[k + 1])
            H[s, u] -= W[k].T
            H[u, s] -= W[k]
    b[offs[0] : offs[1]] += W[0] @ x
    b[offs[L - 2] : offs[L - 1]] += W[L - 1].T @ y
    z0 = np.concatenate([state.activities[k][0] for k in range(1, L)])
    zs = np.linalg.solve(H, b)
    return zs + expm(-H * t) @ (z0 - zs)


def terminal_error(net, state, kind, dt, T=1.0):
    out, _ = solve_inference(net, state, SolverConfig(kind, dt0=dt, t_max=T, adaptive=False))
    z = np.concatenate([out.activities[k][0] for k in range(1, net.depth)])
    return np.linalg.norm(z - exact_flow(net, state, T))


@pytest.fixture(scope="session")
def mnist_dir(tmp_path_factory):
    """MNIST subset in IDX layout: $PCFLOW_DATA_DIR, data/mnist, or built from mlxtend's sample."""
    for cand in (os.environ.get("PCFLOW_DATA_DIR"), ROOT / "data" / "mnist"):
        if cand and (Path(cand) / "train-images-idx3-ubyte").exists():
            return Path(cand)
    pytest.importorskip("mlxtend")
    import subprocess
    import sys

    out = tmp_path_factory.mktemp("mnist")
    subprocess.run([sys.executable, str(ROOT / "scripts" / "fetch_mnist_subset.py"), str(out)], check=True)
    return out


_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report():
    """Collect one human-readable verdict line per acceptance criterion."""

    def add(number: int, passed: bool, detail: str):
        _ACCEPTANCE_LINES.append(f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {detail}")

    return add


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
