"""SGD and Adam on network parameters. Both return fresh networks and states."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .energy import ParamGradient
from .errors import ShapeError
from .netcore import Network


@dataclass(frozen=True)
class OptimState:
    kind: str = "adam"
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    # per layer: (weight moment, bias moment or None)
    first_moment: tuple | None = None
    second_moment: tuple | None = None


def init_optim(network: Network, kind: str = "adam", lr: float = 1e-3, **kw) -> OptimState:
    kind = kind.lower()
    if kind not in ("sgd", "adam"):
        raise ValueError(f"unknown optimizer {kind!r}")
    if not lr > 0:
        raise ValueError("lr must be positive")
    if kind == "sgd":
        return OptimState("sgd", lr)

    def zeros():
        return tuple(
            (np.zeros_like(layer.weight), None if layer.bias is None else np.zeros_like(layer.bias))
            for layer in network.layers
        )

    return OptimState("adam", lr, first_moment=zeros(), second_moment=zeros(), **kw)


def _check_grads(network: Network, grads: ParamGradient) -> None:
    if len(grads.weights) != network.depth:
        raise ShapeError("gradient depth does not match network")
    for i, (layer, dw, db) in enumerate(zip(network.layers, grads.weights, grads.biases)):
        if dw.shape != layer.weight.shape:
            raise ShapeError(f"layer {i + 1}: weight gradient {dw.shape} vs weight {layer.weight.shape}")
        if (db is None) != (layer.bias is None) or (db is not None and db.shape != layer.bias.shape):
            raise ShapeError(f"layer {i + 1}: bias gradient does not match bias")


def sgd_update(network: Network, grads: ParamGradient, lr: float) -> Network:
    if not lr > 0:
        raise ValueError("lr must be positive")
    _check_grads(network, grads)
    ws = [layer.weight - lr * dw for layer, dw in zip(network.layers, grads.weights)]
    bs = [
        None if layer.bias is None else layer.bias - lr * db
        for layer, db in zip(network.layers, grads.biases)
    ]
    return network.with_params(ws, bs)


def _adam_tensor(p, g, m, v, state: OptimState, t: int):
    m = state.beta1 * m + (1 - state.beta1) * g
    v = state.beta2 * v + (1 - state.beta2) * (g * g)
    m_hat = m / (1 - state.beta1**t)
    v_hat = v / (1 - state.beta2**t)
    return p - state.lr * m_hat / (np.sqrt(v_hat) + state.eps), m, v


def adam_update(network: Network, grads: ParamGradient, state: OptimState) -> tuple[Network, OptimState]:
    if state.kind != "adam":
        raise ValueError(f"adam_update called with a {state.kind!r} state")
    _check_grads(network, grads)
    t = state.step_count + 1
    ws, bs, ms, vs = [], [], [], []
    for layer, dw, db, (mw, mb), (vw, vb) in zip(
        network.layers, grads.weights, grads.biases, state.first_moment, state.second_moment
    ):
        w, mw, vw = _adam_tensor(layer.weight, dw, mw, vw, state, t)
        if layer.bias is None:
            b = None
        else:
            b, mb, vb = _adam_tensor(layer.bias, db, mb, vb, state, t)
        ws.append(w)
        bs.append(b)
        ms.append((mw, mb))
        vs.append((vw, vb))
    return network.with_params(ws, bs), replace(
        state, step_count=t, first_moment=tuple(ms), second_moment=tuple(vs)
    )


def apply_update(network: Network, grads: ParamGradient, state: OptimState) -> tuple[Network, OptimState]:
    if state.kind == "sgd":
        return sgd_update(network, grads, state.lr), replace(state, step_count=state.step_count + 1)
    return adam_update(network, grads, state)
