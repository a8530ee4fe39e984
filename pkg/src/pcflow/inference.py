"""Gradient-flow inference: integrate dz/dt = -dF/dz over [0, t_max].

Two integrators are provided. Euler takes fixed steps of ``dt0``. Heun is the
two-stage explicit RK2 scheme; its embedded Euler solution gives a local error
estimate that drives a PID step-size controller.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .energy import _layer_output, _residuals, activity_grad_from_residuals
from .errors import BudgetError, DivergenceError, ShapeError
from .netcore import ActivityState, Network

# local error of the Heun/Euler pair is O(dt^2): error-estimate order 1
HEUN_ERROR_ORDER = 1


@dataclass(frozen=True)
class PIDCoeffs:
    p: float = 0.0
    i: float = 1.0
    d: float = 0.0
    safety: float = 0.9
    factor_min: float = 0.2
    factor_max: float = 10.0

    def __post_init__(self):
        if not 0 < self.safety <= 1:
            raise ValueError("safety must lie in (0, 1]")
        if not self.factor_min < 1 < self.factor_max:
            raise ValueError("need factor_min < 1 < factor_max")


@dataclass(frozen=True)
class SolverConfig:
    kind: str = "heun"
    dt0: float = 0.5
    t_max: float = 20.0
    rtol: float = 1e-4
    atol: float = 1e-4
    controller: PIDCoeffs = field(default_factory=PIDCoeffs)
    max_steps: int = 100_000
    early_stop_grad_norm: float | None = None
    # Heun only: False runs the scheme at the fixed step dt0 (convergence studies)
    adaptive: bool = True

    def __post_init__(self):
        kind = self.kind.lower()
        if kind not in ("euler", "heun"):
            raise ValueError(f"unknown solver kind {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        if not (self.dt0 > 0 and self.t_max > 0):
            raise ValueError("dt0 and t_max must be positive")
        if self.dt0 > self.t_max:
            raise ValueError(f"dt0={self.dt0} exceeds t_max={self.t_max}")
        if self.rtol <= 0 or self.atol <= 0:
            raise ValueError("rtol and atol must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be positive")

    def with_(self, **kw) -> "SolverConfig":
        return replace(self, **kw)


@dataclass
class SolveStats:
    accepted_steps: int = 0
    rejected_steps: int = 0
    rhs_evaluations: int = 0
    final_grad_norm: float = float("nan")
    t_reached: float = 0.0
    energies: list[float] | None = None
    times: list[float] | None = None
    activities: list[tuple[np.ndarray, ...]] | None = None


# --------------------------------------------------------------------------
# Single-step primitives. They operate on ActivityState so they can be used
# (and tested) in isolation; solve_inference runs an equivalent loop over the
# free layers only.
# --------------------------------------------------------------------------


def _finite_or_raise(arrays, step: int) -> None:
    for z in arrays:
        if not np.all(np.isfinite(z)):
            raise DivergenceError("non-finite activities", step)


def euler_step(state: ActivityState, grad: Sequence[np.ndarray], dt: float, *, step: int = 0) -> ActivityState:
    if dt < 0:
        raise ValueError("dt must be non-negative")
    if len(grad) != len(state.activities):
        raise ShapeError("gradient does not mirror the activity state")
    free = set(state.free_indices())
    new = [z - dt * g if l in free else z for l, (z, g) in enumerate(zip(state.activities, grad))]
    _finite_or_raise(new, step)
    return state.replace(new)


def heun_step(
    state: ActivityState,
    rhs: Callable[[ActivityState], Sequence[np.ndarray]],
    dt: float,
    *,
    step: int = 0,
) -> tuple[ActivityState, list[np.ndarray]]:
    """One Heun step for dz/dt = -rhs(z).

    Returns the second-order update and ``(dt/2)(k2 - k1)``, the difference
    between it and the embedded Euler result.
    """
    if dt < 0:
        raise ValueError("dt must be non-negative")
    free = set(state.free_indices())
    k1 = [-g for g in rhs(state)]
    tilde = state.replace([z + dt * k if l in free else z for l, (z, k) in enumerate(zip(state.activities, k1))])
    k2 = [-g for g in rhs(tilde)]
    new, err = [], []
    for l, (z, a, b) in enumerate(zip(state.activities, k1, k2)):
        if l in free:
            new.append(z + 0.5 * dt * (a + b))
            err.append(0.5 * dt * (b - a))
        else:
            new.append(z)
            err.append(np.zeros_like(z))
    _finite_or_raise(new, step)
    return state.replace(new), err


def pid_adapt(
    err_ratio: float,
    prev_ratios: Sequence[float],
    coeffs: PIDCoeffs = PIDCoeffs(),
    order: int = HEUN_ERROR_ORDER,
) -> float:
    """Step-size multiplier from the current and (up to two) previous error ratios.

    ``factor = safety * r^(-i/k) * r_prev^(-p/k) * r_prev2^(-d/k)`` with
    ``k = order + 1``, clipped to ``[factor_min, factor_max]``. Missing history
    counts as 1. The step is accepted iff ``err_ratio <= 1``.
    """
    k = order + 1.0
    tiny = np.finfo(float).tiny
    prev = prev_ratios[-1] if len(prev_ratios) >= 1 else 1.0
    prev2 = prev_ratios[-2] if len(prev_ratios) >= 2 else 1.0
    with np.errstate(over="ignore", divide="ignore"):
        log_f = (
            math.log(coeffs.safety)
            - coeffs.i / k * math.log(max(err_ratio, tiny))
            - coeffs.p / k * math.log(max(prev, tiny))
            - coeffs.d / k * math.log(max(prev2, tiny))
        )
    if log_f >= math.log(coeffs.factor_max):
        return coeffs.factor_max
    return max(coeffs.factor_min, math.exp(log_f))


def scaled_error_norm(
    err: Sequence[np.ndarray],
    z_old: Sequence[np.ndarray],
    z_new: Sequence[np.ndarray],
    rtol: float,
    atol: float,
) -> float:
    """RMS of ``err / (atol + rtol * max(|z_old|, |z_new|))`` over all entries."""
    total, count = 0.0, 0
    for e, a, b in zip(err, z_old, z_new):
        scale = atol + rtol * np.maximum(np.abs(a), np.abs(b))
        r = e / scale
        total += float(np.vdot(r, r))
        count += r.size
    if count == 0:
        return 0.0
    return math.sqrt(total / count)


# --------------------------------------------------------------------------
# Driver
# --------------------------------------------------------------------------


class _Flow:
    """Right-hand side restricted to the free layers, counting evaluations."""

    def __init__(self, network: Network, state: ActivityState):
        self.network = network
        self.free = state.free_indices()
        self.base = list(state.activities)
        self.n = state.batch_size
        self.evals = 0
        # a clamped input makes the first pre-activation constant
        self.first = None if 0 in self.free else _layer_output(network.layers[0], self.base[0])

    def full(self, zs: Sequence[np.ndarray]) -> list[np.ndarray]:
        acts = list(self.base)
        for l, z in zip(self.free, zs):
            acts[l] = z
        return acts

    def __call__(self, zs: Sequence[np.ndarray]) -> tuple[list[np.ndarray], float]:
        """Gradient on the free layers and the total energy at ``zs``."""
        self.evals += 1
        # overflow surfaces as a DivergenceError in the caller
        with np.errstate(over="ignore", invalid="ignore"):
            res = _residuals(self.network, self.full(zs), self.first)
            energy = sum(float(np.vdot(e, e)) for e in res.eps) / (2.0 * self.n)
            return activity_grad_from_residuals(res, self.network, self.free, self.n), energy


def _max_norm(gs: Sequence[np.ndarray]) -> float:
    return max((float(np.max(np.abs(g))) for g in gs if g.size), default=0.0)


def _max_norm_below(gs: Sequence[np.ndarray], bound: float) -> bool:
    """``_max_norm(gs) < bound``, decided from the cheaper L2 norm when possible.

    ``|g|_inf <= |g|_2 <= sqrt(m) |g|_inf`` for ``m`` entries, so the exact max
    is only needed when the L2 norm falls between the two bounds.
    """
    sq = sum(float(np.vdot(g, g)) for g in gs)
    if sq < bound * bound:
        return True
    if sq >= bound * bound * sum(g.size for g in gs):
        return False
    return _max_norm(gs) < bound


def solve_inference(
    network: Network,
    state: ActivityState,
    config: SolverConfig = SolverConfig(),
    *,
    record_energies: bool = False,
    record_activities: bool = False,
) -> tuple[ActivityState, SolveStats]:
    """Integrate the inference flow from t=0 to ``config.t_max``.

    Euler takes ``ceil(t_max/dt0)`` steps, the last one shortened to land on
    ``t_max``. Heun adapts its step with :func:`pid_adapt` and truncates the
    final step the same way. With ``early_stop_grad_norm`` set, integration
    stops once the max-norm of the activity gradient drops below it.
    """
    state.check_against(network)
    flow = _Flow(network, state)
    zs = [state.activities[l] for l in flow.free]
    stats = SolveStats()
    if record_energies:
        stats.energies, stats.times = [], []
    if record_activities:
        stats.activities = []

    def record(t, energy, zs):
        if record_energies:
            stats.energies.append(energy)
            stats.times.append(t)
        if record_activities:
            stats.activities.append(tuple(flow.full(zs)))

    def finish(zs, t, grad):
        stats.t_reached = t
        stats.final_grad_norm = _max_norm(grad)
        stats.rhs_evaluations = flow.evals
        return state.replace(flow.full(zs)), stats

    if not flow.free:
        return finish(zs, config.t_max, [])

    stop = config.early_stop_grad_norm
    T = config.t_max
    t = 0.0
    grad, energy = flow(zs)
    record(t, energy, zs)

    if config.kind == "euler" or not config.adaptive:
        n_steps = max(1, math.ceil(T / config.dt0 - 1e-9))
        if n_steps > config.max_steps:
            raise BudgetError(
                f"{n_steps} fixed steps requested but max_steps={config.max_steps}", stats,
                state,
            )
        for k in range(n_steps):
            if stop is not None and _max_norm_below(grad, stop):
                break
            dt = T - t if k == n_steps - 1 else config.dt0
            if config.kind == "euler":
                # grad is a fresh buffer from the last evaluation; reuse it for z - dt * g
                for z, g in zip(zs, grad):
                    g *= -dt
                    g += z
                zs = grad
            else:
                tilde = [z - dt * g for z, g in zip(zs, grad)]
                g2, _ = flow(tilde)
                zs = [z - 0.5 * dt * (a + b) for z, a, b in zip(zs, grad, g2)]
            t = T if k == n_steps - 1 else t + dt
            stats.accepted_steps += 1
            grad, energy = flow(zs)
            # any non-finite free activity makes its residual, hence the energy, non-finite
            if not math.isfinite(energy):
                _finite_or_raise(zs, k + 1)
                raise DivergenceError("energy overflowed", k + 1)
            record(t, energy, zs)
        return finish(zs, t, grad)

    # adaptive Heun
    ctrl = config.controller
    history: list[float] = []
    dt = config.dt0
    attempts = 0
    while T - t > 1e-12 * max(1.0, T):
        if stop is not None and _max_norm_below(grad, stop):
            break
        if attempts >= config.max_steps:
            stats.t_reached = t
            stats.rhs_evaluations = flow.evals
            raise BudgetError(
                f"max_steps={config.max_steps} exhausted at t={t:.6g} < t_max={T}",
                stats,
                state.replace(flow.full(zs)),
            )
        attempts += 1
        last = dt >= T - t
        h = T - t if last else dt
        tilde = [z - h * g for z, g in zip(zs, grad)]
        g2, _ = flow(tilde)
        new = [z - 0.5 * h * (a + b) for z, a, b in zip(zs, grad, g2)]
        err = [0.5 * h * (a - b) for a, b in zip(grad, g2)]
        finite = all(np.all(np.isfinite(z)) for z in new)
        ratio = scaled_error_norm(err, zs, new, config.rtol, config.atol) if finite else math.inf
        if not math.isfinite(ratio):
            # overflowed trial step: shrink hard and retry
            stats.rejected_steps += 1
            dt = h * ctrl.factor_min
            if dt < 1e-14 * max(1.0, T):
                raise DivergenceError("step size underflow", stats.accepted_steps + stats.rejected_steps)
            continue
        factor = pid_adapt(ratio, history, ctrl, HEUN_ERROR_ORDER)
        if ratio <= 1.0:
            zs = new
            t = T if last else t + h
            stats.accepted_steps += 1
            history = (history + [ratio])[-2:]
            grad, energy = flow(zs)
            record(t, energy, zs)
            dt = h * factor
        else:
            stats.rejected_steps += 1
            dt = h * min(factor, 1.0)
            if dt < 1e-14 * max(1.0, T):
                raise DivergenceError("step size underflow", stats.accepted_steps + stats.rejected_steps)
    return finish(zs, t, grad)
