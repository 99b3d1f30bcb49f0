"""
Sample-and-hold integration of continuous dynamics.

The plant is advanced with classical RK4 over ``substeps`` equal sub-intervals
while the action is held constant. Agents predict with a single explicit Euler
step per sampling interval, so model mismatch between "truth" and prediction is
always present.

All dynamics functions are expected to broadcast over leading batch
dimensions: ``f(x[..., n], u[..., m]) -> xdot[..., n]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from stackrl.errors import ContractViolation, DivergenceError

# Any state component beyond this magnitude aborts integration or prediction.
DIVERGENCE_CAP = 1e6
DEFAULT_SUBSTEPS = 10


class IntegrationDiverged(DivergenceError):
    pass


class PredictionDiverged(DivergenceError):
    pass


@dataclass(frozen=True)
class Dynamics:
    """Continuous-time dynamics ``xdot = f(x, u)``."""

    n: int
    m: int
    f: Callable[[np.ndarray, np.ndarray], np.ndarray]
    name: str = "dynamics"

    def __call__(self, x, u):
        return self.f(np.asarray(x, dtype=float), np.asarray(u, dtype=float))


@dataclass
class SampledTrajectory:
    t0: float
    delta: float
    states: np.ndarray
    actions: np.ndarray
    substates: Optional[list] = field(default=None, repr=False)

    def __post_init__(self):
        if self.delta <= 0:
            raise ContractViolation("sampling time must be positive")
        if len(self.states) < 1:
            raise ContractViolation("trajectory needs at least one state")

    @property
    def times(self):
        return self.t0 + self.delta * np.arange(len(self.states))


def _guard(x, exc, index):
    if not np.all(np.isfinite(x)) or np.any(np.abs(x) > DIVERGENCE_CAP):
        raise exc("state left the admissible region", index)


def _check_dims(dyn, x, u):
    if x.shape[-1] != dyn.n or u.shape[-1] != dyn.m:
        raise ContractViolation(
            f"expected state dim {dyn.n} and action dim {dyn.m}, "
            f"got {x.shape[-1]} and {u.shape[-1]}"
        )


def integrate_substeps(dyn: Dynamics, x, u, delta: float, substeps: int = DEFAULT_SUBSTEPS):
    """Return the ``substeps + 1`` RK4 sub-grid states over ``[0, delta]``.

    The first entry is ``x`` itself and the last is the state at ``delta``.
    Batched inputs give an array of shape ``(substeps + 1, ..., n)``.
    """
    if delta <= 0:
        raise ContractViolation("delta must be positive")
    if substeps < 1:
        raise ContractViolation("substeps must be >= 1")
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    _check_dims(dyn, x, u)
    h = delta / substeps
    out = np.empty((substeps + 1,) + np.broadcast_shapes(x.shape[:-1], u.shape[:-1]) + (dyn.n,))
    out[0] = x
    cur = out[0]
    for s in range(substeps):
        k1 = dyn.f(cur, u)
        k2 = dyn.f(cur + 0.5 * h * k1, u)
        k3 = dyn.f(cur + 0.5 * h * k2, u)
        k4 = dyn.f(cur + h * k3, u)
        nxt = cur + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        _guard(nxt, IntegrationDiverged, s)
        out[s + 1] = nxt
        cur = out[s + 1]
    return out


def integrate_step(dyn: Dynamics, x, u, delta: float, substeps: int = DEFAULT_SUBSTEPS):
    """Advance ``x`` by one sampling interval with ``u`` held constant."""
    return integrate_substeps(dyn, x, u, delta, substeps)[-1]


def euler_predict(dyn: Dynamics, x_hat, u, delta: float):
    """One explicit Euler step ``x_hat + delta * f(x_hat, u)``."""
    if delta <= 0:
        raise ContractViolation("delta must be positive")
    x_hat = np.asarray(x_hat, dtype=float)
    u = np.asarray(u, dtype=float)
    _check_dims(dyn, x_hat, u)
    nxt = x_hat + delta * dyn.f(x_hat, u)
    _guard(nxt, PredictionDiverged, None)
    return nxt


def predict_horizon(dyn: Dynamics, x_k, stack, delta: float, strict: bool = True):
    """Euler-predicted states ``[x_k, x_2, ..., x_N]`` for an action stack.

    ``stack`` has shape ``(N-1, m)`` or, batched, ``(B, N-1, m)``; the result is
    ``(N, n)`` or ``(B, N, n)``. With ``strict=False`` diverging candidates are
    left as non-finite values instead of raising, which lets an optimizer reject
    them individually.
    """
    if delta <= 0:
        raise ContractViolation("delta must be positive")
    stack = np.asarray(stack, dtype=float)
    x_k = np.asarray(x_k, dtype=float)
    if stack.ndim < 2 or stack.shape[-2] < 1:
        raise ContractViolation("action stack must hold at least one action")
    _check_dims(dyn, x_k, stack[..., 0, :])
    steps = stack.shape[-2]
    batch = stack.shape[:-2]
    out = np.empty(batch + (steps + 1, dyn.n))
    out[..., 0, :] = x_k
    with np.errstate(all="ignore"):
        for i in range(steps):
            cur = out[..., i, :]
            out[..., i + 1, :] = cur + delta * dyn.f(cur, stack[..., i, :])
    bad = ~np.isfinite(out) | (np.abs(out) > DIVERGENCE_CAP)
    if bad.any():
        if strict:
            first = int(np.argwhere(bad.reshape(-1, steps + 1, dyn.n).any(axis=(0, 2)))[0, 0])
            raise PredictionDiverged("Euler prediction diverged", first)
        out[bad] = np.nan
    return out


def rollout_sampled(
    dyn: Dynamics,
    x0,
    policy: Callable[[np.ndarray], np.ndarray],
    delta: float,
    steps: int,
    substeps: int = DEFAULT_SUBSTEPS,
    keep_substates: bool = False,
) -> SampledTrajectory:
    """Closed-loop sample-and-hold rollout of ``policy``."""
    if steps < 1:
        raise ContractViolation("steps must be >= 1")
    x = np.asarray(x0, dtype=float).copy()
    states = [x]
    actions = []
    subs = [] if keep_substates else None
    for k in range(steps):
        u = np.asarray(policy(x), dtype=float)
        try:
            grid = integrate_substeps(dyn, x, u, delta, substeps)
        except IntegrationDiverged as exc:
            raise IntegrationDiverged("rollout diverged", k) from exc
        x = grid[-1]
        states.append(x)
        actions.append(u)
        if keep_substates:
            subs.append(grid)
    return SampledTrajectory(
        t0=0.0,
        delta=delta,
        states=np.array(states),
        actions=np.array(actions).reshape(steps, dyn.m),
        substates=subs,
    )
