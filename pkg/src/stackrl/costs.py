"""Quadratic stage cost, interval integrals and accumulated episode cost."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from stackrl.dynamics import DEFAULT_SUBSTEPS, Dynamics, integrate_substeps
from stackrl.errors import ContractViolation

STATE_ACTION = "state-action"
STATE_ONLY = "state-only"

# Robot default over [x, y, alpha, v, omega].
DEFAULT_ROBOT_R = (10.0, 10.0, 1.0, 0.1, 0.1)


@dataclass(frozen=True)
class StageCost:
    """``r = chi^T R chi`` with diagonal ``R`` over ``[x; u]`` or ``x``."""

    R: tuple
    kind: str = STATE_ACTION

    def __post_init__(self):
        diag = np.asarray(self.R, dtype=float)
        if diag.ndim != 1:
            raise ContractViolation("R must be given as its diagonal")
        if np.any(diag <= 0):
            raise ContractViolation("R must be positive definite")
        if self.kind not in (STATE_ACTION, STATE_ONLY):
            raise ContractViolation(f"unknown regressor kind {self.kind!r}")
        object.__setattr__(self, "R", tuple(float(r) for r in diag))

    @property
    def diag(self):
        return np.asarray(self.R)

    def scaled(self, factor):
        return StageCost(tuple(factor * r for r in self.R), self.kind)


@dataclass(frozen=True)
class DiscountSpec:
    gamma: float = 0.0

    def __post_init__(self):
        if self.gamma < 0:
            raise ContractViolation("discount rate must be >= 0")

    def factor(self, dt):
        return float(np.exp(-self.gamma * dt))


def running_cost(sc: StageCost, x, u=None):
    """Evaluate ``chi^T R chi``; broadcasts over leading batch dims."""
    x = np.asarray(x, dtype=float)
    if sc.kind == STATE_ACTION:
        if u is None:
            raise ContractViolation("state-action cost needs an action")
        u = np.asarray(u, dtype=float)
        batch = np.broadcast_shapes(x.shape[:-1], u.shape[:-1])
        chi = np.concatenate(
            [np.broadcast_to(x, batch + x.shape[-1:]), np.broadcast_to(u, batch + u.shape[-1:])],
            axis=-1,
        )
    else:
        chi = x
    if chi.shape[-1] != len(sc.R):
        raise ContractViolation(
            f"regressor has dimension {chi.shape[-1]}, R has {len(sc.R)}"
        )
    return np.einsum("...i,i,...i->...", chi, sc.diag, chi)


def trapezoid_weights(delta, substeps, gamma=0.0, t_start=0.0):
    h = delta / substeps
    w = np.full(substeps + 1, h)
    w[0] = w[-1] = 0.5 * h
    if gamma:
        w = w * np.exp(-gamma * (t_start + h * np.arange(substeps + 1)))
    return w


def stage_integral_and_state(
    dyn: Dynamics,
    sc: StageCost,
    x,
    u,
    t_start: float,
    delta: float,
    gamma: float = 0.0,
    substeps: int = DEFAULT_SUBSTEPS,
):
    """Discounted interval cost and the successor state from one RK4 pass.

    The integral uses the trapezoid rule on the RK4 sub-grid, with the
    discount ``exp(-gamma * (t_start + tau))`` applied pointwise.
    """
    grid = integrate_substeps(dyn, x, u, delta, substeps)
    r = running_cost(sc, grid, u)
    w = trapezoid_weights(delta, substeps, gamma, t_start)
    return np.tensordot(w, r, axes=(0, 0)), grid[-1]


def stage_integral(dyn, sc, x, u, t_start, delta, gamma=0.0, substeps=DEFAULT_SUBSTEPS):
    return stage_integral_and_state(dyn, sc, x, u, t_start, delta, gamma, substeps)[0]


def accumulate_episode(trace, gamma: float = 0.0) -> float:
    """Sum of per-interval stage integrals, discounted from episode start.

    ``trace`` needs ``times`` (interval start times) and ``stages`` (interval
    integrals with the discount measured from each interval's own start).
    """
    times = np.asarray(trace.times, dtype=float)
    stages = np.asarray(trace.stages, dtype=float)
    if times.shape != stages.shape:
        raise ContractViolation("times and stages must align")
    if stages.size == 0:
        return 0.0
    if gamma:
        return float(np.sum(np.exp(-gamma * times) * stages))
    return float(np.sum(stages))
