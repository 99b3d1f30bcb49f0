"""
Horizon objectives over an action stack and the box-constrained local search
that minimizes them.

Every objective accepts either one stack of shape ``(N-1, m)`` or a batch of
shape ``(B, N-1, m)``; predictions always use one Euler step per interval.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from stackrl.costs import StageCost, running_cost
from stackrl.critics import j_hat, q_hat
from stackrl.dynamics import Dynamics, predict_horizon
from stackrl.errors import ContractViolation, OptimizerFailed

MPC = "mpc"
RLQ = "rlq"
RLQV = "rlqv"
RLQC = "rlqc"
KINDS = (MPC, RLQ, RLQV, RLQC)

BUDGET_PER_DIM = 200
INITIAL_STEP = 0.25
MIN_STEP = 1e-4


@dataclass
class ActionStack:
    actions: np.ndarray
    low: np.ndarray
    high: np.ndarray
    value: Optional[float] = None

    def __post_init__(self):
        self.actions = np.array(self.actions, dtype=float, ndmin=2)
        self.low = np.asarray(self.low, dtype=float)
        self.high = np.asarray(self.high, dtype=float)
        if self.actions.shape[-1] != self.low.size:
            raise ContractViolation("action dimension does not match bounds")
        if np.any(self.actions < self.low - 1e-12) or np.any(self.actions > self.high + 1e-12):
            raise ContractViolation("action stack leaves the admissible box")

    @property
    def horizon(self):
        return self.actions.shape[0] + 1

    @classmethod
    def zeros(cls, horizon, low, high):
        low = np.asarray(low, dtype=float)
        init = np.clip(np.zeros((horizon - 1, low.size)), low, high)
        return cls(init, low, high)


@dataclass
class ObjectiveSpec:
    kind: str
    dynamics: Dynamics
    stage_cost: StageCost
    delta: float
    gamma: float = 0.0
    w: Optional[np.ndarray] = None
    v: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ContractViolation(f"unknown objective kind {self.kind!r}")
        if self.kind in (RLQ, RLQV, RLQC) and self.w is None:
            raise ContractViolation(f"{self.kind} needs Q-critic weights")
        if self.kind in (RLQV, RLQC) and self.v is None:
            raise ContractViolation(f"{self.kind} needs value-critic weights")


def _predict(spec, x_k, stack):
    stack = np.asarray(stack, dtype=float)
    return predict_horizon(spec.dynamics, x_k, stack, spec.delta, strict=stack.ndim == 2), stack


def _stage_terms(spec, states, stack):
    return spec.delta * running_cost(spec.stage_cost, states[..., :-1, :], stack)


def objective_mpc(spec: ObjectiveSpec, x_k, stack):
    """Left-rectangle stage cost along the Euler prediction."""
    states, stack = _predict(spec, x_k, stack)
    terms = _stage_terms(spec, states, stack)
    if spec.gamma:
        terms = terms * np.exp(-spec.gamma * spec.delta * np.arange(terms.shape[-1]))
    return terms.sum(axis=-1)


def _q_stack(spec, states, stack):
    return q_hat(spec.w, states[..., :-1, :], stack).sum(axis=-1)


def objective_rlq(spec: ObjectiveSpec, x_k, stack):
    states, stack = _predict(spec, x_k, stack)
    return _q_stack(spec, states, stack)


def objective_rlqv(spec: ObjectiveSpec, x_k, stack):
    states, stack = _predict(spec, x_k, stack)
    return _q_stack(spec, states, stack) + j_hat(spec.v, states[..., -1, :])


def objective_rlqv_complemented(spec: ObjectiveSpec, x_k, stack):
    """RL-QV plus ``(N - i) * delta * r`` along the prediction."""
    states, stack = _predict(spec, x_k, stack)
    terms = _stage_terms(spec, states, stack)
    n_int = terms.shape[-1]
    weights = np.arange(n_int, 0, -1, dtype=float)
    return (
        _q_stack(spec, states, stack)
        + j_hat(spec.v, states[..., -1, :])
        + (terms * weights).sum(axis=-1)
    )


OBJECTIVES = {
    MPC: objective_mpc,
    RLQ: objective_rlq,
    RLQV: objective_rlqv,
    RLQC: objective_rlqv_complemented,
}


def make_objective(spec: ObjectiveSpec, x_k) -> Callable:
    fn = OBJECTIVES[spec.kind]
    x_k = np.asarray(x_k, dtype=float)
    return lambda stack: fn(spec, x_k, stack)


def pattern_search(objective, x0, low, high, budget, initial_step=INITIAL_STEP, min_step=MIN_STEP):
    """Deterministic compass search in a box.

    Each iteration polls ``+-step`` along every coordinate as one batch, then
    tries the sum of all improving coordinate moves. Ties keep the incumbent.
    Steps are relative to the box width; the search stops once the step drops
    below ``min_step`` or the evaluation budget is spent.

    Returns ``(x, f(x), evaluations)``.
    """
    shape = np.shape(x0)
    x = np.asarray(x0, dtype=float).ravel().copy()
    lo = np.broadcast_to(low, shape).ravel()
    hi = np.broadcast_to(high, shape).ravel()
    width = hi - lo
    dim = x.size

    def evaluate(points):
        vals = np.asarray(objective(points.reshape((-1,) + shape)), dtype=float).reshape(-1)
        return np.where(np.isfinite(vals), vals, np.inf)

    # The incumbent is scored unbatched so a diverging prediction raises.
    fx = float(np.asarray(objective(x.reshape(shape)), dtype=float))
    used = 1
    if not np.isfinite(fx):
        raise OptimizerFailed("objective is not finite at the initial stack")
    step = initial_step
    active = width > 0
    while step >= min_step and used < budget:
        delta = step * width
        cand = np.repeat(x[None], 2 * dim, axis=0)
        idx = np.arange(dim)
        cand[2 * idx, idx] = np.minimum(x + delta, hi)
        cand[2 * idx + 1, idx] = np.maximum(x - delta, lo)
        moved = np.repeat(active, 2) & np.any(cand != x, axis=1)
        poll = np.flatnonzero(moved)[: max(0, budget - used)]
        if poll.size == 0:
            break
        vals = np.full(2 * dim, np.inf)
        vals[poll] = evaluate(cand[poll])
        used += poll.size
        best = int(np.argmin(vals))
        if vals[best] < fx:
            new_x, new_f = cand[best], vals[best]
            pair = vals.reshape(dim, 2)
            pick = np.argmin(pair, axis=1)
            gain = pair[idx, pick] < fx
            if gain.sum() > 1 and used < budget:
                combo = x.copy()
                combo[gain] = cand[2 * idx[gain] + pick[gain], idx[gain]]
                fc = float(evaluate(combo[None])[0])
                used += 1
                if fc < new_f:
                    new_x, new_f = combo, fc
            x, fx = new_x.copy(), float(new_f)
        else:
            step *= 0.5
    return x.reshape(shape), fx, used


def optimize_stack(objective, init: ActionStack, budget: Optional[int] = None) -> ActionStack:
    """Locally minimize ``objective`` over stacks inside ``init``'s box.

    The returned stack never scores worse than ``init``.
    """
    dim = init.actions.size
    budget = BUDGET_PER_DIM * dim if budget is None else int(budget)
    if budget < dim:
        raise ContractViolation("budget must be at least the stack dimension")
    x, _, _ = pattern_search(objective, init.actions, init.low, init.high, budget)
    # Re-score unbatched so the reported value and the descent check use the
    # same arithmetic as a direct call.
    f_init = float(objective(init.actions))
    fx = float(objective(x))
    if not fx <= f_init:
        return ActionStack(init.actions.copy(), init.low, init.high, value=f_init)
    return ActionStack(x, init.low, init.high, value=fx)


def warm_start_shift(prev: ActionStack) -> ActionStack:
    """Drop the first action and repeat the last one."""
    acts = prev.actions
    if len(acts) <= 1:
        return ActionStack(acts.copy(), prev.low, prev.high)
    return ActionStack(np.vstack([acts[1:], acts[-1:]]), prev.low, prev.high)
