"""Closed-loop episode driver for the MPC and stacked-RL agents."""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from stackrl.actor import KINDS, MPC, ActionStack, ObjectiveSpec, make_objective, optimize_stack, warm_start_shift
from stackrl.costs import accumulate_episode, stage_integral_and_state
from stackrl.critics import (
    DEFAULT_REPLAY,
    DEFAULT_RIDGE,
    CriticWeights,
    ReplayBuffer,
    Transition,
    critic_update,
)
from stackrl.dynamics import DEFAULT_SUBSTEPS, integrate_step
from stackrl.errors import ContractViolation, DivergenceError, OptimizerFailed

REACHED = "reached"
TIMEOUT = "timeout"
DIVERGED = "diverged"


@dataclass
class AgentConfig:
    kind: str = "rlqv"
    horizon: int = 12
    delta: float = 0.1
    gamma: float = 0.0
    replay: int = DEFAULT_REPLAY
    low: Optional[tuple] = None
    high: Optional[tuple] = None
    max_time: float = 30.0
    pos_radius: float = 0.05
    ang_radius: float = 0.1
    budget: Optional[int] = None
    seed: int = 0
    substeps: int = DEFAULT_SUBSTEPS
    ridge: float = DEFAULT_RIDGE
    noise: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ContractViolation(f"unknown agent kind {self.kind!r}")
        if self.horizon < 2:
            raise ContractViolation("horizon must be >= 2")
        if self.delta <= 0:
            raise ContractViolation("sampling time must be positive")
        if self.replay < 2:
            raise ContractViolation("replay size must be >= 2")
        if self.pos_radius <= 0 or self.ang_radius <= 0:
            raise ContractViolation("termination radii must be positive")
        if self.gamma < 0:
            raise ContractViolation("discount rate must be >= 0")

    def bounds(self, env):
        low = env.low if self.low is None else np.asarray(self.low, dtype=float)
        high = env.high if self.high is None else np.asarray(self.high, dtype=float)
        return np.asarray(low, dtype=float), np.asarray(high, dtype=float)

    def to_dict(self):
        return asdict(self)


@dataclass
class EpisodeTrace:
    """Per-interval records of one closed-loop run.

    ``states`` holds one more row than ``actions``: the state after the last
    applied interval. ``stages[j]`` is the plant cost over interval ``j`` with
    discount measured from that interval's start.
    """

    delta: float
    gamma: float
    states: np.ndarray
    actions: np.ndarray
    stages: np.ndarray
    reason: str
    critics: Optional[CriticWeights] = field(default=None, repr=False)

    @property
    def times(self):
        return self.delta * np.arange(len(self.stages))

    @property
    def J(self):
        return accumulate_episode(self, self.gamma)

    @property
    def steps(self):
        return len(self.stages)

    @property
    def final_state(self):
        return self.states[-1]

    def running_J(self):
        disc = np.exp(-self.gamma * self.times) if self.gamma else 1.0
        return np.cumsum(disc * self.stages)

    def write_csv(self, path, state_names, action_names):
        header = ["t", *state_names, *action_names, "stage", "J"]
        rows = zip(self.times, self.states[:-1], self.actions, self.stages, self.running_J())
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh, lineterminator="\n")
            out.writerow(header)
            for t, x, u, s, j in rows:
                out.writerow([_fmt(t), *map(_fmt, x), *map(_fmt, u), _fmt(s), _fmt(j)])


def _fmt(value):
    return repr(float(value))


def agent_step(env, cfg: AgentConfig, critics: Optional[CriticWeights], x_k, warm: ActionStack):
    """Optimize the horizon objective from ``warm``; return ``(u_1, plan)``."""
    if cfg.kind == MPC:
        w = v = None
    else:
        if critics is None:
            raise ContractViolation(f"{cfg.kind} needs critic weights")
        w, v = critics.w, critics.v
    spec = ObjectiveSpec(cfg.kind, env.dynamics, env.stage_cost, cfg.delta, cfg.gamma, w, v)
    plan = optimize_stack(make_objective(spec, x_k), warm, cfg.budget)
    return plan.actions[0].copy(), plan


def run_episode(
    env,
    cfg: AgentConfig,
    x0,
    critics: Optional[CriticWeights] = None,
    on_critic_update: Optional[Callable] = None,
) -> EpisodeTrace:
    """Run one episode: actor, apply, critic update, repeated until termination.

    The actor at step ``k`` sees the critics produced at step ``k - 1``. The
    transition for interval ``k - 1`` is completed once ``u_k`` is known, so the
    critic update at step ``k`` only touches intervals with index below ``k``.
    Divergence ends the episode with reason ``diverged`` instead of raising.
    """
    x = np.asarray(x0, dtype=float).copy()
    if x.shape != (env.n,):
        raise ContractViolation(f"start state must have dimension {env.n}")
    low, high = cfg.bounds(env)
    learning = cfg.kind != MPC
    if learning and critics is None:
        critics = CriticWeights.zeros(env.n, env.m)
    buffer = ReplayBuffer(cfg.replay) if learning else None
    rng = np.random.default_rng(cfg.seed)
    warm = ActionStack.zeros(cfg.horizon, low, high)

    states, actions, stages = [x], [], []
    prev = None
    reason = TIMEOUT
    k = 0
    while True:
        if env.reached(x, cfg.pos_radius, cfg.ang_radius):
            reason = REACHED
            break
        if k * cfg.delta >= cfg.max_time - 1e-9:
            reason = TIMEOUT
            break
        try:
            u, plan = agent_step(env, cfg, critics if learning else None, x, warm)
        except OptimizerFailed as exc:
            raise OptimizerFailed(f"actor failed at step {k}: {exc}") from exc
        except DivergenceError:
            reason = DIVERGED
            break
        if cfg.noise > 0:
            u = np.clip(u + cfg.noise * 0.5 * (high - low) * rng.standard_normal(u.shape), low, high)
        if learning:
            if prev is not None:
                buffer.push(Transition(prev[0], prev[1], x, u, prev[2], index=k - 1))
            if buffer.full:
                if on_critic_update is not None:
                    on_critic_update(k, list(buffer))
                critics = critic_update(buffer, critics.w, critics.v, cfg.gamma, cfg.delta, cfg.ridge, k)
        try:
            stage, x_next = stage_integral_and_state(
                env.dynamics, env.stage_cost, x, u, 0.0, cfg.delta, cfg.gamma, cfg.substeps
            )
        except DivergenceError:
            reason = DIVERGED
            break
        prev = (x, u, float(stage))
        actions.append(u)
        stages.append(float(stage))
        states.append(x_next)
        x = x_next
        warm = warm_start_shift(plan)
        k += 1

    trace = EpisodeTrace(
        delta=cfg.delta,
        gamma=cfg.gamma,
        states=np.array(states),
        actions=np.array(actions, dtype=float).reshape(len(actions), env.m),
        stages=np.array(stages, dtype=float),
        reason=reason,
        critics=critics,
    )
    if env.sanity is not None and trace.steps:
        all_times = cfg.delta * np.arange(len(trace.states))
        if not env.sanity(trace.states, all_times):
            raise ContractViolation("trajectory violated the boundedness sanity check")
    return trace


def reintegrate(env, trace: EpisodeTrace, substeps=DEFAULT_SUBSTEPS):
    """Successor states recomputed from the recorded (state, action) pairs."""
    return np.array(
        [integrate_step(env.dynamics, x, u, trace.delta, substeps) for x, u in zip(trace.states[:-1], trace.actions)]
    ).reshape(-1, env.n)
