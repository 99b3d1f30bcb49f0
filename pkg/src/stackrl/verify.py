"""
Executable oracles for the stacked-objective theorems.

Finite checks run on deterministic MDPs with integer costs, so every
comparison is exact. Continuous checks run on an LQR plant with known
``J*(x) = x'Px`` and a finite action grid, which keeps both sides of each
comparison exactly computable (up to quadrature).

For an MDP the one-step analogue of ``Q^delta`` is ``c(x, a) + J*(succ)``, and
the stacked objective over ``N - 1`` actions is

    sum_i (c_i + J*(x_{i+1})) + J*(x_N).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from stackrl.costs import StageCost, stage_integral
from stackrl.critics import j_hat, joint_regressor, q_hat, weights_from_matrix
from stackrl.dynamics import integrate_step
from stackrl.envs import LqrEnv, chain_fixture, double_integrator, random_mdp
from stackrl.errors import ContractViolation, EnumerationTooLarge

HOLDS = "holds within tol"
VIOLATED = "violated"
ASSUMPTION_FAILED = "assumption-not-satisfied"

MAX_ENUMERATION = 10**6
MAX_LAYER = 5 * 10**6
GRID_LEVELS = 5
CONTINUOUS_TOL = 1e-6


@dataclass
class TheoremReport:
    theorem: str
    instance: str
    lhs: float
    rhs: float
    gap: float
    verdict: str
    tol: float = 0.0

    def __post_init__(self):
        if not math.isclose(self.gap, abs(self.lhs - self.rhs), rel_tol=1e-12, abs_tol=1e-15):
            raise ContractViolation("report gap must equal |lhs - rhs|")

    @property
    def holds(self):
        return self.verdict == HOLDS

    def to_dict(self):
        return asdict(self)


def _verdict(gap, tol):
    return HOLDS if gap <= tol else VIOLATED


# --------------------------------------------------------------------------
# Finite MDP oracles
# --------------------------------------------------------------------------


def _check_enumerable(mdp, N):
    if N < 2:
        raise ContractViolation("horizon N must be >= 2")
    widest = max(len(mdp.edges[s]) for s in mdp.states)
    if widest ** (N - 1) > MAX_ENUMERATION:
        raise EnumerationTooLarge(f"{widest}^{N - 1} action sequences exceed {MAX_ENUMERATION}")


def _paths(mdp, x0, length):
    """Every action sequence of ``length`` as ``(actions, states, costs)``."""
    stack = [((), (x0,), ())]
    while stack:
        acts, states, costs = stack.pop()
        if len(acts) == length:
            yield acts, states, costs
            continue
        s = states[-1]
        for a in reversed(mdp.actions(s)):
            succ, c = mdp.step(s, a)
            stack.append((acts + (a,), states + (succ,), costs + (c,)))


def _stacked_value(J, states, costs):
    return sum(c + J[t] for c, t in zip(costs, states[1:])) + J[states[-1]]


def _complemented_value(J, states, costs):
    N = len(costs) + 1
    extra = sum((N - i) * c for i, c in enumerate(costs, start=1))
    return _stacked_value(J, states, costs) + extra


def _optimal_costs(mdp):
    J = mdp.optimal_cost_to_go()
    if not all(math.isfinite(v) for v in J.values()):
        raise ContractViolation("optimal cost-to-go must be finite on every state")
    return J


def brute_force_stacked_min(mdp, x0, N):
    """Exhaustive minimum of the stacked objective and its minimizing actions.

    Ties keep the lexicographically first sequence.
    """
    _check_enumerable(mdp, N)
    J = _optimal_costs(mdp)
    best, best_acts = None, None
    for acts, states, costs in _paths(mdp, x0, N - 1):
        val = _stacked_value(J, states, costs)
        if best is None or val < best or (val == best and acts < best_acts):
            best, best_acts = val, acts
    return best, list(best_acts)


def _greedy_path(mdp, J, x0, N):
    s, states, costs = x0, [x0], []
    for _ in range(N - 1):
        scores = [c + J[t] for t, c in mdp.edges[s]]
        a = int(np.argmin(scores))
        t, c = mdp.step(s, a)
        states.append(t)
        costs.append(c)
        s = t
    return states, costs


def elementwise_min_sum(mdp, x0, N):
    """Sum of per-step minima along the greedy roll-forward, plus ``J*(x_N)``.

    Each step minimizes ``c + J*(succ)`` at the current state; ties pick the
    lowest action index.
    """
    _check_enumerable(mdp, N)
    J = _optimal_costs(mdp)
    states, costs = _greedy_path(mdp, J, x0, N)
    return _stacked_value(J, states, costs)


def check_theorem1(mdp, x0, N, tol=0, instance="mdp"):
    """Stacked minimum versus the sum of element-wise minima.

    The equality is asserted when the greedy trajectory has the smallest
    ``sum J*`` over its intermediate states among all trajectories. Otherwise
    only ``min-of-sum <= sum-of-min`` is checked and the verdict records the
    failed assumption.
    """
    lhs, _ = brute_force_stacked_min(mdp, x0, N)
    rhs = elementwise_min_sum(mdp, x0, N)
    J = _optimal_costs(mdp)
    greedy_states, _ = _greedy_path(mdp, J, x0, N)
    greedy_sum = sum(J[s] for s in greedy_states[1:])
    assumption = all(
        greedy_sum <= sum(J[s] for s in states[1:]) for _, states, _ in _paths(mdp, x0, N - 1)
    )
    gap = abs(lhs - rhs)
    if lhs > rhs:
        verdict = VIOLATED
    elif assumption:
        verdict = _verdict(gap, tol)
    else:
        verdict = ASSUMPTION_FAILED
    return TheoremReport("theorem1", instance, float(lhs), float(rhs), float(gap), verdict, tol)


def check_theorem3(mdp, x0, N, tol=0, instance="mdp"):
    """Every minimizer of the complemented stack is Bellman-optimal.

    ``lhs`` is the worst realized cost ``sum c + J*(x_N)`` over all
    minimizers; ``rhs`` is ``J*(x0)``.
    """
    _check_enumerable(mdp, N)
    J = _optimal_costs(mdp)
    scored = [
        (_complemented_value(J, states, costs), sum(costs) + J[states[-1]])
        for _, states, costs in _paths(mdp, x0, N - 1)
    ]
    best = min(v for v, _ in scored)
    realized = max(total for v, total in scored if v == best)
    lhs, rhs = float(realized), float(J[x0])
    gap = abs(lhs - rhs)
    return TheoremReport("theorem3", instance, lhs, rhs, gap, _verdict(gap, tol), tol)


def random_instances(count=100, seed=0, n_states=5, n_actions=3):
    rng = np.random.default_rng(seed)
    return [random_mdp(rng, n_states, n_actions) for _ in range(count)]


def finite_suite(count=100, seed=0, N=4):
    """Theorem 1 and 3 reports on the chain fixture and ``count`` random MDPs."""
    fixture = chain_fixture()
    reports = [
        check_theorem1(fixture, fixture.start, 3, instance="chain"),
        check_theorem3(fixture, fixture.start, 3, instance="chain"),
    ]
    for i, mdp in enumerate(random_instances(count, seed)):
        name = f"random[{seed}:{i}]"
        reports.append(check_theorem1(mdp, mdp.start, N, instance=name))
        reports.append(check_theorem3(mdp, mdp.start, N, instance=name))
    return reports


# --------------------------------------------------------------------------
# Continuous oracles on the LQR plant
# --------------------------------------------------------------------------


def action_grid(lqr: LqrEnv, levels=GRID_LEVELS):
    """Cartesian grid of ``levels`` evenly spaced values per action component."""
    axis = np.linspace(-lqr.u_max, lqr.u_max, levels)
    mesh = np.meshgrid(*([axis] * lqr.m), indexing="ij")
    return np.stack([g.ravel() for g in mesh], axis=-1)


def _quad(S, z):
    return np.einsum("...i,ij,...j->...", z, S, z)


class _SampledLqr:
    """Exact zero-order-hold transition and ``Q^delta`` for one sampling time."""

    def __init__(self, lqr: LqrEnv, delta):
        self.lqr = lqr
        self.delta = delta
        self.Phi = lqr.transition_matrix(delta)
        self.S = lqr.q_delta_matrix(delta)

    def step(self, x, u):
        z = joint_regressor(x, u)
        return z @ self.Phi.T, _quad(self.S, z)


def _merge(states, values, sense):
    """Collapse numerically identical states, keeping the best value."""
    scale = max(1.0, float(np.abs(states).max()))
    keys = np.round(states / (scale * 1e-11)).astype(np.int64)
    order = np.lexsort(keys.T[::-1])
    keys, states, values = keys[order], states[order], values[order]
    new = np.ones(len(keys), dtype=bool)
    new[1:] = np.any(keys[1:] != keys[:-1], axis=1)
    starts = np.flatnonzero(new)
    reduce = np.minimum if sense == "min" else np.maximum
    return states[starts], reduce.reduceat(values, starts)


def stack_extremum(lqr: LqrEnv, x0, delta, N, grid, sense="min", stats=None):
    """Exact min (or max) of ``sum_i Q^delta(x_i, u_i) + J*(x_N)`` over ``grid``.

    Forward dynamic programming over reachable states; states reached by
    different action orders are merged. ``stats``, when given, collects the
    largest running cost, vector-field norm and state norm seen.
    """
    if N < 2:
        raise ContractViolation("horizon N must be >= 2")
    model = _SampledLqr(lqr, delta)
    W = lqr.weight_matrix
    states = np.asarray(x0, dtype=float)[None]
    values = np.zeros(1)
    for _ in range(N - 1):
        xs = np.repeat(states, len(grid), axis=0)
        us = np.tile(grid, (len(states), 1))
        nxt, q = model.step(xs, us)
        if stats is not None:
            z = np.concatenate([xs, us], axis=-1)
            stats["r"] = max(stats.get("r", 0.0), float(_quad(W, z).max()))
            stats["f"] = max(stats.get("f", 0.0), float(np.linalg.norm(lqr.f(xs, us), axis=-1).max()))
            stats["x"] = max(stats.get("x", 0.0), float(np.linalg.norm(nxt, axis=-1).max()))
        states, values = _merge(nxt, np.repeat(values, len(grid)) + q, sense)
        if len(states) > MAX_LAYER:
            raise EnumerationTooLarge(f"{len(states)} reachable states exceed {MAX_LAYER}")
    total = values + lqr.j_star(states)
    return float(total.min() if sense == "min" else total.max())


def greedy_stack_sum(lqr: LqrEnv, x0, delta, N, grid):
    """``sum_i min_u Q^delta(x_i, u) + J*(x_N)`` along the greedy roll-forward."""
    model = _SampledLqr(lqr, delta)
    x = np.asarray(x0, dtype=float)
    total = 0.0
    for _ in range(N - 1):
        nxt, q = model.step(np.broadcast_to(x, (len(grid), lqr.n)), grid)
        j = int(np.argmin(q))
        total += float(q[j])
        x = nxt[j]
    return total + float(lqr.j_star(x))


@dataclass
class SweepPoint:
    delta: float
    N: int
    stack_min: float
    elementwise: float
    gap: float
    bound: float
    r_bar: float
    f_bar: float
    radius: float

    @property
    def within_bound(self):
        return abs(self.gap) <= self.bound

    def to_dict(self):
        out = asdict(self)
        out["within_bound"] = self.within_bound
        return out


def horizon_for(delta, lookahead):
    return max(2, int(round(lookahead / delta)))


def delta_sweep_gap(
    lqr: LqrEnv,
    x0,
    deltas,
    lookahead: float = 1.0,
    levels: int = GRID_LEVELS,
    fixed_N: Optional[int] = None,
):
    """Stack-minimum minus element-wise-minimum sum across sampling times.

    By default ``N = lookahead / delta`` so the covered time stays fixed; pass
    ``fixed_N`` to hold the number of intervals fixed instead. Each point also
    carries the proof-style magnitude bound
    ``2 r_bar (N-1) delta + 2 N omega_V(N delta f_bar)`` with
    ``omega_V(s) = 2 rho lambda_max(P) s`` on the visited ball of radius ``rho``.
    """
    grid = action_grid(lqr, levels)
    lam = float(np.linalg.eigvalsh(lqr.P).max())
    disc = math.exp(-lqr.gamma)
    out = []
    for delta in deltas:
        N = fixed_N if fixed_N is not None else horizon_for(delta, lookahead)
        stats = {"x": float(np.linalg.norm(x0))}
        smin = stack_extremum(lqr, x0, delta, N, grid, "min", stats)
        emin = greedy_stack_sum(lqr, x0, delta, N, grid)
        omega = 2.0 * stats["x"] * lam * (N * delta * stats["f"])
        bound = 2.0 * disc * stats["r"] * (N - 1) * delta + 2.0 * N * omega
        out.append(
            SweepPoint(delta, N, smin, emin, smin - emin, bound, stats["r"], stats["f"], stats["x"])
        )
    return out


@dataclass
class CollapseRow:
    delta: float
    N: int
    spread_q: float
    spread_stack: float

    @property
    def spread_stack_per_interval(self):
        return self.spread_stack / (self.N - 1)

    def to_dict(self):
        out = asdict(self)
        out["spread_stack_per_interval"] = self.spread_stack_per_interval
        return out


def q_collapse_diagnostic(lqr: LqrEnv, x, deltas, lookahead=1.0, levels=GRID_LEVELS):
    """Action sensitivity of ``Q^delta`` and of the stack as ``delta`` shrinks.

    ``spread_q`` is ``max_u Q^delta(x, u) - min_u Q^delta(x, u)`` over the
    action grid; ``spread_stack`` is the same for the stacked objective with
    ``N = ceil(lookahead / delta)``.
    """
    grid = action_grid(lqr, levels)
    x = np.asarray(x, dtype=float)
    rows = []
    for delta in deltas:
        _, q = _SampledLqr(lqr, delta).step(np.broadcast_to(x, (len(grid), lqr.n)), grid)
        N = max(2, math.ceil(lookahead / delta - 1e-9))
        hi = stack_extremum(lqr, x, delta, N, grid, "max")
        lo = stack_extremum(lqr, x, delta, N, grid, "min")
        rows.append(CollapseRow(float(delta), N, float(q.max() - q.min()), hi - lo))
    return rows


def decomposition_check(
    lqr: LqrEnv, x_k, stack, delta, N=None, tol=CONTINUOUS_TOL, substeps=200, instance="lqr"
):
    """Critic stack versus stage-cost integral plus intermediate optimal costs.

    With exact critics ``Q^delta`` and ``J*`` installed, the discounted stack
    ``sum_i e^{-gamma (i-1) delta} Q(x_i, u_i)`` equals the integral of
    ``e^{-gamma t} r`` over the horizon plus ``sum_i e^{-gamma i delta} J*(x_{i+1})``.
    Both sides use the same fine RK4 trajectory.
    """
    stack = np.asarray(stack, dtype=float).reshape(-1, lqr.m)
    if N is not None and len(stack) != N - 1:
        raise ContractViolation("stack length must be N - 1")
    gamma = lqr.gamma
    w = weights_from_matrix(lqr.q_delta_matrix(delta))
    v = weights_from_matrix(lqr.P)
    dyn, sc = lqr.dynamics, StageCost(tuple(np.diag(lqr.weight_matrix)))
    x = np.asarray(x_k, dtype=float)
    lhs = rhs = 0.0
    for i, u in enumerate(stack):
        t0 = i * delta
        lhs += math.exp(-gamma * t0) * float(q_hat(w, x, u))
        rhs += float(stage_integral(dyn, sc, x, u, t0, delta, gamma, substeps))
        x = integrate_step(dyn, x, u, delta, substeps)
        rhs += math.exp(-gamma * (t0 + delta)) * float(j_hat(v, x))
    gap = abs(lhs - rhs)
    return TheoremReport("decomposition", instance, lhs, rhs, gap, _verdict(gap, tol), tol)


# --------------------------------------------------------------------------
# Aggregate report
# --------------------------------------------------------------------------


def run_all(seed=0):
    """Every oracle with its default instance, as JSON-ready dictionaries."""
    reports = [r.to_dict() for r in finite_suite(seed=seed)]
    lqr = double_integrator()
    x0 = np.array([1.0, 0.0])
    sweep = delta_sweep_gap(lqr, x0, [0.2, 0.1, 0.05, 0.025, 0.0125])
    collapse = q_collapse_diagnostic(lqr, x0, [0.1, 0.05, 0.01])
    rng = np.random.default_rng(seed)
    for gamma in (0.0, 0.5):
        env = double_integrator(gamma=gamma)
        for j in range(20):
            stack = rng.uniform(-env.u_max, env.u_max, size=(5, 1))
            rep = decomposition_check(env, x0, stack, 0.05, 6, instance=f"gamma={gamma}[{j}]")
            reports.append(rep.to_dict())
    return {
        "reports": reports,
        "delta_sweep": [p.to_dict() for p in sweep],
        "q_collapse": [row.to_dict() for row in collapse],
    }
