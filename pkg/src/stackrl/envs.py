"""Concrete environments: three-wheel robot, LQR double integrator, and a
deterministic finite MDP family (the four-node chain plus random instances)."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.linalg import expm, solve_continuous_lyapunov

from stackrl.costs import DEFAULT_ROBOT_R, StageCost
from stackrl.critics import joint_regressor, weights_from_matrix
from stackrl.dynamics import Dynamics
from stackrl.errors import ContractViolation, OracleFailed

# TurtleBot3 Burger limits: linear [m/s], angular [rad/s].
ROBOT_V_MAX = 0.22
ROBOT_OMEGA_MAX = 2.84


@dataclass(frozen=True)
class Environment:
    """A continuous-time control task under sample-and-hold."""

    name: str
    dynamics: Dynamics
    stage_cost: StageCost
    low: np.ndarray
    high: np.ndarray
    state_names: tuple
    action_names: tuple
    reached: Callable[[np.ndarray, float, float], bool]
    sanity: Optional[Callable] = None

    @property
    def n(self):
        return self.dynamics.n

    @property
    def m(self):
        return self.dynamics.m


def robot_dynamics(s, u):
    """Unicycle kinematics: ``(v cos a, v sin a, omega)``."""
    s = np.asarray(s, dtype=float)
    u = np.asarray(u, dtype=float)
    alpha = s[..., 2]
    v = u[..., 0]
    return np.stack(
        np.broadcast_arrays(v * np.cos(alpha), v * np.sin(alpha), u[..., 1]), axis=-1
    )


def _robot_reached(x, pos_radius, ang_radius):
    return bool(np.hypot(x[0], x[1]) < pos_radius and abs(x[2]) < ang_radius)


def robot_displacement_ok(states, times, v_max=ROBOT_V_MAX, slack=1e-9):
    """Planar displacement never exceeds ``v_max * t`` (bounded trajectories)."""
    states = np.asarray(states)
    disp = np.hypot(states[:, 0] - states[0, 0], states[:, 1] - states[0, 1])
    return bool(np.all(disp <= v_max * (np.asarray(times) - times[0]) + slack))


def robot_env(R=DEFAULT_ROBOT_R, v_max=ROBOT_V_MAX, omega_max=ROBOT_OMEGA_MAX) -> Environment:
    return Environment(
        name="robot3w",
        dynamics=Dynamics(3, 2, robot_dynamics, "robot3w"),
        stage_cost=StageCost(tuple(R)),
        low=np.array([-v_max, -omega_max]),
        high=np.array([v_max, omega_max]),
        state_names=("x", "y", "alpha"),
        action_names=("v", "omega"),
        reached=_robot_reached,
        sanity=lambda states, times: robot_displacement_ok(states, times, v_max),
    )


# --------------------------------------------------------------------------
# LQR verification environment
# --------------------------------------------------------------------------


def care_residual(A, B, Q, R, P):
    Rinv = np.linalg.inv(np.atleast_2d(R))
    return A.T @ P + P @ A - P @ B @ Rinv @ B.T @ P + Q


def _bass_seed(A, B, Rinv):
    # Stabilizing gain from a shifted Lyapunov equation; needs (A, B) controllable.
    beta = max(0.0, float(np.max(np.linalg.eigvals(A).real))) + 1.0
    Ab = A + beta * np.eye(A.shape[0])
    X = solve_continuous_lyapunov(Ab, 2.0 * B @ B.T)
    try:
        return B.T @ np.linalg.inv(X)
    except np.linalg.LinAlgError as exc:
        raise OracleFailed("(A, B) is not controllable; no stabilizing seed") from exc


def care_solve(A, B, Q, R, tol=1e-10, max_iter=100):
    """Solve ``A'P + PA - P B R^-1 B' P + Q = 0`` by Kleinman's Newton iteration."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    Rinv = np.linalg.inv(R)
    if np.all(np.linalg.eigvals(A).real < 0):
        K = np.zeros((B.shape[1], A.shape[0]))
    else:
        K = _bass_seed(A, B, Rinv)
    if np.any(np.linalg.eigvals(A - B @ K).real >= 0):
        raise OracleFailed("could not find a stabilizing seed gain")
    P = None
    for _ in range(max_iter):
        Acl = A - B @ K
        P_new = solve_continuous_lyapunov(Acl.T, -(Q + K.T @ R @ K))
        P_new = 0.5 * (P_new + P_new.T)
        K = Rinv @ B.T @ P_new
        if P is not None and np.max(np.abs(P_new - P)) <= tol * max(1.0, np.max(np.abs(P_new))):
            P = P_new
            break
        P = P_new
    else:
        raise OracleFailed("Kleinman iteration did not converge")
    if np.max(np.abs(care_residual(A, B, Q, R, P))) > 1e-8:
        raise OracleFailed("Riccati residual above 1e-8")
    return P


@dataclass(frozen=True)
class LqrEnv:
    """Linear plant with quadratic cost and known optimal cost-to-go ``x'Px``.

    With ``gamma > 0`` the discounted problem is solved through the shifted
    drift ``A - gamma/2 I``.
    """

    A: np.ndarray
    B: np.ndarray
    Q_cost: np.ndarray
    R_cost: np.ndarray
    gamma: float = 0.0
    u_max: float = 2.0
    P: np.ndarray = field(default=None)

    def __post_init__(self):
        for name in ("A", "B", "Q_cost", "R_cost"):
            object.__setattr__(self, name, np.atleast_2d(np.asarray(getattr(self, name), dtype=float)))
        object.__setattr__(self, "B", self.B.reshape(self.A.shape[0], -1))
        if self.P is None:
            shifted = self.A - 0.5 * self.gamma * np.eye(self.n)
            object.__setattr__(self, "P", care_solve(shifted, self.B, self.Q_cost, self.R_cost))

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.B.shape[1]

    @property
    def gain(self):
        return np.linalg.solve(self.R_cost, self.B.T @ self.P)

    def feedback(self, x):
        return -np.asarray(x) @ self.gain.T

    def j_star(self, x):
        x = np.asarray(x, dtype=float)
        return np.einsum("...i,ij,...j->...", x, self.P, x)

    def f(self, x, u):
        return np.asarray(x) @ self.A.T + np.asarray(u) @ self.B.T

    @property
    def dynamics(self):
        return Dynamics(self.n, self.m, self.f, "lqr")

    @property
    def stage_cost(self):
        W = self.weight_matrix
        if np.any(W != np.diag(np.diag(W))):
            raise ContractViolation("StageCost needs diagonal cost matrices")
        return StageCost(tuple(np.diag(W)))

    @property
    def weight_matrix(self):
        n, m = self.n, self.m
        W = np.zeros((n + m, n + m))
        W[:n, :n] = self.Q_cost
        W[n:, n:] = self.R_cost
        return W

    def _augmented(self):
        n, m = self.n, self.m
        F = np.zeros((n + m, n + m))
        F[:n, :n] = self.A
        F[:n, n:] = self.B
        return F

    def transition_matrix(self, delta):
        """``[x'; u] -> x(delta)`` under zero-order hold."""
        return expm(self._augmented() * delta)[: self.n]

    def cost_matrix(self, delta, gamma=None):
        """Exact ``int_0^delta e^{-gamma t} r dt`` as a quadratic form in ``[x; u]``."""
        gamma = self.gamma if gamma is None else gamma
        d = self.n + self.m
        Fg = self._augmented() - 0.5 * gamma * np.eye(d)
        M = np.zeros((2 * d, 2 * d))
        M[:d, :d] = -Fg.T
        M[:d, d:] = self.weight_matrix
        M[d:, d:] = Fg
        E = expm(M * delta)
        G = E[d:, d:].T @ E[:d, d:]
        return 0.5 * (G + G.T)

    def q_delta_matrix(self, delta, gamma=None):
        """Exact sampled Q-function ``int r + e^{-gamma delta} J*(x(delta))``."""
        gamma = self.gamma if gamma is None else gamma
        Phi = self.transition_matrix(delta)
        S = self.cost_matrix(delta, gamma) + np.exp(-gamma * delta) * Phi.T @ self.P @ Phi
        return 0.5 * (S + S.T)

    def euler_q_matrix(self, delta, gamma=None):
        """Sampled Q-function on the Euler prediction grid (left-rectangle cost)."""
        gamma = self.gamma if gamma is None else gamma
        G = np.hstack([np.eye(self.n) + delta * self.A, delta * self.B])
        S = delta * self.weight_matrix + np.exp(-gamma * delta) * G.T @ self.P @ G
        return 0.5 * (S + S.T)

    def exact_critics(self, delta, euler=False):
        """Weights ``(w, v)`` encoding ``Q^delta`` and ``J*`` exactly."""
        S = self.euler_q_matrix(delta) if euler else self.q_delta_matrix(delta)
        return weights_from_matrix(S), weights_from_matrix(self.P)

    def q_delta(self, x, u, delta):
        z = joint_regressor(x, u)
        S = self.q_delta_matrix(delta)
        return np.einsum("...i,ij,...j->...", z, S, z)

    def as_environment(self, pos_radius_norm=True) -> Environment:
        return Environment(
            name="lqr2d",
            dynamics=self.dynamics,
            stage_cost=self.stage_cost,
            low=-self.u_max * np.ones(self.m),
            high=self.u_max * np.ones(self.m),
            state_names=tuple(f"x{i + 1}" for i in range(self.n)),
            action_names=tuple(f"u{i + 1}" for i in range(self.m)),
            reached=lambda x, pos, ang: bool(np.linalg.norm(x) < pos),
        )


def double_integrator(gamma=0.0, u_max=2.0) -> LqrEnv:
    return LqrEnv(
        A=[[0.0, 1.0], [0.0, 0.0]],
        B=[[0.0], [1.0]],
        Q_cost=np.eye(2),
        R_cost=np.eye(1),
        gamma=gamma,
        u_max=u_max,
    )


# --------------------------------------------------------------------------
# Deterministic finite MDPs
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ChainMdp:
    """Deterministic MDP: ``edges[s]`` lists ``(successor, cost)`` per action."""

    states: tuple
    edges: dict
    start: object
    horizon: int = 50

    def __post_init__(self):
        for s in self.states:
            if not self.edges.get(s):
                raise ContractViolation(f"state {s!r} has no actions")
            for succ, cost in self.edges[s]:
                if succ not in self.edges:
                    raise ContractViolation(f"successor {succ!r} of {s!r} does not exist")
                if not np.isfinite(cost):
                    raise ContractViolation("edge costs must be finite")

    def actions(self, s):
        return range(len(self.edges[s]))

    def step(self, s, a):
        return self.edges[s][a]

    def optimal_cost_to_go(self):
        """Undiscounted ``J*`` by backward induction, iterated to its fixed point.

        States that cannot reach a zero-cost cycle within ``horizon`` sweeps
        keep growing and are reported as ``inf``.
        """
        J = {s: 0 for s in self.states}
        for _ in range(self.horizon):
            nxt = {s: min(c + J[t] for t, c in self.edges[s]) for s in self.states}
            if nxt == J:
                return J
            J = nxt
        stable = {s: min(c + J[t] for t, c in self.edges[s]) == J[s] for s in self.states}
        return {s: (J[s] if stable[s] else float("inf")) for s in self.states}


def chain_fixture() -> ChainMdp:
    """Four-node chain: ``x0 -2-> C -2-> Y`` and ``x0 -10-> K -10-> Y``, ``Y`` absorbing at 0."""
    return ChainMdp(
        states=("x0", "C", "K", "Y"),
        edges={
            "x0": (("C", 2), ("K", 10)),
            "C": (("Y", 2),),
            "K": (("Y", 10),),
            "Y": (("Y", 0),),
        },
        start="x0",
    )


def random_mdp(rng, n_states=5, n_actions=3, max_cost=9) -> ChainMdp:
    """Random deterministic MDP with integer costs and an absorbing zero-cost goal.

    Draws are rejected until every state has a finite optimal cost-to-go.
    """
    goal = n_states - 1
    while True:
        edges = {goal: tuple((goal, 0) for _ in range(n_actions))}
        for s in range(goal):
            succ = rng.integers(0, n_states, size=n_actions)
            cost = rng.integers(0, max_cost + 1, size=n_actions)
            edges[s] = tuple((int(t), int(c)) for t, c in zip(succ, cost))
        mdp = ChainMdp(tuple(range(n_states)), edges, start=0, horizon=200)
        if all(np.isfinite(v) for v in mdp.optimal_cost_to_go().values()):
            return mdp


def make_env(name, **kwargs):
    if name == "robot3w":
        return robot_env(**kwargs)
    if name == "lqr2d":
        return double_integrator(**kwargs).as_environment()
    if name == "chain":
        return chain_fixture()
    raise ContractViolation(f"unknown environment {name!r}")
