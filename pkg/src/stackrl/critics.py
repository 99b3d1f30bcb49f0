"""
Linear double critic over quadratic features, experience replay and the
least-squares TD update.

Feature ordering: the symmetric outer product ``z z^T`` is read diagonal by
diagonal, ``k = i - j = 0, 1, ...``, and within a diagonal by ascending row
index ``i``. Each off-diagonal product ``z_i z_j`` therefore appears once, so a
quadratic form ``z^T S z`` is encoded with doubled off-diagonal weights.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from stackrl.errors import ContractViolation, UpdateFailed

FEATURE_ORDER = "diagonal-concatenation: k=i-j ascending, row i ascending; off-diagonals once"
DEFAULT_REPLAY = 20
DEFAULT_RIDGE = 1e-8


@lru_cache(maxsize=None)
def _diag_index(dim):
    rows, cols = [], []
    for k in range(dim):
        for i in range(k, dim):
            rows.append(i)
            cols.append(i - k)
    return np.array(rows), np.array(cols)


def feature_dim(dim):
    return dim * (dim + 1) // 2


def quadratic_features(z):
    z = np.asarray(z, dtype=float)
    rows, cols = _diag_index(z.shape[-1])
    return z[..., rows] * z[..., cols]


def joint_regressor(x, u):
    """``[x; u]`` along the last axis, broadcasting only the batch dims."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    batch = np.broadcast_shapes(x.shape[:-1], u.shape[:-1])
    return np.concatenate(
        [np.broadcast_to(x, batch + x.shape[-1:]), np.broadcast_to(u, batch + u.shape[-1:])],
        axis=-1,
    )


def phi_q(x, u):
    """Quadratic features over the joint regressor ``[x; u]``."""
    return quadratic_features(joint_regressor(x, u))


def phi_v(x):
    return quadratic_features(x)


def weights_from_matrix(S):
    """Weight vector reproducing ``z^T S z`` for symmetric ``S``."""
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ContractViolation("S must be square")
    S = 0.5 * (S + S.T)
    rows, cols = _diag_index(S.shape[0])
    return np.where(rows == cols, 1.0, 2.0) * S[rows, cols]


def matrix_from_weights(w, dim):
    rows, cols = _diag_index(dim)
    w = np.asarray(w, dtype=float)
    if w.shape != (feature_dim(dim),):
        raise ContractViolation("weight vector does not match dimension")
    S = np.zeros((dim, dim))
    off = rows != cols
    S[rows, cols] = np.where(off, 0.5 * w, w)
    S[cols[off], rows[off]] = 0.5 * w[off]
    return S


def _check(w, feats):
    if np.shape(w)[-1] != feats.shape[-1]:
        raise ContractViolation(
            f"weight dimension {np.shape(w)[-1]} does not match feature dimension {feats.shape[-1]}"
        )


def q_hat(w, x, u):
    feats = phi_q(x, u)
    _check(w, feats)
    return feats @ np.asarray(w, dtype=float)


def j_hat(v, x):
    feats = phi_v(x)
    _check(v, feats)
    return feats @ np.asarray(v, dtype=float)


@dataclass
class CriticWeights:
    w: np.ndarray
    v: np.ndarray
    k: int = 0

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        if not (np.all(np.isfinite(self.w)) and np.all(np.isfinite(self.v))):
            raise ContractViolation("critic weights must be finite")

    @classmethod
    def zeros(cls, n, m):
        return cls(np.zeros(feature_dim(n + m)), np.zeros(feature_dim(n)))

    def to_json(self):
        return {
            "feature_order": FEATURE_ORDER,
            "d_q": int(self.w.size),
            "d_v": int(self.v.size),
            "k": int(self.k),
            "weights": [float(a) for a in self.w] + [float(a) for a in self.v],
        }

    @classmethod
    def from_json(cls, payload):
        if payload.get("feature_order") != FEATURE_ORDER:
            raise ContractViolation("unknown feature ordering in weight snapshot")
        d_q = payload["d_q"]
        flat = np.asarray(payload["weights"], dtype=float)
        if flat.size != d_q + payload["d_v"]:
            raise ContractViolation("weight snapshot has the wrong length")
        return cls(flat[:d_q], flat[d_q:], payload.get("k", 0))

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_json(), indent=2))

    @classmethod
    def load(cls, path):
        return cls.from_json(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class Transition:
    """One replayed interval; ``r`` is the realized stage integral."""

    x: np.ndarray
    u: np.ndarray
    x_next: np.ndarray
    u_next: np.ndarray
    r: float
    index: int = -1


@dataclass
class ReplayBuffer:
    """FIFO window of the most recent transitions."""

    capacity: int = DEFAULT_REPLAY
    _items: deque = field(default_factory=deque, repr=False)

    def __post_init__(self):
        if self.capacity < 2:
            raise ContractViolation("replay capacity must be >= 2")

    def push(self, tr: Transition):
        self._items.append(tr)
        while len(self._items) > self.capacity:
            self._items.popleft()

    def __len__(self):
        return len(self._items)

    def __iter__(self):
        return iter(self._items)

    @property
    def full(self):
        return len(self._items) == self.capacity

    def arrays(self):
        items = list(self._items)
        return (
            np.array([t.x for t in items]),
            np.array([t.u for t in items]),
            np.array([t.x_next for t in items]),
            np.array([t.u_next for t in items]),
            np.array([t.r for t in items], dtype=float),
        )


def td_residual_q(w_k, w_prev, tr: Transition, gamma, delta):
    boot = np.exp(-gamma * delta) * q_hat(w_prev, tr.x_next, tr.u_next)
    return float(q_hat(w_k, tr.x, tr.u) - boot - tr.r)


def td_residual_v(v_k, v_prev, tr: Transition, gamma, delta):
    boot = np.exp(-gamma * delta) * j_hat(v_prev, tr.x_next)
    return float(j_hat(v_k, tr.x) - boot - tr.r)


def _td_blocks(buffer, w_prev, v_prev, gamma, delta):
    x, u, xn, un, r = buffer.arrays()
    disc = np.exp(-gamma * delta)
    fq = phi_q(x, u)
    fv = phi_v(x)
    tq = disc * (phi_q(xn, un) @ w_prev) + r
    tv = disc * (phi_v(xn) @ v_prev) + r
    return fq, tq, fv, tv


def critic_objective(buffer, w, v, w_prev, v_prev, gamma, delta):
    """``0.5 * sum e_j(w)^2 + 0.5 * sum e_j(v)^2`` over the replay window."""
    fq, tq, fv, tv = _td_blocks(buffer, np.asarray(w_prev), np.asarray(v_prev), gamma, delta)
    return 0.5 * float(np.sum((fq @ w - tq) ** 2) + np.sum((fv @ v - tv) ** 2))


def _ridge_solve(F, t, ridge):
    d = F.shape[1]
    A = np.vstack([F, np.sqrt(ridge) * np.eye(d)])
    b = np.concatenate([t, np.zeros(d)])
    sol, *_ = np.linalg.lstsq(A, b, rcond=None)
    return sol


def normal_residual(F, t, sol, ridge):
    return (F.T @ F + ridge * np.eye(F.shape[1])) @ sol - F.T @ t


def critic_update(
    buffer: ReplayBuffer,
    w_prev,
    v_prev,
    gamma: float,
    delta: float,
    ridge: float = DEFAULT_RIDGE,
    k: int = 0,
) -> CriticWeights:
    """Closed-form minimizer of the replayed TD objective with frozen targets.

    The Q- and V-blocks decouple and are solved separately as ridge-regularized
    least squares.
    """
    if len(buffer) < 2:
        raise ContractViolation("critic update needs at least two transitions")
    ridge = max(float(ridge), DEFAULT_RIDGE)
    w_prev = np.asarray(w_prev, dtype=float)
    v_prev = np.asarray(v_prev, dtype=float)
    fq, tq, fv, tv = _td_blocks(buffer, w_prev, v_prev, gamma, delta)
    if not (np.all(np.isfinite(tq)) and np.all(np.isfinite(tv))):
        raise UpdateFailed("non-finite TD targets")
    w = _ridge_solve(fq, tq, ridge)
    v = _ridge_solve(fv, tv, ridge)
    if not (np.all(np.isfinite(w)) and np.all(np.isfinite(v))):
        raise UpdateFailed("critic solve produced non-finite weights")
    return CriticWeights(w, v, k)
