import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import solve_discrete_are

from stackrl.critics import (
    FEATURE_ORDER,
    CriticWeights,
    ReplayBuffer,
    _ridge_solve,
    Transition,
    critic_objective,
    critic_update,
    feature_dim,
    j_hat,
    matrix_from_weights,
    normal_residual,
    phi_q,
    phi_v,
    q_hat,
    td_residual_q,
    td_residual_v,
    weights_from_matrix,
)
from stackrl.errors import ContractViolation, UpdateFailed

SQRT3 = math.sqrt(3.0)


def euler_lq(delta=0.1):
    """Euler-discretized double integrator and its discrete Riccati oracle."""
    G = np.eye(2) + delta * np.array([[0.0, 1.0], [0.0, 0.0]])
    H = delta * np.array([[0.0], [1.0]])
    Qd, Rd = delta * np.eye(2), delta * np.eye(1)
    P = solve_discrete_are(G, H, Qd, Rd)
    K = np.linalg.solve(Rd + H.T @ P @ H, H.T @ P @ G)
    S = np.block([[Qd + G.T @ P @ G, G.T @ P @ H], [H.T @ P @ G, Rd + H.T @ P @ H]])
    return G, H, Qd, Rd, P, K, S


def on_policy_transitions(count=20, x0=(1.0, 0.0), delta=0.1):
    G, H, Qd, Rd, P, K, S = euler_lq(delta)
    x = np.array(x0)
    out = []
    for j in range(count):
        u = -K @ x
        xn = G @ x + H @ u
        r = float(x @ Qd @ x + u @ Rd @ u)
        out.append(Transition(x, u, xn, -K @ xn, r, j))
        x = xn
    return out


class TestFeatures:
    def test_joint_expansion(self):
        np.testing.assert_array_equal(phi_q(np.array([1.0]), np.array([2.0])), [1.0, 4.0, 2.0])

    def test_value_expansion(self):
        np.testing.assert_array_equal(phi_v(np.array([1.0, 2.0])), [1.0, 4.0, 2.0])

    def test_zero_inputs(self):
        assert not phi_q(np.zeros(3), np.zeros(2)).any()
        assert phi_q(np.zeros(3), np.zeros(2)).shape == (15,)
        assert phi_v(np.zeros(3)).shape == (6,)

    def test_order_three(self):
        # diagonal, then (1,0), (2,1), then (2,0)
        np.testing.assert_array_equal(phi_v(np.array([1.0, 2.0, 3.0])), [1, 4, 9, 2, 6, 3])

    @pytest.mark.parametrize("n", range(1, 7))
    @pytest.mark.parametrize("m", range(0, 4))
    def test_dimensions(self, n, m):
        assert phi_q(np.ones(n), np.ones(m)).shape == (feature_dim(n + m),) == ((n + m) * (n + m + 1) // 2,)
        assert phi_v(np.ones(n)).shape == (n * (n + 1) // 2,)

    def test_batched(self):
        x = np.arange(6.0).reshape(3, 2)
        u = np.ones((3, 1))
        batched = phi_q(x, u)
        for i in range(3):
            np.testing.assert_array_equal(batched[i], phi_q(x[i], u[i]))

    def test_reconstruction(self):
        rng = np.random.default_rng(0)
        worst = 0.0
        for _ in range(100):
            n = int(rng.integers(1, 6))
            A = rng.normal(size=(n, n))
            S = A + A.T
            x = rng.normal(size=n)
            worst = max(worst, abs(j_hat(weights_from_matrix(S), x) - x @ S @ x))
        assert worst < 1e-10

    def test_matrix_round_trip(self):
        S = np.array([[2.0, 0.5, -1.0], [0.5, 1.0, 0.3], [-1.0, 0.3, 4.0]])
        np.testing.assert_allclose(matrix_from_weights(weights_from_matrix(S), 3), S)


class TestCriticValues:
    def test_zero_weights(self):
        assert q_hat(np.zeros(15), np.ones(3), np.ones(2)) == 0.0

    def test_unit_weights(self):
        assert j_hat(np.ones(3), np.array([1.0, 2.0])) == 7.0

    def test_riccati_weights(self):
        v = np.array([SQRT3, SQRT3, 2.0])
        assert j_hat(v, np.array([1.0, 0.0])) == pytest.approx(1.7320508, abs=1e-7)
        np.testing.assert_allclose(weights_from_matrix([[SQRT3, 1.0], [1.0, SQRT3]]), v)

    def test_dimension_mismatch(self):
        with pytest.raises(ContractViolation):
            q_hat(np.zeros(10), np.ones(3), np.ones(2))
        with pytest.raises(ContractViolation):
            j_hat(np.zeros(4), np.ones(2))

    @given(
        st.floats(-5, 5),
        st.floats(-5, 5),
        st.lists(st.floats(-3, 3), min_size=3, max_size=3),
        st.integers(0, 2**31),
    )
    def test_linearity(self, a, b, z, seed):
        rng = np.random.default_rng(seed)
        w1, w2 = rng.normal(size=6), rng.normal(size=6)
        x, u = np.array(z[:2]), np.array(z[2:])
        lhs = q_hat(a * w1 + b * w2, x, u)
        rhs = a * q_hat(w1, x, u) + b * q_hat(w2, x, u)
        assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-9)


class TestResiduals:
    tr = Transition(np.array([1.0, 0.5]), np.array([0.2]), np.array([0.9, 0.4]), np.array([0.1]), 0.37)

    def test_zero_weights(self):
        assert td_residual_q(np.zeros(6), np.zeros(6), self.tr, 0.0, 0.1) == pytest.approx(-0.37)
        assert td_residual_v(np.zeros(3), np.zeros(3), self.tr, 0.0, 0.1) == pytest.approx(-0.37)

    def test_vanishing_bootstrap(self):
        rng = np.random.default_rng(1)
        w, w_prev = rng.normal(size=6), rng.normal(size=6)
        v, v_prev = rng.normal(size=3), rng.normal(size=3)
        tr = self.tr
        assert td_residual_q(w, w_prev, tr, 1e6, 0.1) == pytest.approx(q_hat(w, tr.x, tr.u) - tr.r)
        assert td_residual_v(v, v_prev, tr, 1e6, 0.1) == pytest.approx(j_hat(v, tr.x) - tr.r)

    def test_exact_lq_weights(self):
        *_, P, K, S = euler_lq()
        w, v = weights_from_matrix(S), weights_from_matrix(P)
        for tr in on_policy_transitions():
            assert abs(td_residual_q(w, w, tr, 0.0, 0.1)) < 1e-8
            assert abs(td_residual_v(v, v, tr, 0.0, 0.1)) < 1e-8


class TestReplay:
    def test_fifo(self):
        buf = ReplayBuffer(3)
        for j in range(5):
            buf.push(Transition(np.array([j]), np.array([0.0]), np.array([j + 1]), np.array([0.0]), 0.0, j))
        assert len(buf) == 3 and buf.full
        assert [t.index for t in buf] == [2, 3, 4]

    def test_contiguous_entries_share_states(self):
        buf = ReplayBuffer(20)
        for tr in on_policy_transitions(25):
            buf.push(tr)
        items = list(buf)
        for a, b in zip(items, items[1:]):
            assert np.array_equal(a.x_next, b.x)

    def test_capacity(self):
        with pytest.raises(ContractViolation):
            ReplayBuffer(1)


def _fill(transitions, capacity=None):
    buf = ReplayBuffer(capacity or len(transitions))
    for tr in transitions:
        buf.push(tr)
    return buf


class TestCriticUpdate:
    def test_single_repeated_transition(self):
        tr = Transition(np.array([2.0]), np.array([0.0]), np.array([1.0]), np.array([0.0]), 3.0)
        out = critic_update(_fill([tr, tr]), np.zeros(3), np.zeros(1), 0.0, 0.1)
        assert out.v[0] * 4.0 == pytest.approx(3.0, abs=1e-7)

    def test_zero_costs_give_zero_weights(self):
        trs = [Transition(np.array([1.0, j]), np.array([0.5]), np.array([0.3, 1.0]), np.array([0.1]), 0.0) for j in range(5)]
        out = critic_update(_fill(trs), np.zeros(6), np.zeros(3), 0.0, 0.1)
        assert not out.w.any() and not out.v.any()

    def test_recovers_discrete_riccati(self):
        *_, P, K, S = euler_lq()
        buf = _fill(on_policy_transitions(20))
        w, v = np.zeros(6), np.zeros(3)
        for k in range(2000):
            nxt = critic_update(buf, w, v, 0.0, 0.1, k=k)
            if np.abs(nxt.v - v).max() < 1e-13 and np.abs(nxt.w - w).max() < 1e-13:
                break
            w, v = nxt.w, nxt.v
        np.testing.assert_allclose(matrix_from_weights(v, 2), P, atol=1e-4)

    def test_needs_two_transitions(self):
        tr = on_policy_transitions(1)
        with pytest.raises(ContractViolation):
            critic_update(_fill(tr, 5), np.zeros(6), np.zeros(3), 0.0, 0.1)

    def test_non_finite_targets(self):
        trs = on_policy_transitions(3)
        bad = Transition(trs[0].x, trs[0].u, trs[0].x_next, trs[0].u_next, float("nan"))
        with pytest.raises(UpdateFailed):
            critic_update(_fill([bad, *trs]), np.zeros(6), np.zeros(3), 0.0, 0.1)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**31), st.floats(0.0, 2.0))
    def test_objective_never_increases(self, seed, gamma):
        rng = np.random.default_rng(seed)
        trs = [
            Transition(rng.normal(size=2), rng.normal(size=1), rng.normal(size=2), rng.normal(size=1), float(rng.uniform(0, 3)))
            for _ in range(8)
        ]
        buf = _fill(trs)
        w_prev, v_prev = rng.normal(size=6), rng.normal(size=3)
        out = critic_update(buf, w_prev, v_prev, gamma, 0.1)
        after = critic_objective(buf, out.w, out.v, w_prev, v_prev, gamma, 0.1)
        before = critic_objective(buf, w_prev, v_prev, w_prev, v_prev, gamma, 0.1)
        assert after <= before + 1e-9

    def test_normal_equation_residual(self):
        rng = np.random.default_rng(7)
        F = rng.normal(size=(20, 6))
        t = rng.normal(size=20)
        sol = _ridge_solve(F, t, 1e-8)
        assert np.abs(normal_residual(F, t, sol, 1e-8)).max() < 1e-8


class TestSerialization:
    def test_round_trip(self, tmp_path):
        cw = CriticWeights(np.arange(15.0), np.arange(6.0) / 7, k=42)
        path = tmp_path / "w.json"
        cw.save(path)
        payload = json.loads(path.read_text())
        assert payload["feature_order"] == FEATURE_ORDER
        assert payload["d_q"] == 15 and payload["d_v"] == 6 and len(payload["weights"]) == 21
        back = CriticWeights.load(path)
        assert np.array_equal(back.w, cw.w) and np.array_equal(back.v, cw.v) and back.k == 42

    def test_rejects_unknown_order(self):
        payload = CriticWeights.zeros(2, 1).to_json()
        payload["feature_order"] = "row-major"
        with pytest.raises(ContractViolation):
            CriticWeights.from_json(payload)

    def test_rejects_non_finite(self):
        with pytest.raises(ContractViolation):
            CriticWeights(np.array([np.nan]), np.zeros(1))
