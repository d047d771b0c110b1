"""Estimator formulas, bound constants, and statistical envelope checks."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cmdpbarrier import (
    EstimateBundle,
    MarginError,
    SoftmaxPolicy,
    TabularCmdp,
    Trajectory,
    TrajectoryBatch,
    error_bounds,
    estimate_barrier_gradient,
    estimate_bundle,
    estimate_gradient_gpomdp,
    estimate_smoothness,
    estimate_value,
    exact_gradient,
    exact_values,
    lipschitz_and_smoothness,
    required_sample_size,
    sample_batch,
)
from conftest import (
    fd_value_hessian,
    make_single_action,
    make_two_state,
    random_policy,
)


def naive_gpomdp(batch, policy, i, gamma):
    """Literal O(H^2) triple sum; the algorithmic-equivalence oracle."""
    total = np.zeros(policy.dim)
    for j in range(batch.n):
        for t in range(batch.horizon):
            w = gamma**t * batch.rewards[i, j, t]
            for tp in range(t + 1):
                total += w * policy.grad_log_prob(
                    int(batch.states[j, tp]), int(batch.actions[j, tp])
                )
    return total / batch.n


def one_trajectory_batch(states, actions, rewards):
    return TrajectoryBatch.from_trajectories(
        [Trajectory(np.array(states), np.array(actions), np.array(rewards, dtype=float))]
    )


def test_value_direct_formula():
    batch = one_trajectory_batch([0, 0, 0], [0, 0, 0], [[1.0, 1.0, 1.0]])
    assert estimate_value(batch, 0, 0.5) == pytest.approx(1.75, abs=1e-15)


def test_value_zero_rewards():
    batch = one_trajectory_batch([0, 1, 0], [0, 0, 0], [[0.0, 0.0, 0.0]])
    assert estimate_value(batch, 0, 0.9) == 0.0


def test_value_geometric_truncation():
    cmdp = make_single_action(gamma=0.7)
    policy = SoftmaxPolicy.uniform(1, 1)
    batch = sample_batch(cmdp, policy, 4, 50, np.random.default_rng(0))
    v_hat = estimate_value(batch, 0, 0.7)
    assert v_hat == pytest.approx((1.0 - 0.7**50) / 0.3, abs=1e-12)
    exact = exact_values(cmdp, policy, 0)[1]
    # the truncation bound is exactly tight for constant rewards
    assert abs(exact - v_hat) <= error_bounds(4, 50, 0.7).b0 * (1.0 + 1e-9)


def test_value_bound_invariant(two_state):
    policy = random_policy(np.random.default_rng(2), two_state)
    batch = sample_batch(two_state, policy, 100, 30, np.random.default_rng(3))
    bundle = estimate_bundle(batch, policy, two_state.discount, two_state.reward_bounds)
    assert np.all(
        np.abs(bundle.values) <= two_state.reward_bounds / (1.0 - two_state.discount) + 1e-12
    )


def test_gpomdp_single_action_zero():
    cmdp = make_single_action()
    policy = SoftmaxPolicy.uniform(1, 1)
    batch = sample_batch(cmdp, policy, 10, 5, np.random.default_rng(1))
    assert np.all(estimate_gradient_gpomdp(batch, policy, 0, 0.7) == 0.0)


def test_gpomdp_hand_computed():
    # One trajectory, H=1, uniform 2-action policy, action 0, reward 1:
    # gamma^0 * r * (e_0 - pi) = [0.5, -0.5].
    policy = SoftmaxPolicy.uniform(1, 2)
    batch = one_trajectory_batch([0], [0], [[1.0]])
    grad = estimate_gradient_gpomdp(batch, policy, 0, 0.9)
    assert grad == pytest.approx([0.5, -0.5], abs=1e-15)


def test_gpomdp_equals_naive_triple_sum(two_state):
    rng = np.random.default_rng(5)
    for scale in (0.2, 1.0):
        policy = random_policy(rng, two_state, scale=scale)
        batch = sample_batch(two_state, policy, 25, 11, rng)
        for i in range(two_state.num_signals):
            fast = estimate_gradient_gpomdp(batch, policy, i, two_state.discount)
            slow = naive_gpomdp(batch, policy, i, two_state.discount)
            assert np.max(np.abs(fast - slow)) <= 1e-12


def test_gpomdp_envelope_vs_exact_gradient(two_state):
    policy = random_policy(np.random.default_rng(8), two_state, scale=0.5)
    n, H = 100_000, 40
    batch = sample_batch(two_state, policy, n, H, np.random.default_rng(21))
    grad_hat = estimate_gradient_gpomdp(batch, policy, 0, two_state.discount)
    exact = exact_gradient(two_state, policy, 0)
    b = error_bounds(n, H, two_state.discount)
    assert np.linalg.norm(grad_hat - exact) <= b.b1 + 3.0 * b.sigma1


def test_value_mean_envelope(two_state):
    # Mean of 1e4 single-trajectory estimates == one batch of n=1e4.
    policy = random_policy(np.random.default_rng(13), two_state, scale=0.5)
    n, H = 10_000, 40
    batch = sample_batch(two_state, policy, n, H, np.random.default_rng(14))
    v_hat = estimate_value(batch, 0, two_state.discount)
    exact = exact_values(two_state, policy, 0)[1]
    b = error_bounds(n, H, two_state.discount)
    assert abs(v_hat - exact) <= b.b0 + 3.0 * b.sigma0


def test_barrier_gradient_passthrough_unconstrained():
    bundle = EstimateBundle(
        values=np.array([0.3]),
        gradients=np.array([[1.0, -2.0]]),
        bounds=[error_bounds(10, 10, 0.5)],
        n=10,
        horizon=10,
    )
    grad = estimate_barrier_gradient(bundle, 0.1, np.zeros(0))
    assert grad == pytest.approx([1.0, -2.0], abs=0.0)


def test_barrier_gradient_hand_computed():
    bundle = EstimateBundle(
        values=np.array([0.0, 0.5]),
        gradients=np.array([[1.0, 0.0], [0.0, 1.0]]),
        bounds=[error_bounds(10, 10, 0.5)] * 2,
        n=10,
        horizon=10,
    )
    grad = estimate_barrier_gradient(bundle, 0.1, np.zeros(1))
    assert grad == pytest.approx([1.0, 0.2], abs=1e-15)


def test_barrier_gradient_margin_error_names_index():
    bundle = EstimateBundle(
        values=np.array([0.0, 0.5, -0.1]),
        gradients=np.zeros((3, 2)),
        bounds=[error_bounds(10, 10, 0.5)] * 3,
        n=10,
        horizon=10,
    )
    with pytest.raises(MarginError, match="constraint 2"):
        estimate_barrier_gradient(bundle, 0.1, np.zeros(2))


def test_barrier_gradient_oracle_exact_inputs(two_state):
    # Substituting oracle-exact values/gradients must reproduce the analytic
    # barrier gradient to near machine precision.
    policy = random_policy(np.random.default_rng(30), two_state, scale=0.3)
    values = np.array([exact_values(two_state, policy, i)[1] for i in range(2)])
    grads = np.stack([exact_gradient(two_state, policy, i) for i in range(2)])
    bundle = EstimateBundle(values, grads, [error_bounds(10, 10, 0.6)] * 2, 10, 10)
    eta = 0.05
    got = estimate_barrier_gradient(bundle, eta, two_state.thresholds)
    expected = grads[0] + eta * grads[1] / (values[1] - two_state.thresholds[0])
    assert np.max(np.abs(got - expected)) <= 1e-10


def test_error_bounds_direct_values():
    b = error_bounds(2, 3, 0.5)
    assert b.b0 == pytest.approx(0.25, abs=1e-15)
    assert b.sigma0 == pytest.approx(2.0, abs=1e-15)
    b1_expected = 1.0 * 0.5**3 / 0.5 * math.sqrt(1 / 0.5 + 3)
    assert b.b1 == pytest.approx(b1_expected, abs=1e-15)


def test_error_bounds_n_scaling():
    b1 = error_bounds(100, 10, 0.7)
    b2 = error_bounds(200, 10, 0.7)
    assert b2.sigma0**2 == pytest.approx(b1.sigma0**2 / 2.0, rel=1e-12)
    assert b2.sigma1**2 == pytest.approx(b1.sigma1**2 / 2.0, rel=1e-12)


def test_error_bounds_reward_bound_scaling():
    a = error_bounds(50, 20, 0.6, 1.0, 1.0)
    b = error_bounds(50, 20, 0.6, 1.0, 10.0)
    for name in ("b0", "b1", "sigma0", "sigma1"):
        assert getattr(b, name) == pytest.approx(10.0 * getattr(a, name), rel=1e-12)


@settings(max_examples=80, deadline=None)
@given(
    n=st.integers(1, 10**6),
    h=st.integers(1, 400),
    gamma=st.floats(0.05, 0.95),
)
def test_error_bounds_monotonicity(n, h, gamma):
    b = error_bounds(n, h, gamma)
    bigger_h = error_bounds(n, h + 1, gamma)
    bigger_n = error_bounds(n + 1, h, gamma)
    assert min(b.b0, b.b1, b.sigma0, b.sigma1) >= 0.0
    assert bigger_h.b0 <= b.b0
    assert bigger_n.sigma0 <= b.sigma0 and bigger_n.sigma1 <= b.sigma1


def test_required_sample_size_inverts_sigma0():
    n, _ = required_sample_size(0.1, 1e9, 1e9, 1e9, gamma=0.5)
    assert n == 800


def test_required_sample_size_inverts_b0():
    _, h = required_sample_size(1e9, 1e9, 0.25, 1e9, gamma=0.5)
    assert h == 3


def test_required_sample_size_roundtrip():
    caps = (0.031, 0.02, 0.007, 0.004)
    n, h = required_sample_size(*caps, gamma=0.8, m_g=1.0, reward_bound=2.0)
    b = error_bounds(n, h, 0.8, 1.0, 2.0)
    assert b.sigma0 <= caps[0] and b.sigma1 <= caps[1]
    assert b.b0 <= caps[2] and b.b1 <= caps[3]


def test_required_sample_size_unreachable_caps():
    with pytest.raises(ValueError, match="unreachable"):
        required_sample_size(1e-30, 1e9, 1e9, 1e9, gamma=0.999)


def test_lipschitz_and_smoothness_values():
    _, m = lipschitz_and_smoothness(1.0, 1.0, 0.7)
    assert m == pytest.approx(2.0 / 0.09, rel=1e-12)
    ell, _ = lipschitz_and_smoothness(1.0, 1.0, 0.5)
    assert ell == pytest.approx(4.0, abs=1e-12)
    ell10, m10 = lipschitz_and_smoothness(1.0, 1.0, 0.5, reward_bound=10.0)
    assert ell10 == pytest.approx(40.0, abs=1e-12) and m10 == pytest.approx(80.0, abs=1e-12)


def test_smoothness_single_action_zero():
    cmdp = make_single_action()
    policy = SoftmaxPolicy.uniform(1, 1)
    batch = sample_batch(cmdp, policy, 50, 10, np.random.default_rng(2))
    assert estimate_smoothness(batch, policy, 0, 0.7) == 0.0


def test_smoothness_zero_rewards(two_state):
    zeroed = TabularCmdp(
        2, 2, two_state.transition, two_state.initial_dist,
        np.zeros_like(two_state.rewards), two_state.reward_bounds,
        two_state.discount, two_state.thresholds,
    )
    policy = random_policy(np.random.default_rng(4), zeroed)
    batch = sample_batch(zeroed, policy, 50, 10, np.random.default_rng(5))
    assert estimate_smoothness(batch, policy, 0, zeroed.discount) == 0.0


@pytest.mark.slow
def test_smoothness_vs_fd_hessian(two_state):
    policy = random_policy(np.random.default_rng(6), two_state, scale=0.4)
    batch = sample_batch(two_state, policy, 100_000, 40, np.random.default_rng(7))
    est = estimate_smoothness(batch, policy, 0, two_state.discount)
    _, m_theory = lipschitz_and_smoothness(1.0, 1.0, two_state.discount)
    assert est <= m_theory + 1.0
    hess = fd_value_hessian(two_state, policy, 0)
    truth = np.linalg.norm(hess, 2)
    assert abs(est - truth) <= 0.10 * truth
