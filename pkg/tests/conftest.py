"""Shared fixtures: small fixed models and numerical helpers."""

from __future__ import annotations

import numpy as np
import pytest

from cmdpbarrier import SoftmaxPolicy, TabularCmdp, exact_values


def make_two_state(gamma: float = 0.6, threshold: float = 0.2) -> TabularCmdp:
    """A fixed 2-state 2-action instance with one constraint, rewards in [-1,1]."""
    P = np.zeros((2, 2, 2))
    P[0, 0] = [0.9, 0.1]
    P[0, 1] = [0.2, 0.8]
    P[1, 0] = [0.5, 0.5]
    P[1, 1] = [0.1, 0.9]
    r = np.zeros((2, 2, 2))
    r[0] = [[1.0, 0.0], [0.3, 0.8]]
    r[1] = [[0.5, -0.2], [0.1, 0.9]]
    return TabularCmdp(
        num_states=2,
        num_actions=2,
        transition=P,
        initial_dist=np.array([0.6, 0.4]),
        rewards=r,
        reward_bounds=np.array([1.0, 1.0]),
        discount=gamma,
        thresholds=np.array([threshold]),
    )


def make_bandit() -> TabularCmdp:
    """1 state, 2 arms paying 0 and 1, gamma 0.5, unconstrained."""
    return TabularCmdp(
        num_states=1,
        num_actions=2,
        transition=np.ones((1, 2, 1)),
        initial_dist=np.array([1.0]),
        rewards=np.array([[[0.0, 1.0]]]),
        reward_bounds=np.array([1.0]),
        discount=0.5,
        thresholds=np.zeros(0),
    )


def make_single_action(gamma: float = 0.7, reward: float = 1.0) -> TabularCmdp:
    return TabularCmdp(
        num_states=1,
        num_actions=1,
        transition=np.ones((1, 1, 1)),
        initial_dist=np.array([1.0]),
        rewards=np.array([[[reward]]]),
        reward_bounds=np.array([max(abs(reward), 1.0)]),
        discount=gamma,
        thresholds=np.zeros(0),
    )


def random_cmdp(
    rng: np.random.Generator,
    max_states: int = 5,
    max_actions: int = 3,
    num_constraints: int = 0,
    gamma: float | None = None,
) -> TabularCmdp:
    """Random dense instance with rewards in [-1, 1]."""
    S = int(rng.integers(2, max_states + 1))
    A = int(rng.integers(2, max_actions + 1))
    P = rng.random((S, A, S)) ** 2
    P /= P.sum(axis=2, keepdims=True)
    rho = rng.random(S)
    rho /= rho.sum()
    k = num_constraints + 1
    rewards = rng.random((k, S, A)) * 2.0 - 1.0
    if gamma is None:
        gamma = float(rng.uniform(0.3, 0.9))
    thresholds = np.full(num_constraints, -2.0)
    return TabularCmdp(S, A, P, rho, rewards, np.ones(k), gamma, thresholds)


def random_policy(rng: np.random.Generator, cmdp: TabularCmdp, scale: float = 1.0) -> SoftmaxPolicy:
    d = cmdp.num_states * cmdp.num_actions
    return SoftmaxPolicy(rng.standard_normal(d) * scale, cmdp.num_states, cmdp.num_actions)


def fd_gradient(cmdp: TabularCmdp, policy: SoftmaxPolicy, i: int, eps: float = 1e-5) -> np.ndarray:
    """Central finite differences of the exact value at rho."""
    grad = np.zeros(policy.dim)
    for j in range(policy.dim):
        plus = policy.theta.copy()
        plus[j] += eps
        minus = policy.theta.copy()
        minus[j] -= eps
        grad[j] = (
            exact_values(cmdp, policy.with_theta(plus), i)[1]
            - exact_values(cmdp, policy.with_theta(minus), i)[1]
        ) / (2.0 * eps)
    return grad


def fd_value_hessian(cmdp, policy, i: int, eps: float = 1e-5) -> np.ndarray:
    """Central finite differences of the exact gradient: the value Hessian."""
    from cmdpbarrier import exact_gradient

    d = policy.dim
    hess = np.zeros((d, d))
    for j in range(d):
        plus = policy.theta.copy()
        plus[j] += eps
        minus = policy.theta.copy()
        minus[j] -= eps
        hess[:, j] = (
            exact_gradient(cmdp, policy.with_theta(plus), i)
            - exact_gradient(cmdp, policy.with_theta(minus), i)
        ) / (2.0 * eps)
    return 0.5 * (hess + hess.T)


@pytest.fixture
def two_state():
    return make_two_state()


@pytest.fixture
def bandit():
    return make_bandit()


@pytest.fixture
def single_action():
    return make_single_action()
