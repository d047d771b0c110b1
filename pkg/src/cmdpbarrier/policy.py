"""Tabular softmax policies with exact score and per-state Hessian blocks.

pi_theta(a|s) is the softmax of the s-block of a flat parameter vector theta of
length S*A (state-major layout).  The score-norm bound m_g and Hessian bound
m_h are carried as configuration (both default to 1.0); the analytic softmax
suprema are sqrt(2) and 1 respectively, so callers may override.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

__all__ = ["SoftmaxPolicy", "action_probs", "grad_log_prob", "hessian_log_prob"]

# Probabilities below this are flushed to zero and the row renormalized, so
# extreme logits cannot produce denormal garbage downstream.
_PROB_FLOOR = 1e-300


@dataclass(frozen=True)
class SoftmaxPolicy:
    """pi_theta(a|s) proportional to exp(theta(s, a))."""

    theta: np.ndarray
    num_states: int
    num_actions: int
    m_g: float = 1.0
    m_h: float = 1.0

    def __post_init__(self):
        theta = np.ascontiguousarray(np.asarray(self.theta, dtype=np.float64))
        if theta.shape != (self.num_states * self.num_actions,):
            raise ValueError(
                f"theta has shape {theta.shape}, expected "
                f"({self.num_states * self.num_actions},)"
            )
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)

    @classmethod
    def uniform(cls, num_states: int, num_actions: int, **kw) -> "SoftmaxPolicy":
        return cls(np.zeros(num_states * num_actions), num_states, num_actions, **kw)

    @property
    def dim(self) -> int:
        return self.num_states * self.num_actions

    def theta_matrix(self) -> np.ndarray:
        return self.theta.reshape(self.num_states, self.num_actions)

    def with_theta(self, theta: np.ndarray) -> "SoftmaxPolicy":
        return replace(self, theta=np.asarray(theta, dtype=np.float64))

    def action_probs(self, s: int) -> np.ndarray:
        return action_probs(self, s)

    def prob_matrix(self) -> np.ndarray:
        """All action distributions stacked as an (S, A) table."""
        z = self.theta_matrix()
        z = z - z.max(axis=1, keepdims=True)
        p = np.exp(z)
        p[p < _PROB_FLOOR] = 0.0
        return p / p.sum(axis=1, keepdims=True)

    def grad_log_prob(self, s: int, a: int) -> np.ndarray:
        return grad_log_prob(self, s, a)

    def hessian_log_prob(self, s: int, a: int) -> np.ndarray:
        return hessian_log_prob(self, s, a)


def _check_state(policy: SoftmaxPolicy, s: int) -> None:
    if not 0 <= s < policy.num_states:
        raise IndexError(f"state {s} out of range [0, {policy.num_states})")


def _check_action(policy: SoftmaxPolicy, a: int) -> None:
    if not 0 <= a < policy.num_actions:
        raise IndexError(f"action {a} out of range [0, {policy.num_actions})")


def action_probs(policy: SoftmaxPolicy, s: int) -> np.ndarray:
    """Softmax of the s-block of theta, computed with max subtraction."""
    _check_state(policy, s)
    block = policy.theta[s * policy.num_actions : (s + 1) * policy.num_actions]
    z = block - block.max()
    p = np.exp(z)
    p[p < _PROB_FLOOR] = 0.0
    return p / p.sum()


def grad_log_prob(policy: SoftmaxPolicy, s: int, a: int) -> np.ndarray:
    """Score vector: zero outside the s-block, e_a - pi(.|s) inside it."""
    _check_state(policy, s)
    _check_action(policy, a)
    grad = np.zeros(policy.dim)
    block = slice(s * policy.num_actions, (s + 1) * policy.num_actions)
    grad[block] = -action_probs(policy, s)
    grad[s * policy.num_actions + a] += 1.0
    return grad


def hessian_log_prob(policy: SoftmaxPolicy, s: int, a: int) -> np.ndarray:
    """The (A, A) Hessian block of log pi(a|s) w.r.t. the s-block of theta.

    Equals -(diag(pi) - pi pi^T); independent of a, symmetric, negative
    semidefinite.  Blocks for other states are identically zero.
    """
    _check_state(policy, s)
    _check_action(policy, a)
    p = action_probs(policy, s)
    return np.outer(p, p) - np.diag(p)
