"""Finite constrained MDPs: representation, seeded sampling, and exact DP oracles.

A model bundles the transition tensor, the reward/utility tables (signal 0 is
the objective, signals 1..m are the constrained utilities), the initial state
distribution, the discount factor, and the constraint thresholds.  Everything
downstream (Monte-Carlo estimators, barrier ascent, LP ground truth) consumes
this one type.

All exact quantities are computed with dense linear solves; state counts are
assumed small (tabular regime).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "CmdpValidationError",
    "TabularCmdp",
    "Trajectory",
    "TrajectoryBatch",
    "validate",
    "sample_trajectory",
    "sample_batch",
    "exact_values",
    "exact_q_values",
    "exact_occupancy",
    "exact_gradient",
    "cmdp_to_dict",
    "cmdp_from_dict",
    "save_cmdp",
    "load_cmdp",
]


class CmdpValidationError(ValueError):
    """Raised when a model violates one of its structural invariants."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(np.asarray(a, dtype=np.float64))
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class TabularCmdp:
    """A finite CMDP with m+1 reward signals.

    Fields:
        num_states, num_actions: sizes of the (discrete) state/action spaces.
        transition: P[s, a, s'] next-state probabilities, shape (S, A, S).
        initial_dist: rho over states, shape (S,).
        rewards: stacked tables r_i[s, a], shape (m+1, S, A); index 0 is the
            objective, 1..m the constrained utilities.
        reward_bounds: per-signal scalar R_i with |r_i| <= R_i, shape (m+1,).
        discount: gamma in (0, 1).
        thresholds: b_1..b_m; constraint i is V_i(rho) >= b_i, shape (m,).
    """

    num_states: int
    num_actions: int
    transition: np.ndarray
    initial_dist: np.ndarray
    rewards: np.ndarray
    reward_bounds: np.ndarray
    discount: float
    thresholds: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        object.__setattr__(self, "transition", _readonly(self.transition))
        object.__setattr__(self, "initial_dist", _readonly(self.initial_dist))
        object.__setattr__(self, "rewards", _readonly(self.rewards))
        object.__setattr__(self, "reward_bounds", _readonly(self.reward_bounds))
        object.__setattr__(self, "thresholds", _readonly(self.thresholds))

    @property
    def num_signals(self) -> int:
        """m + 1: the objective plus the constrained utilities."""
        return self.rewards.shape[0]

    @property
    def num_constraints(self) -> int:
        return self.thresholds.shape[0]


@dataclass(frozen=True)
class Trajectory:
    """One truncated rollout of fixed horizon H.

    states/actions have shape (H,); rewards has shape (m+1, H) carrying every
    reward signal at each step.
    """

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray

    @property
    def horizon(self) -> int:
        return self.states.shape[0]

    def steps(self):
        """Iterate (state, action, reward_vector) tuples in time order."""
        for t in range(self.horizon):
            yield int(self.states[t]), int(self.actions[t]), self.rewards[:, t]


@dataclass(frozen=True)
class TrajectoryBatch:
    """n truncated trajectories sharing one horizon, stored column-major in time.

    states/actions: (n, H) integer arrays; rewards: (m+1, n, H).
    """

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray

    def __post_init__(self):
        if self.states.ndim != 2 or self.states.shape[0] < 1:
            raise ValueError("batch must contain at least one trajectory")
        if self.actions.shape != self.states.shape:
            raise ValueError("states/actions shape mismatch")
        if self.rewards.shape[1:] != self.states.shape:
            raise ValueError("rewards shape mismatch")

    @property
    def n(self) -> int:
        return self.states.shape[0]

    @property
    def horizon(self) -> int:
        return self.states.shape[1]

    @property
    def num_signals(self) -> int:
        return self.rewards.shape[0]

    @classmethod
    def from_trajectories(cls, trajectories: list[Trajectory]) -> "TrajectoryBatch":
        if not trajectories:
            raise ValueError("batch must contain at least one trajectory")
        horizons = {t.horizon for t in trajectories}
        if len(horizons) != 1:
            raise ValueError(f"trajectories must share one horizon, got {sorted(horizons)}")
        return cls(
            states=np.stack([t.states for t in trajectories]),
            actions=np.stack([t.actions for t in trajectories]),
            rewards=np.stack([t.rewards for t in trajectories], axis=1),
        )

    def trajectory(self, j: int) -> Trajectory:
        return Trajectory(self.states[j], self.actions[j], self.rewards[:, j, :])


_ATOL = 1e-12


def validate(cmdp: TabularCmdp) -> None:
    """Check every structural invariant; raise naming the first violation."""
    S, A = cmdp.num_states, cmdp.num_actions
    if S < 1 or A < 1:
        raise CmdpValidationError("num_states and num_actions must be positive")
    if cmdp.transition.shape != (S, A, S):
        raise CmdpValidationError(
            f"transition shape {cmdp.transition.shape} != {(S, A, S)}"
        )
    if cmdp.initial_dist.shape != (S,):
        raise CmdpValidationError(
            f"initial_dist shape {cmdp.initial_dist.shape} != {(S,)}"
        )
    if not (0.0 < cmdp.discount < 1.0):
        raise CmdpValidationError("discount out of (0,1)")
    if cmdp.rewards.ndim != 3 or cmdp.rewards.shape[1:] != (S, A):
        raise CmdpValidationError(f"rewards shape {cmdp.rewards.shape} != (m+1, {S}, {A})")
    k = cmdp.num_signals
    if cmdp.reward_bounds.shape != (k,):
        raise CmdpValidationError(
            f"reward_bounds shape {cmdp.reward_bounds.shape} != ({k},)"
        )
    if cmdp.thresholds.shape != (k - 1,):
        raise CmdpValidationError(
            f"thresholds shape {cmdp.thresholds.shape} != ({k - 1},) for m+1={k} signals"
        )
    if np.any(cmdp.transition < 0):
        s, a, s2 = np.unravel_index(int(np.argmin(cmdp.transition)), cmdp.transition.shape)
        raise CmdpValidationError(f"negative transition probability at (s={s}, a={a}, s'={s2})")
    row_sums = cmdp.transition.sum(axis=2)
    bad = np.abs(row_sums - 1.0) > _ATOL
    if np.any(bad):
        s, a = np.argwhere(bad)[0]
        raise CmdpValidationError(
            f"transition row (s={s}, a={a}) sums to {row_sums[s, a]!r}, expected 1"
        )
    if np.any(cmdp.initial_dist < 0):
        raise CmdpValidationError(
            f"negative initial probability at s={int(np.argmin(cmdp.initial_dist))}"
        )
    total = cmdp.initial_dist.sum()
    if abs(total - 1.0) > _ATOL:
        raise CmdpValidationError(f"initial_dist sums to {total!r}, expected 1")
    if np.any(cmdp.reward_bounds < 0):
        raise CmdpValidationError("reward_bounds must be nonnegative")
    over = np.abs(cmdp.rewards) > cmdp.reward_bounds[:, None, None] + _ATOL
    if np.any(over):
        i, s, a = np.argwhere(over)[0]
        raise CmdpValidationError(
            f"|r_{i}(s={s}, a={a})| = {abs(cmdp.rewards[i, s, a])!r} exceeds bound "
            f"{cmdp.reward_bounds[i]!r}"
        )


def _policy_matrix(policy, cmdp: TabularCmdp) -> np.ndarray:
    """Accept a SoftmaxPolicy-like object or a raw (S, A) probability table."""
    probs = policy if isinstance(policy, np.ndarray) else policy.prob_matrix()
    if probs.shape != (cmdp.num_states, cmdp.num_actions):
        raise ValueError(
            f"policy table shape {probs.shape} does not match model "
            f"({cmdp.num_states}, {cmdp.num_actions})"
        )
    return probs


def _categorical(cum: np.ndarray, u) -> np.ndarray:
    # Inverse CDF over precomputed cumulative rows; roundoff residue beyond
    # the final cumsum entry maps to the last index.
    idx = (cum <= np.asarray(u)[..., None]).sum(axis=-1)
    return np.minimum(idx, cum.shape[-1] - 1)


def sample_trajectory(cmdp: TabularCmdp, policy, horizon: int, rng: np.random.Generator) -> Trajectory:
    """Roll out one trajectory of exactly `horizon` steps.

    s0 ~ rho, a_t ~ pi(.|s_t), s_{t+1} ~ P(.|s_t, a_t); the reward vector at
    step t carries all m+1 signals at (s_t, a_t).  Identical generator state
    yields an identical trajectory.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    probs = _policy_matrix(policy, cmdp)
    cum_pi = np.cumsum(probs, axis=1)
    cum_p = np.cumsum(cmdp.transition, axis=2)
    cum_rho = np.cumsum(cmdp.initial_dist)

    states = np.empty(horizon, dtype=np.int64)
    actions = np.empty(horizon, dtype=np.int64)
    s = int(_categorical(cum_rho, rng.random()))
    for t in range(horizon):
        a = int(_categorical(cum_pi[s], rng.random()))
        states[t] = s
        actions[t] = a
        s = int(_categorical(cum_p[s, a], rng.random()))
    rewards = cmdp.rewards[:, states, actions]
    return Trajectory(states, actions, rewards)


def sample_batch(
    cmdp: TabularCmdp, policy, n: int, horizon: int, rng: np.random.Generator
) -> TrajectoryBatch:
    """Roll out n trajectories at once (vectorized over the batch).

    Per-trajectory randomness comes from dedicated rows of pre-drawn uniform
    arrays, so the result is reproducible for a fixed seed regardless of how
    the stepping is scheduled.
    """
    if n < 1:
        raise ValueError("batch size must be >= 1")
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    probs = _policy_matrix(policy, cmdp)
    cum_pi = np.cumsum(probs, axis=1)
    cum_p = np.cumsum(cmdp.transition, axis=2)
    cum_rho = np.cumsum(cmdp.initial_dist)

    u_init = rng.random(n)
    u_act = rng.random((n, horizon))
    u_next = rng.random((n, horizon))

    states = np.empty((n, horizon), dtype=np.int64)
    actions = np.empty((n, horizon), dtype=np.int64)
    s = _categorical(cum_rho, u_init)
    for t in range(horizon):
        a = _categorical(cum_pi[s], u_act[:, t])
        states[:, t] = s
        actions[:, t] = a
        s = _categorical(cum_p[s, a], u_next[:, t])
    rewards = cmdp.rewards[:, states, actions]
    return TrajectoryBatch(states, actions, rewards)


def _policy_transition(cmdp: TabularCmdp, probs: np.ndarray) -> np.ndarray:
    """State-to-state transition matrix P_pi[s, s'] under the policy."""
    return np.einsum("sa,sax->sx", probs, cmdp.transition)


def exact_values(cmdp: TabularCmdp, policy, i: int) -> tuple[np.ndarray, float]:
    """Solve the Bellman evaluation equation for signal i exactly.

    Returns (V_i as a state vector, V_i(rho)).  Uses a dense LU solve of
    (I - gamma * P_pi) V = r_pi, which is nonsingular for gamma < 1.
    """
    probs = _policy_matrix(policy, cmdp)
    p_pi = _policy_transition(cmdp, probs)
    r_pi = (probs * cmdp.rewards[i]).sum(axis=1)
    v = np.linalg.solve(np.eye(cmdp.num_states) - cmdp.discount * p_pi, r_pi)
    return v, float(cmdp.initial_dist @ v)


def exact_q_values(cmdp: TabularCmdp, policy, i: int) -> np.ndarray:
    """State-action values Q_i[s, a] consistent with exact_values."""
    v, _ = exact_values(cmdp, policy, i)
    return cmdp.rewards[i] + cmdp.discount * cmdp.transition @ v


def exact_occupancy(cmdp: TabularCmdp, policy) -> np.ndarray:
    """Discounted state-action visitation d_rho[s, a].

    d(s, a) = (1 - gamma) sum_t gamma^t P(s_t = s, a_t = a); entries are
    nonnegative and sum to 1, satisfying the flow-conservation equation.
    """
    probs = _policy_matrix(policy, cmdp)
    p_pi = _policy_transition(cmdp, probs)
    d_state = np.linalg.solve(
        np.eye(cmdp.num_states) - cmdp.discount * p_pi.T,
        (1.0 - cmdp.discount) * cmdp.initial_dist,
    )
    return d_state[:, None] * probs


def exact_gradient(cmdp: TabularCmdp, policy, i: int) -> np.ndarray:
    """Exact policy gradient of V_i(rho) in the softmax parameter layout.

    Computed as (1/(1-gamma)) E_{(s,a)~d_rho}[grad log pi(a|s) * A_i(s,a)]
    with exact occupancy, Q and V.  Component (s, b) reduces to
    (d(s,b) A(s,b) - pi(b|s) * sum_a d(s,a) A(s,a)) / (1-gamma).
    """
    probs = _policy_matrix(policy, cmdp)
    d = exact_occupancy(cmdp, policy)
    q = exact_q_values(cmdp, policy, i)
    v = (probs * q).sum(axis=1)
    adv = q - v[:, None]
    weighted = d * adv
    grad = (weighted - probs * weighted.sum(axis=1, keepdims=True)) / (1.0 - cmdp.discount)
    return grad.reshape(-1)


def cmdp_to_dict(cmdp: TabularCmdp) -> dict:
    return {
        "num_states": cmdp.num_states,
        "num_actions": cmdp.num_actions,
        "transition": cmdp.transition.tolist(),
        "initial_dist": cmdp.initial_dist.tolist(),
        "rewards": cmdp.rewards.tolist(),
        "reward_bounds": cmdp.reward_bounds.tolist(),
        "discount": cmdp.discount,
        "thresholds": cmdp.thresholds.tolist(),
    }


def cmdp_from_dict(doc: dict) -> TabularCmdp:
    return TabularCmdp(
        num_states=int(doc["num_states"]),
        num_actions=int(doc["num_actions"]),
        transition=np.array(doc["transition"], dtype=np.float64),
        initial_dist=np.array(doc["initial_dist"], dtype=np.float64),
        rewards=np.array(doc["rewards"], dtype=np.float64),
        reward_bounds=np.array(doc["reward_bounds"], dtype=np.float64),
        discount=float(doc["discount"]),
        thresholds=np.array(doc["thresholds"], dtype=np.float64),
    )


def save_cmdp(cmdp: TabularCmdp, path: str | Path) -> None:
    Path(path).write_text(json.dumps(cmdp_to_dict(cmdp)))


def load_cmdp(path: str | Path) -> TabularCmdp:
    return cmdp_from_dict(json.loads(Path(path).read_text()))
