"""Comparison baselines: fixed-step barrier ascent and exact ground truth.

The fixed-step loop mirrors the adaptive one (same sampling, same estimate
bundle, same barrier gradient, same recovery remedy) but applies a manually
chosen constant stepsize and never breaks early.

Ground truth for small models comes from a linear program over occupancy
measures solved by the in-house dense simplex, cross-checked by value
iteration in the unconstrained case.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import simplex
from .estimators import MarginError, estimate_barrier_gradient
from .lbsgd import (
    EVENT_CONTINUED,
    EVENT_RECOVERY,
    RecoveryConfig,
    RunHistory,
    StepDiagnostics,
    _sample_and_estimate,
    drive_run,
)
from .model import TabularCmdp
from .policy import SoftmaxPolicy

__all__ = [
    "IpoConfig",
    "OccupancyLpSolution",
    "ipo_run",
    "lp_occupancy_solve",
    "lp_to_policy",
    "value_iteration",
]


@dataclass(frozen=True)
class IpoConfig:
    """Fixed-stepsize barrier ascent parameters."""

    eta: float
    fixed_step: float
    n: int
    horizon: int
    max_iters: int
    m_g: float = 1.0
    recovery: RecoveryConfig = field(default_factory=RecoveryConfig)

    def __post_init__(self):
        if self.eta <= 0 or self.fixed_step <= 0:
            raise ValueError("eta and fixed_step must be positive")
        if self.n < 1 or self.horizon < 1 or self.max_iters < 0:
            raise ValueError("n, horizon must be >= 1 and max_iters >= 0")


def _ipo_step(
    cmdp: TabularCmdp,
    policy: SoftmaxPolicy,
    config: IpoConfig,
    rng: np.random.Generator,
    n: int,
    step_cap: float | None,
) -> tuple[SoftmaxPolicy | None, StepDiagnostics]:
    bundle = _sample_and_estimate(cmdp, policy, n, config.horizon, config.m_g, rng)
    try:
        barrier_grad = estimate_barrier_gradient(bundle, config.eta, cmdp.thresholds)
    except MarginError:
        return None, StepDiagnostics(event=EVENT_RECOVERY, estimated_values=bundle.values)
    grad_norm = float(np.linalg.norm(barrier_grad))
    gamma_t = config.fixed_step if step_cap is None else min(config.fixed_step, step_cap)
    diag = StepDiagnostics(
        event=EVENT_CONTINUED,
        estimated_values=bundle.values,
        grad_norm=grad_norm,
        stepsize=gamma_t,
    )
    return policy.with_theta(policy.theta + gamma_t * barrier_grad), diag


def ipo_run(
    cmdp: TabularCmdp,
    policy: SoftmaxPolicy,
    config: IpoConfig,
    rng: np.random.Generator,
    oracle_logging: bool = False,
) -> RunHistory:
    """Fixed-step barrier ascent sharing the adaptive loop's plumbing.

    Identical estimation path per iteration; gamma_t is constant (halved by
    the recovery cap after a revert) and there is no break condition.
    """
    if policy.dim != cmdp.num_states * cmdp.num_actions:
        raise ValueError("policy dimension does not match the model")
    meta = {
        "algorithm": "ipo",
        "eta": config.eta,
        "fixed_step": config.fixed_step,
        "n_initial": config.n,
        "horizon": config.horizon,
        "max_iters": config.max_iters,
        "m_g": config.m_g,
    }

    def step_fn(pol, n_cur, cap, r):
        return _ipo_step(cmdp, pol, config, r, n_cur, cap)

    return drive_run(
        cmdp,
        policy,
        rng,
        oracle_logging,
        step_fn=step_fn,
        n_initial=config.n,
        max_iters=config.max_iters,
        recovery=config.recovery,
        allow_break=False,
        meta=meta,
    )


@dataclass(frozen=True)
class OccupancyLpSolution:
    """Optimal discounted state-action occupancy and derived values."""

    status: str  # "optimal" | "infeasible"
    occupancy: np.ndarray | None
    objective: float | None
    constraint_values: np.ndarray | None

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "occupancy": None if self.occupancy is None else self.occupancy.tolist(),
            "objective": self.objective,
            "constraint_values": None
            if self.constraint_values is None
            else self.constraint_values.tolist(),
        }


def lp_occupancy_solve(cmdp: TabularCmdp) -> OccupancyLpSolution:
    """Exact CMDP optimum via the occupancy-measure linear program.

    maximize sum d.r0  s.t.  flow conservation per state, utility rows
    sum d.r_i >= (1-gamma) b_i, d >= 0; the objective is reported in value
    units, V_0(rho) = sum d.r0 / (1-gamma).  The feasible polytope is bounded
    (total occupancy mass is pinned to 1), so an unbounded status cannot
    occur.
    """
    S, A = cmdp.num_states, cmdp.num_actions
    gamma = cmdp.discount
    # Flow rows: sum_a d(s',a) - gamma sum_{s,a} P(s'|s,a) d(s,a) = (1-gamma) rho(s')
    a_eq = np.repeat(np.eye(S), A, axis=1) - gamma * cmdp.transition.transpose(2, 0, 1).reshape(
        S, S * A
    )
    b_eq = (1.0 - gamma) * cmdp.initial_dist
    m = cmdp.num_constraints
    a_ge = cmdp.rewards[1:].reshape(m, S * A) if m else None
    b_ge = (1.0 - gamma) * cmdp.thresholds if m else None

    result = simplex.solve_lp(
        cmdp.rewards[0].reshape(-1), a_eq, b_eq, a_ge, b_ge, maximize=True
    )
    if result.status == "infeasible":
        return OccupancyLpSolution("infeasible", None, None, None)
    assert result.status == "optimal", f"occupancy LP cannot be {result.status}"
    d = result.x.reshape(S, A)
    constraint_values = cmdp.rewards[1:].reshape(m, S * A) @ result.x / (1.0 - gamma)
    return OccupancyLpSolution(
        "optimal", d, result.objective / (1.0 - gamma), constraint_values
    )


def lp_to_policy(solution: OccupancyLpSolution) -> np.ndarray:
    """Conditional policy table pi(a|s) = d(s,a) / sum_a' d(s,a').

    States the optimal occupancy never reaches get a uniform row.
    """
    if solution.status != "optimal":
        raise ValueError(f"cannot extract a policy from a {solution.status} solution")
    d = np.maximum(solution.occupancy, 0.0)
    row_mass = d.sum(axis=1)
    A = d.shape[1]
    policy = np.full_like(d, 1.0 / A)
    reached = row_mass > 1e-12
    policy[reached] = d[reached] / row_mass[reached, None]
    return policy


def value_iteration(cmdp: TabularCmdp, i: int, tol: float = 1e-8) -> float:
    """Optimal unconstrained value V*(rho) for signal i.

    Bellman-optimality iteration, stopped once the sup-norm change is at most
    tol * (1-gamma)/gamma, which bounds the value error by tol.
    """
    gamma = cmdp.discount
    v = np.zeros(cmdp.num_states)
    stop = tol * (1.0 - gamma) / gamma
    for _ in range(10**7):
        q = cmdp.rewards[i] + gamma * cmdp.transition @ v
        v_new = q.max(axis=1)
        if np.max(np.abs(v_new - v)) <= stop:
            return float(cmdp.initial_dist @ v_new)
        v = v_new
    raise RuntimeError("value iteration failed to converge")
