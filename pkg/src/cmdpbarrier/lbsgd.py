"""Adaptive-stepsize log-barrier ascent with estimate-aware confidence bounds.

Each iteration draws a fresh batch, estimates every signal's value and
gradient, and forms the plug-in barrier gradient.  The stepsize combines two
caps: the inverse of a local smoothness constant that blows up as the lower
confidence margins shrink, and a move-length cap that keeps the next iterate
inside the region where each true margin can drop by at most half.  The loop
breaks once the estimated barrier gradient norm falls to eta/2, and a
recovery path (revert, enlarge the batch, shrink the step cap) handles
iterations whose estimated or lower-confidence margins turn nonpositive.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import model
from .estimators import (
    EstimateBundle,
    MarginError,
    estimate_barrier_gradient,
    estimate_bundle,
    lipschitz_and_smoothness,
)
from .model import TabularCmdp, sample_batch
from .policy import SoftmaxPolicy

__all__ = [
    "InfeasibleStartError",
    "RecoveryConfig",
    "LbSgdConfig",
    "StepDiagnostics",
    "IterateRecord",
    "RunHistory",
    "lower_conf_margin",
    "upper_conf_dirderiv",
    "local_smoothness",
    "stepsize",
    "lbsgd_step",
    "lbsgd_run",
]

EVENT_CONTINUED = "continued"
EVENT_BREAK = "break"
EVENT_BUDGET = "budget-exhausted"
EVENT_RECOVERY = "recovery-triggered"


class InfeasibleStartError(RuntimeError):
    """The initial policy is not strictly feasible by estimate."""


@dataclass(frozen=True)
class RecoveryConfig:
    """Revert-and-resample remedy for estimated infeasibility mid-run."""

    enabled: bool = True
    n_multiplier: float = 2.0
    step_cap_shrink: float = 0.5
    max_recoveries: int = 5

    def __post_init__(self):
        if self.n_multiplier < 1.0:
            raise ValueError("n_multiplier must be >= 1")
        if not 0.0 < self.step_cap_shrink < 1.0:
            raise ValueError("step_cap_shrink must lie in (0,1)")
        if self.max_recoveries < 0:
            raise ValueError("max_recoveries must be >= 0")


@dataclass(frozen=True)
class LbSgdConfig:
    """Hyperparameters of the adaptive barrier ascent.

    smoothness, when set, replaces the analytic constant
    (m_g^2 + m_h) / (1 - gamma)^2 everywhere the stepsize machinery uses it
    (e.g. with a sampled second-order estimate).
    """

    eta: float
    delta: float
    n: int
    horizon: int
    max_iters: int
    m_g: float = 1.0
    m_h: float = 1.0
    smoothness: float | None = None
    recovery: RecoveryConfig = field(default_factory=RecoveryConfig)

    def __post_init__(self):
        if self.eta <= 0:
            raise ValueError("eta must be positive")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta out of (0,1)")
        if self.n < 1 or self.horizon < 1 or self.max_iters < 0:
            raise ValueError("n, horizon must be >= 1 and max_iters >= 0")

    def smoothness_constant(self, gamma: float) -> float:
        if self.smoothness is not None:
            return self.smoothness
        _, m = lipschitz_and_smoothness(self.m_g, self.m_h, gamma)
        return m


@dataclass(frozen=True)
class StepDiagnostics:
    """Everything one iteration observed or decided."""

    event: str
    estimated_values: np.ndarray | None = None
    grad_norm: float | None = None
    alpha_lower: np.ndarray | None = None
    beta_upper: np.ndarray | None = None
    local_smoothness: float | None = None
    stepsize: float | None = None


@dataclass(frozen=True)
class IterateRecord:
    t: int
    theta: np.ndarray
    diagnostics: StepDiagnostics
    exact_values: np.ndarray | None = None
    exact_feasible: bool | None = None


@dataclass
class RunHistory:
    """Per-iterate trace of a barrier-ascent run plus the selected output."""

    records: list[IterateRecord]
    theta_out: np.ndarray
    termination: str
    meta: dict

    def record_dicts(self) -> list[dict]:
        out = []
        for rec in self.records:
            d = rec.diagnostics
            out.append(
                {
                    "t": rec.t,
                    "theta": rec.theta.tolist(),
                    "gamma_t": d.stepsize,
                    "grad_norm": d.grad_norm,
                    "alpha_lower": None if d.alpha_lower is None else d.alpha_lower.tolist(),
                    "beta_upper": None if d.beta_upper is None else d.beta_upper.tolist(),
                    "m_hat": d.local_smoothness,
                    "estimated_values": None
                    if d.estimated_values is None
                    else d.estimated_values.tolist(),
                    "exact_values": None
                    if rec.exact_values is None
                    else rec.exact_values.tolist(),
                    "event": d.event,
                }
            )
        return out

    def write_jsonl(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            for doc in self.record_dicts():
                fh.write(json.dumps(doc, separators=(",", ":")) + "\n")

    def write_csv(self, path: str | Path) -> None:
        k = self.meta["num_signals"]
        header = ["t"] + [f"V{i}_exact" for i in range(k)] + ["gamma_t", "grad_norm"]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for rec in self.records:
                exact = [""] * k if rec.exact_values is None else [repr(v) for v in rec.exact_values]
                d = rec.diagnostics
                writer.writerow(
                    [rec.t]
                    + exact
                    + [
                        "" if d.stepsize is None else repr(d.stepsize),
                        "" if d.grad_norm is None else repr(d.grad_norm),
                    ]
                )


def lower_conf_margin(
    v_hat: float, bounds, delta: float, threshold: float = 0.0
) -> float:
    """High-probability lower bound on the margin V_i - b_i at the iterate.

    Subtracts the truncation bias and the deviation quantile from the
    estimate; may be negative, consumers decide what that means.
    """
    return v_hat - threshold - bounds.b0 - bounds.sigma0 * math.sqrt(math.log(2.0 / delta))


def upper_conf_dirderiv(
    grad_i: np.ndarray, barrier_grad: np.ndarray, bounds, delta: float
) -> float:
    """Upper confidence bound on |<grad V_i, direction of the barrier gradient>|."""
    norm = float(np.linalg.norm(barrier_grad))
    if norm == 0.0:
        raise ValueError("barrier gradient norm is zero; break condition applies first")
    inner = abs(float(grad_i @ barrier_grad)) / norm
    return inner + bounds.sigma1 * math.sqrt(0.25 + math.log(1.0 / delta)) + bounds.b1


def local_smoothness(
    m: float, eta: float, alpha_lower: np.ndarray, beta_upper: np.ndarray
) -> float:
    """Data-driven smoothness constant valid in the half-margin region.

    M_hat = M + sum_i 10 M eta / alpha_i + 8 eta sum_i beta_i^2 / alpha_i^2.
    """
    alpha_lower = np.asarray(alpha_lower, dtype=np.float64)
    beta_upper = np.asarray(beta_upper, dtype=np.float64)
    for i, a in enumerate(alpha_lower):
        if a <= 0:
            raise MarginError("confidence", i + 1, float(a))
    return float(
        m
        + (10.0 * m * eta / alpha_lower).sum()
        + 8.0 * eta * (beta_upper**2 / alpha_lower**2).sum()
    )


def stepsize(
    m: float,
    m_hat: float,
    alpha_lower: np.ndarray,
    beta_upper: np.ndarray,
    barrier_grad_norm: float,
) -> float:
    """Adaptive stepsize: min of 1/M_hat and the local-region move cap.

    The second term bounds the move so every true margin keeps at least half
    its current value; with no constraints it degenerates to 1/M_hat.
    """
    alpha_lower = np.asarray(alpha_lower, dtype=np.float64)
    beta_upper = np.asarray(beta_upper, dtype=np.float64)
    for i, a in enumerate(alpha_lower):
        if a <= 0:
            raise MarginError("confidence", i + 1, float(a))
    if barrier_grad_norm <= 0:
        raise ValueError("barrier gradient norm must be positive")
    gamma_t = 1.0 / m_hat
    if alpha_lower.size:
        move = np.min(alpha_lower / (np.sqrt(m * alpha_lower) + 2.0 * np.abs(beta_upper)))
        gamma_t = min(gamma_t, float(move) / barrier_grad_norm)
    return gamma_t


def _sample_and_estimate(
    cmdp: TabularCmdp,
    policy: SoftmaxPolicy,
    n: int,
    horizon: int,
    m_g: float,
    rng: np.random.Generator,
) -> EstimateBundle:
    """Fresh batch plus the full estimate bundle; shared by every algorithm."""
    batch = sample_batch(cmdp, policy, n, horizon, rng)
    return estimate_bundle(batch, policy, cmdp.discount, cmdp.reward_bounds, m_g)


def lbsgd_step(
    cmdp: TabularCmdp,
    policy: SoftmaxPolicy,
    config: LbSgdConfig,
    rng: np.random.Generator,
    n: int | None = None,
    step_cap: float | None = None,
) -> tuple[SoftmaxPolicy | None, StepDiagnostics]:
    """One barrier-ascent iteration at the given policy.

    Returns (next policy, diagnostics) after an accepted step, or
    (None, diagnostics) when the break condition fires or a nonpositive
    estimated/confidence margin routes to recovery.  `n` and `step_cap`
    override the configured batch size and cap the applied stepsize (both
    used by the recovery path).
    """
    if policy.dim != cmdp.num_states * cmdp.num_actions:
        raise ValueError("policy dimension does not match the model")
    n_used = config.n if n is None else n
    bundle = _sample_and_estimate(cmdp, policy, n_used, config.horizon, config.m_g, rng)
    values = bundle.values
    alpha = np.array(
        [
            lower_conf_margin(
                float(values[i]), bundle.bounds[i], config.delta, float(cmdp.thresholds[i - 1])
            )
            for i in range(1, cmdp.num_signals)
        ]
    )
    try:
        barrier_grad = estimate_barrier_gradient(bundle, config.eta, cmdp.thresholds)
    except MarginError:
        return None, StepDiagnostics(
            event=EVENT_RECOVERY, estimated_values=values, alpha_lower=alpha
        )
    grad_norm = float(np.linalg.norm(barrier_grad))
    if grad_norm <= config.eta / 2.0:
        return None, StepDiagnostics(
            event=EVENT_BREAK,
            estimated_values=values,
            grad_norm=grad_norm,
            alpha_lower=alpha,
        )
    if np.any(alpha <= 0):
        return None, StepDiagnostics(
            event=EVENT_RECOVERY,
            estimated_values=values,
            grad_norm=grad_norm,
            alpha_lower=alpha,
        )
    beta = np.array(
        [
            upper_conf_dirderiv(bundle.gradients[i], barrier_grad, bundle.bounds[i], config.delta)
            for i in range(1, cmdp.num_signals)
        ]
    )
    m = config.smoothness_constant(cmdp.discount)
    m_hat = local_smoothness(m, config.eta, alpha, beta)
    gamma_t = stepsize(m, m_hat, alpha, beta, grad_norm)
    if step_cap is not None:
        gamma_t = min(gamma_t, step_cap)
    diag = StepDiagnostics(
        event=EVENT_CONTINUED,
        estimated_values=values,
        grad_norm=grad_norm,
        alpha_lower=alpha,
        beta_upper=beta,
        local_smoothness=m_hat,
        stepsize=gamma_t,
    )
    return policy.with_theta(policy.theta + gamma_t * barrier_grad), diag


def _oracle_record(cmdp: TabularCmdp, policy: SoftmaxPolicy):
    exact = np.array(
        [model.exact_values(cmdp, policy, i)[1] for i in range(cmdp.num_signals)]
    )
    feasible = bool(np.all(exact[1:] >= cmdp.thresholds))
    return exact, feasible


def drive_run(
    cmdp: TabularCmdp,
    policy: SoftmaxPolicy,
    rng: np.random.Generator,
    oracle_logging: bool,
    *,
    step_fn,
    n_initial: int,
    max_iters: int,
    recovery: RecoveryConfig,
    allow_break: bool,
    meta: dict,
) -> RunHistory:
    """Shared ascent driver handling recording, recovery, and termination.

    step_fn(policy, n, step_cap, rng) -> (next policy or None, diagnostics);
    it must flag recovery via the diagnostics event.
    """
    records: list[IterateRecord] = []
    accepted: list[SoftmaxPolicy] = [policy]
    n_cur = n_initial
    step_cap: float | None = None
    last_gamma: float | None = None
    recoveries = 0
    termination = EVENT_BUDGET

    def record(t, pol, diag):
        exact, feasible = _oracle_record(cmdp, pol) if oracle_logging else (None, None)
        records.append(IterateRecord(t, pol.theta, diag, exact, feasible))

    t = 0
    while t < max_iters:
        new_policy, diag = step_fn(policy, n_cur, step_cap, rng)
        record(t, policy, diag)
        t += 1
        if diag.event == EVENT_BREAK:
            if allow_break:
                termination = EVENT_BREAK
                break
            raise AssertionError("step function emitted a break it must not produce")
        if diag.event == EVENT_RECOVERY:
            if len(accepted) == 1 and recoveries == 0 and t == 1:
                raise InfeasibleStartError(
                    "initial policy infeasible by estimate; a strictly feasible "
                    "starting point is required"
                )
            if not recovery.enabled:
                if len(accepted) > 1:
                    accepted.pop()
                policy = accepted[-1]
                termination = "recovery-disabled"
                break
            recoveries += 1
            if recoveries > recovery.max_recoveries:
                if len(accepted) > 1:
                    accepted.pop()
                policy = accepted[-1]
                termination = "recovery-budget-exhausted"
                break
            if len(accepted) > 1:
                accepted.pop()
            policy = accepted[-1]
            n_cur = max(n_cur, math.ceil(n_cur * recovery.n_multiplier))
            if last_gamma is not None:
                shrunk = recovery.step_cap_shrink * last_gamma
                step_cap = shrunk if step_cap is None else min(step_cap, shrunk)
            continue
        policy = new_policy
        accepted.append(policy)
        last_gamma = diag.stepsize
    else:
        # Budget ran out with the loop still live: log the final iterate.
        record(max_iters, policy, StepDiagnostics(event=EVENT_BUDGET))

    meta = dict(meta)
    meta.update(
        {
            "num_signals": cmdp.num_signals,
            "recoveries": recoveries,
            "final_n": n_cur,
            "oracle_logging": oracle_logging,
        }
    )
    return RunHistory(records, policy.theta, termination, meta)


def lbsgd_run(
    cmdp: TabularCmdp,
    policy: SoftmaxPolicy,
    config: LbSgdConfig,
    rng: np.random.Generator,
    oracle_logging: bool = False,
) -> RunHistory:
    """Run the adaptive barrier ascent for up to max_iters iterations.

    The output parameters are those at the break iterate when the break
    condition fires, otherwise the final iterate.  Requires an initial policy
    that is strictly feasible by estimate.  With oracle_logging, every
    recorded iterate carries its exact values and feasibility flag.
    """
    delta_events = cmdp.num_constraints * config.max_iters * config.delta
    meta = {
        "algorithm": "lbsgd",
        "eta": config.eta,
        "delta": config.delta,
        "n_initial": config.n,
        "horizon": config.horizon,
        "max_iters": config.max_iters,
        "m_g": config.m_g,
        "m_h": config.m_h,
        "smoothness": config.smoothness_constant(cmdp.discount),
        # delta is per event; the union bound over constraints and iterations:
        "implied_union_delta": delta_events,
        "bernstein_n_ok": config.n >= 8.0 * (0.25 + math.log(1.0 / config.delta)),
    }

    def step_fn(pol, n_cur, cap, r):
        return lbsgd_step(cmdp, pol, config, r, n=n_cur, step_cap=cap)

    return drive_run(
        cmdp,
        policy,
        rng,
        oracle_logging,
        step_fn=step_fn,
        n_initial=config.n,
        max_iters=config.max_iters,
        recovery=config.recovery,
        allow_break=True,
        meta=meta,
    )
