"""Monte-Carlo value/gradient estimators and their bias/deviation constants.

Estimates are computed from batches of truncated trajectories:

* value: average discounted return over the batch,
* gradient: the GPOMDP estimator, evaluated in one pass per trajectory by
  accumulating suffix-discounted rewards against visit scores (O(nH), not
  O(nH^2)),
* curvature: a Monte-Carlo second-order estimator whose operator norm serves
  as a data-driven smoothness constant.

The accompanying constants b0/b1 (truncation bias) and sigma0/sigma1
(sub-Gaussian deviation scales) are per signal and scale linearly in the
signal's reward bound R_i.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import TabularCmdp, TrajectoryBatch
from .policy import SoftmaxPolicy

__all__ = [
    "MarginError",
    "ErrorBounds",
    "EstimateBundle",
    "error_bounds",
    "lipschitz_and_smoothness",
    "required_sample_size",
    "trajectory_returns",
    "estimate_value",
    "estimate_gradient_gpomdp",
    "estimate_barrier_gradient",
    "estimate_bundle",
    "estimate_smoothness",
]


class MarginError(ValueError):
    """A constraint margin needed by the barrier is nonpositive.

    Signals the recovery path of the ascent loop rather than a programming
    error.  `kind` is "estimated" (hat V_i - b_i <= 0) or "confidence"
    (lower confidence margin <= 0); `index` is the 1-based constraint index.
    """

    def __init__(self, kind: str, index: int, value: float):
        self.kind = kind
        self.index = index
        self.value = value
        super().__init__(f"{kind} margin nonpositive for constraint {index}: {value!r}")


@dataclass(frozen=True)
class ErrorBounds:
    """Bias and deviation constants for one signal at a given (n, H).

    b0/b1 bound the truncation bias of the value/gradient estimators and
    decrease in H; sigma0/sigma1 are the sub-Gaussian deviation scales and
    shrink like 1/sqrt(n).
    """

    b0: float
    b1: float
    sigma0: float
    sigma1: float


def error_bounds(
    n: int, horizon: int, gamma: float, m_g: float = 1.0, reward_bound: float = 1.0
) -> ErrorBounds:
    """Evaluate the four constants at batch size n and horizon H.

    b0 = R g^H / (1-g)
    b1 = R m_g g^H / (1-g) * sqrt(1/(1-g) + H)
    sigma0 = R sqrt(2) / (sqrt(n) (1-g))
    sigma1 = R 2 sqrt(2) m_g / (sqrt(n) (1-g)^{3/2})
    """
    if n < 1 or horizon < 1:
        raise ValueError("n and horizon must be >= 1")
    one_minus = 1.0 - gamma
    gh = gamma**horizon
    b0 = reward_bound * gh / one_minus
    b1 = reward_bound * m_g * gh / one_minus * math.sqrt(1.0 / one_minus + horizon)
    sigma0 = reward_bound * math.sqrt(2.0) / (math.sqrt(n) * one_minus)
    sigma1 = reward_bound * 2.0 * math.sqrt(2.0) * m_g / (math.sqrt(n) * one_minus**1.5)
    return ErrorBounds(b0=b0, b1=b1, sigma0=sigma0, sigma1=sigma1)


def lipschitz_and_smoothness(
    m_g: float, m_h: float, gamma: float, reward_bound: float = 1.0
) -> tuple[float, float]:
    """Value-function constants L = R m_g/(1-g)^2 and M = R (m_g^2+m_h)/(1-g)^2."""
    if not 0.0 < gamma < 1.0:
        raise ValueError("discount out of (0,1)")
    denom = (1.0 - gamma) ** 2
    return reward_bound * m_g / denom, reward_bound * (m_g**2 + m_h) / denom


_MAX_N = 2**62
_MAX_H = 10**6


def required_sample_size(
    sigma0_cap: float,
    sigma1_cap: float,
    b0_cap: float,
    b1_cap: float,
    gamma: float,
    m_g: float = 1.0,
    reward_bound: float = 1.0,
) -> tuple[int, int]:
    """Invert the constant formulas: smallest (n, H) meeting all four caps.

    n solves both sigma caps analytically.  H is found by scanning upward:
    b0 is monotone decreasing but b1 rises before its peak, so the scan
    accepts the first H from which both caps hold for every larger H as well.
    """
    if min(sigma0_cap, sigma1_cap, b0_cap, b1_cap) <= 0:
        raise ValueError("all caps must be positive")
    one_minus = 1.0 - gamma
    n0 = (reward_bound * math.sqrt(2.0) / (sigma0_cap * one_minus)) ** 2
    n1 = (reward_bound * 2.0 * math.sqrt(2.0) * m_g / (sigma1_cap * one_minus**1.5)) ** 2
    n_req = max(n0, n1, 1.0)
    if not np.isfinite(n_req) or n_req > _MAX_N:
        raise ValueError(f"sigma caps unreachable: would require n ~ {n_req:.3e}")
    n = max(1, math.ceil(n_req - 1e-9))

    # b1(H) ~ g^H sqrt(c + H) peaks at H* = -1/(2 ln g) - c; monotone after.
    c = 1.0 / one_minus
    h_peak = max(1, math.ceil(-0.5 / math.log(gamma) - c))

    def b0_at(h):
        return reward_bound * gamma**h / one_minus

    def b1_at(h):
        return reward_bound * m_g * gamma**h / one_minus * math.sqrt(c + h)

    for h in range(1, _MAX_H + 1):
        tail_b1 = max(b1_at(h), b1_at(h_peak)) if h < h_peak else b1_at(h)
        if b0_at(h) <= b0_cap and tail_b1 <= b1_cap:
            return n, h
    raise ValueError(f"bias caps unreachable within H <= {_MAX_H}")


def trajectory_returns(batch: TrajectoryBatch, i: int, gamma: float) -> np.ndarray:
    """Per-trajectory discounted return sum_t gamma^t r_i(s_t, a_t), shape (n,)."""
    if not 0 <= i < batch.num_signals:
        raise IndexError(f"signal index {i} out of range [0, {batch.num_signals})")
    weights = gamma ** np.arange(batch.horizon)
    return batch.rewards[i] @ weights


def estimate_value(batch: TrajectoryBatch, i: int, gamma: float) -> float:
    """Batch-average truncated value estimate of signal i."""
    return float(trajectory_returns(batch, i, gamma).mean())


def _suffix_discounted(batch: TrajectoryBatch, i: int, gamma: float) -> np.ndarray:
    """c[j, t] = sum_{u >= t} gamma^u r_i(s_u, a_u), shape (n, H)."""
    w = batch.rewards[i] * gamma ** np.arange(batch.horizon)
    return np.cumsum(w[:, ::-1], axis=1)[:, ::-1]


def estimate_gradient_gpomdp(
    batch: TrajectoryBatch, policy: SoftmaxPolicy, i: int, gamma: float
) -> np.ndarray:
    """GPOMDP gradient estimate of V_i(rho), flat parameter layout.

    Equals (1/n) sum_j sum_{t<H} sum_{t'<=t} gamma^t r_i(s_t, a_t)
    grad log pi(a_{t'}|s_{t'}); implemented by pairing each visit's score with
    the suffix-discounted reward from that step onward, one pass per batch.
    """
    if not 0 <= i < batch.num_signals:
        raise IndexError(f"signal index {i} out of range [0, {batch.num_signals})")
    S, A = policy.num_states, policy.num_actions
    probs = policy.prob_matrix()
    c = _suffix_discounted(batch, i, gamma).ravel()
    flat_sa = (batch.states * A + batch.actions).ravel()
    grad = np.bincount(flat_sa, weights=c, minlength=S * A).reshape(S, A)
    per_state = np.bincount(batch.states.ravel(), weights=c, minlength=S)
    grad -= per_state[:, None] * probs
    return grad.reshape(-1) / batch.n


@dataclass(frozen=True)
class EstimateBundle:
    """All per-signal estimates from one batch, with their bound constants."""

    values: np.ndarray  # (m+1,)
    gradients: np.ndarray  # (m+1, S*A)
    bounds: list[ErrorBounds]  # per signal
    n: int
    horizon: int


def estimate_bundle(
    batch: TrajectoryBatch,
    policy: SoftmaxPolicy,
    gamma: float,
    reward_bounds: np.ndarray,
    m_g: float | None = None,
) -> EstimateBundle:
    """Estimate every signal's value and gradient from one shared batch."""
    if m_g is None:
        m_g = policy.m_g
    k = batch.num_signals
    values = np.array([estimate_value(batch, i, gamma) for i in range(k)])
    gradients = np.stack([estimate_gradient_gpomdp(batch, policy, i, gamma) for i in range(k)])
    bnds = [
        error_bounds(batch.n, batch.horizon, gamma, m_g, float(reward_bounds[i]))
        for i in range(k)
    ]
    return EstimateBundle(values, gradients, bnds, batch.n, batch.horizon)


def estimate_barrier_gradient(
    bundle: EstimateBundle, eta: float, thresholds: np.ndarray
) -> np.ndarray:
    """Plug-in log-barrier gradient: grad V0 + eta sum_i grad V_i / (V_i - b_i).

    Margins are the estimated values minus their thresholds; a nonpositive
    margin raises MarginError (the recovery signal) rather than producing a
    sign-flipped barrier term.
    """
    if eta <= 0:
        raise ValueError("eta must be positive")
    thresholds = np.asarray(thresholds, dtype=np.float64)
    m = thresholds.shape[0]
    if bundle.values.shape[0] != m + 1:
        raise ValueError(
            f"bundle carries {bundle.values.shape[0]} signals but got {m} thresholds"
        )
    grad = bundle.gradients[0].copy()
    for i in range(1, m + 1):
        margin = bundle.values[i] - thresholds[i - 1]
        if margin <= 0:
            raise MarginError("estimated", i, float(margin))
        grad += eta * bundle.gradients[i] / margin
    return grad


def _spectral_norm(mat: np.ndarray, tol: float = 1e-8, max_iters: int = 10**4) -> float:
    """Operator norm of a symmetric matrix by power iteration on mat @ mat.

    Squaring removes sign ambiguity for indefinite matrices.  Deterministic
    fixed-seed start vector; raises on non-convergence.
    """
    d = mat.shape[0]
    v = np.random.default_rng(0).standard_normal(d)
    v /= np.linalg.norm(v)
    prev = 0.0
    for _ in range(max_iters):
        w = mat @ (mat @ v)
        norm_w = np.linalg.norm(w)
        if norm_w == 0.0:
            return 0.0
        v = w / norm_w
        est = math.sqrt(float(v @ (mat @ (mat @ v))))
        if abs(est - prev) <= tol * max(est, 1e-300):
            return est
        prev = est
    raise RuntimeError(f"power iteration did not converge in {max_iters} iterations")


def estimate_smoothness(
    batch: TrajectoryBatch,
    policy: SoftmaxPolicy,
    i: int,
    gamma: float,
    chunk: int = 512,
) -> float:
    """Monte-Carlo estimate of the smoothness of V_i: ||hat Hessian V_i(rho)||.

    Per trajectory the second-order estimator sums, over t, gamma^t r_i(t)
    times (cumulative score Hessian + outer product of the cumulative score).
    Both terms reduce to per-visit accumulations: the Hessian part pairs each
    visit's log-softmax Hessian block with the suffix-discounted reward; the
    outer-product part is formed from cumulative score rows, chunked over
    trajectories to bound memory.
    """
    if not 0 <= i < batch.num_signals:
        raise IndexError(f"signal index {i} out of range [0, {batch.num_signals})")
    S, A = policy.num_states, policy.num_actions
    d = S * A
    n, H = batch.n, batch.horizon
    probs = policy.prob_matrix()

    c = _suffix_discounted(batch, i, gamma)  # (n, H)

    # Hessian-of-log-pi part: block diagonal, one (A, A) block per state.
    state_w = np.bincount(batch.states.ravel(), weights=c.ravel(), minlength=S)
    hess = np.zeros((d, d))
    for s in range(S):
        if state_w[s] == 0.0:
            continue
        p = probs[s]
        block = np.outer(p, p) - np.diag(p)
        sl = slice(s * A, (s + 1) * A)
        hess[sl, sl] += state_w[s] * block

    # Outer-product part: sum_{j,t} gamma^t r_i(j,t) G_{j,t} G_{j,t}^T with
    # G the cumulative score; needs the dense cumulative rows, so chunk.
    w = batch.rewards[i] * gamma ** np.arange(H)  # (n, H)
    rows = np.arange(A)
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        cn = hi - lo
        score = np.zeros((cn, H, d))
        s_chunk = batch.states[lo:hi]
        a_chunk = batch.actions[lo:hi]
        cols = s_chunk[:, :, None] * A + rows
        ci = np.arange(cn)[:, None, None]
        ti = np.arange(H)[None, :, None]
        score[ci, ti, cols] = -probs[s_chunk]
        score[np.arange(cn)[:, None], np.arange(H)[None, :], s_chunk * A + a_chunk] += 1.0
        g = np.cumsum(score, axis=1).reshape(cn * H, d)
        wg = w[lo:hi].reshape(cn * H, 1) * g
        hess += g.T @ wg

    hess /= n
    hess = 0.5 * (hess + hess.T)
    return _spectral_norm(hess)
