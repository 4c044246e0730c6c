"""Independent ground-truth computations used to validate the closed forms.

Two oracles live here.  The stationary-chain oracle materializes the belief
Markov chain induced by a single-user threshold policy and reads activation
time and transmission rate off its stationary distribution.  The subsidy
oracle solves the passivity-subsidy average-reward MDP by relative value
iteration and recovers Whittle index values by bisection on the subsidy.
Neither shares a code path with the closed forms in :mod:`arqsched.whittle`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import Belief, ChannelParams, belief_pos, belief_table, num_states
from .whittle import Threshold


def aging_map(tau: int) -> np.ndarray:
    """Successor position of every state under an idle slot."""
    pos = np.arange(num_states(tau))
    return pos + (pos < tau).astype(int) - (pos > tau).astype(int)


def activation_profile(tau: int, threshold: Threshold) -> np.ndarray:
    """Per-state transmission probability a(s) in {0, rho, 1}."""
    k = num_states(tau)
    a = np.zeros(k)
    if threshold.kind == "below_all":
        a[:] = 1.0
        return a
    if threshold.kind == "above_all":
        return a
    state = threshold.state
    cut = belief_pos(state, tau)
    a[cut + 1 :] = 1.0
    a[cut] = threshold.rho
    return a


def belief_chain_kernel(
    params: ChannelParams, tau: int, activation: np.ndarray
) -> np.ndarray:
    """Transition matrix of the belief chain under per-state activation
    probabilities."""
    k = num_states(tau)
    beliefs = belief_table(params, tau)
    kernel = np.zeros((k, k))
    idle = aging_map(tau)
    rows = np.arange(k)
    kernel[rows, idle] += 1.0 - activation
    kernel[rows, 2 * tau] += activation * beliefs  # ACK: fresh ON observation
    kernel[rows, 0] += activation * (1.0 - beliefs)  # NACK: fresh OFF observation
    return kernel


def stationary_distribution(kernel: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Stationary vector of a unichain kernel; power iteration fallback."""
    k = kernel.shape[0]
    a = kernel.T - np.eye(k)
    a[-1, :] = 1.0
    b = np.zeros(k)
    b[-1] = 1.0
    try:
        pi = np.linalg.solve(a, b)
    except np.linalg.LinAlgError:
        pi = None
    if pi is not None and pi.min() > -1e-9:
        pi = np.clip(pi, 0.0, None)
        return pi / pi.sum()
    pi = np.full(k, 1.0 / k)
    for _ in range(2_000_000):
        nxt = pi @ kernel
        if np.abs(nxt - pi).max() < tol:
            return nxt / nxt.sum()
        pi = nxt
    raise RuntimeError("power iteration did not converge")


def exact_stationary_metrics(
    params: ChannelParams, tau: int, threshold: Threshold
) -> tuple[float, float]:
    """Exact (activation time, transmission rate) from the stationary chain."""
    if threshold.kind == "at" and threshold.rho <= 0.0:
        raise ValueError("rho must be positive for a recurrent threshold chain")
    activation = activation_profile(tau, threshold)
    kernel = belief_chain_kernel(params, tau, activation)
    pi = stationary_distribution(kernel)
    beliefs = belief_table(params, tau)
    alpha = float(pi @ activation)
    nu = float(pi @ (activation * beliefs))
    return alpha, nu


def exact_metrics_for_cut(
    params: ChannelParams, tau: int, cut: int, rho: float
) -> tuple[float, float]:
    """Exact metrics of the raw cut policy: positions above ``cut`` always
    transmit, position ``cut`` with probability ``rho``, the rest never.

    With the stationary state passive (cut > tau) the chain is absorbed
    there and both metrics are 0.
    """
    k = num_states(tau)
    if not (0 <= cut <= k):
        raise ValueError(f"cut {cut} outside [0, {k}]")
    activation = np.zeros(k)
    if cut < k:
        activation[cut + 1 :] = 1.0
        activation[cut] = rho
    kernel = belief_chain_kernel(params, tau, activation)
    pi = stationary_distribution(kernel)
    beliefs = belief_table(params, tau)
    return float(pi @ activation), float(pi @ (activation * beliefs))


@dataclass(frozen=True)
class SubsidyProblem:
    """Single-user average-reward MDP paying ``subsidy`` per idle slot and
    ``weight * belief`` per transmission slot."""

    params: ChannelParams
    tau: int
    subsidy: float
    weight: float = 1.0

    def __post_init__(self):
        if self.subsidy < 0.0:
            raise ValueError("subsidy must be nonnegative")
        if self.weight < 0.0:
            raise ValueError("weight must be nonnegative")


@dataclass
class SubsidySolution:
    gain: float
    bias: np.ndarray
    q_active: np.ndarray
    q_passive: np.ndarray
    iterations: int

    def action_map(self, indifference_margin: float) -> np.ndarray:
        """+1 active, -1 passive, 0 indifferent."""
        diff = self.q_active - self.q_passive
        out = np.where(diff > 0, 1, -1)
        out[np.abs(diff) <= indifference_margin] = 0
        return out

    def passive_set(self, margin: float) -> np.ndarray:
        return (self.q_passive - self.q_active) >= -margin


def subsidy_value_iteration(
    problem: SubsidyProblem,
    tol: float = 1e-10,
    max_iter: int = 2_000_000,
    bias_init: np.ndarray | None = None,
) -> SubsidySolution:
    """Relative value iteration with the stationary state as reference.

    Stops when the span of the Bellman updates drops below ``tol``.
    """
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    params, tau = problem.params, problem.tau
    k = num_states(tau)
    beliefs = belief_table(params, tau)
    idle = aging_map(tau)
    r_active = problem.weight * beliefs
    on_pos, off_pos, ref = 2 * tau, 0, tau

    h = np.zeros(k) if bias_init is None else bias_init.copy()
    q_a = np.empty(k)
    q_p = np.empty(k)
    for it in range(1, max_iter + 1):
        np.multiply(beliefs, h[on_pos], out=q_a)
        q_a += (1.0 - beliefs) * h[off_pos]
        q_a += r_active
        np.copyto(q_p, h[idle])
        q_p += problem.subsidy
        new = np.maximum(q_a, q_p)
        delta = new - h
        span = delta.max() - delta.min()
        h = new - new[ref]
        if span < tol:
            gain = 0.5 * (delta.max() + delta.min())
            return SubsidySolution(float(gain), h, q_a - new[ref], q_p - new[ref], it)
    raise RuntimeError(
        f"value iteration hit the {max_iter} iteration cap with span {span:.3e}"
    )


def whittle_index_oracle(
    params: ChannelParams,
    state: Belief,
    tau: int,
    tol: float = 1e-8,
    vi_tol: float = 1e-10,
) -> float:
    """Whittle index as the infimum subsidy making idleness optimal at
    ``state``, located by bisection over [0, 1]."""
    from .channel import belief_pos

    pos = belief_pos(state, tau)

    def prefers_active(omega: float, bias: np.ndarray | None) -> tuple[bool, np.ndarray]:
        sol = subsidy_value_iteration(
            SubsidyProblem(params, tau, omega), tol=vi_tol, bias_init=bias
        )
        return bool(sol.q_active[pos] > sol.q_passive[pos]), sol.bias

    lo, hi = 0.0, 1.0
    bias = None
    active_lo, bias = prefers_active(lo, bias)
    if not active_lo:
        return 0.0
    active_hi, bias = prefers_active(hi, bias)
    if active_hi:
        raise RuntimeError("state stays active for every subsidy in [0, 1]")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        active, bias = prefers_active(mid, bias)
        if active:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
