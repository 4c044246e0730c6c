"""Closed-form index computations for the threshold scheduler.

Everything here is a pure function of channel parameters: Whittle index
values over the truncated belief space, the long-run activation time and
successful-transmission rate of a single-user threshold policy, and the
truncation-size diagnostics ``tau0``, ``f_tau`` and ``g_tau``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .channel import (
    Belief,
    ChannelParams,
    belief_after_off,
    belief_after_on,
    belief_pos,
    belief_value,
    num_states,
    stationary_prob,
)

RHO_MIN = 1e-15


@dataclass(frozen=True)
class Threshold:
    """Per-user threshold position with a randomization factor.

    ``kind`` is "at" (threshold sits on ``state``, scheduled there with
    probability ``rho``), "below_all" (always transmit) or "above_all"
    (never transmit).  The active set is every state whose canonical
    position lies above the threshold state's.
    """

    kind: str = "at"
    state: Belief | None = None
    rho: float = 1.0

    def __post_init__(self):
        if self.kind not in ("at", "below_all", "above_all"):
            raise ValueError(f"unknown threshold kind {self.kind!r}")
        if self.kind == "at":
            if self.state is None:
                raise ValueError("threshold kind 'at' needs a state")
            if not (0.0 < self.rho <= 1.0):
                raise ValueError(f"rho must lie in (0, 1], got {self.rho}")

    @classmethod
    def at(cls, state: Belief, rho: float = 1.0) -> "Threshold":
        return cls("at", state, rho)

    @classmethod
    def below_all(cls) -> "Threshold":
        return cls("below_all")

    @classmethod
    def above_all(cls) -> "Threshold":
        return cls("above_all")


def second_branch_index(params: ChannelParams) -> float:
    """Whittle index of the stationary state: b_s / (b_s + 1 - p11)."""
    p11, p01 = params.p11, params.p01
    return p01 / ((1.0 - p11) * (1.0 + p01 - p11) + p01)


def whittle_index(params: ChannelParams, state: Belief, tau: int) -> float:
    """Whittle index of one belief state, in [0, 1].

    For beliefs at or above the stationary value (stationary and
    ON-observed states) the index is x / (x + 1 - p11), the subsidy at
    which transmitting at belief x stops beating idling; the subsidy-MDP
    bisection oracle confirms this branch state by state.  The OFF-observed
    branch is the usual renewal-cycle expression.
    """
    if state.is_stationary or state.obs == 1:
        x = belief_value(params, state, tau)
        return x / (x + 1.0 - params.p11)
    if not (1 <= state.age <= tau):
        raise ValueError(f"age {state.age} outside [1, {tau}]")
    l = state.age
    b_l = float(belief_after_off(params, l))
    b_n = float(belief_after_off(params, l + 1))
    num = (b_l - b_n) * (l + 1) + b_n
    den = 1.0 - params.p11 + (b_l - b_n) * l + b_n
    return num / den


def whittle_table(params: ChannelParams, tau: int) -> np.ndarray:
    """Whittle index for every state, indexed by canonical position."""
    out = np.empty(num_states(tau))
    ages = np.arange(1, tau + 1)
    b_l = belief_after_off(params, ages)
    b_n = belief_after_off(params, ages + 1)
    out[:tau] = ((b_l - b_n) * (ages + 1) + b_n) / (
        1.0 - params.p11 + (b_l - b_n) * ages + b_n
    )
    b_on = belief_after_on(params, ages[::-1])
    out[tau] = second_branch_index(params)
    out[tau + 1 :] = b_on / (b_on + 1.0 - params.p11)
    return out


def weighted_index(weight: float, index_value: float) -> float:
    if weight < 0:
        raise ValueError(f"weights must be nonnegative, got {weight}")
    return weight * index_value


def _metrics_threshold_off(params: ChannelParams, tau: int, h: int, rho):
    """alpha and nu with the threshold on Observed(0, h); vectorized in rho."""
    rho = np.asarray(rho, dtype=float)
    b_h = float(belief_after_off(params, h))
    b_next = float(belief_after_off(params, h + 1)) if h < tau else stationary_prob(params)
    q = 1.0 - params.p11
    beta = rho * b_h + (1.0 - rho) * b_next
    den = beta + q * (h + 1 - rho)
    return (beta + q) / den, beta / den


def _metrics_threshold_stationary(params: ChannelParams, tau: int, rho):
    """alpha and nu with the threshold on the stationary state.

    Derived by a renewal argument on the cycle that starts each time the
    chain leaves the stationary state: both metrics share the denominator
    (1 + rho*tau)(1 - p11) + rho*b_s, which keeps nu <= alpha for every rho
    and matches the exact chain oracle to machine precision.
    """
    rho = np.asarray(rho, dtype=float)
    b_s = stationary_prob(params)
    q = 1.0 - params.p11
    den = (1.0 + rho * tau) * q + rho * b_s
    return rho * (q + b_s) / den, rho * b_s / den


def activation_rate(
    params: ChannelParams, tau: int, threshold: Threshold
) -> tuple[float, float]:
    """Long-run (activation time, successful-transmission rate) of one user
    under a single-user threshold policy."""
    if threshold.kind == "above_all":
        return 0.0, 0.0
    if threshold.kind == "below_all":
        return 1.0, stationary_prob(params)
    state = threshold.state
    if state.obs == 1:
        # stationary state passive: transient ON activity never recurs
        return 0.0, 0.0
    if state.is_stationary:
        a, n = _metrics_threshold_stationary(params, tau, threshold.rho)
    else:
        if not (1 <= state.age <= tau):
            raise ValueError(f"age {state.age} outside [1, {tau}]")
        a, n = _metrics_threshold_off(params, tau, state.age, threshold.rho)
    return float(a), float(n)


def activation_time(params: ChannelParams, tau: int, threshold: Threshold) -> float:
    return activation_rate(params, tau, threshold)[0]


def transmission_rate(params: ChannelParams, tau: int, threshold: Threshold) -> float:
    return activation_rate(params, tau, threshold)[1]


def metrics_by_active_set(params: ChannelParams, tau: int) -> tuple[np.ndarray, np.ndarray]:
    """alpha and nu of the policies "activate every state at position >= p".

    Returned arrays have length 2*tau + 2; entry p corresponds to the active
    set {positions >= p}, so entry 0 is the always-transmit policy and the
    last entry is never-transmit.  Once the stationary state is passive
    (p > tau) the belief chain is absorbed there and both metrics are 0.
    """
    k = num_states(tau)
    alpha = np.zeros(k + 1)
    nu = np.zeros(k + 1)
    b_s = stationary_prob(params)
    q = 1.0 - params.p11
    ages = np.arange(1, tau + 1)  # active set {pos >= p} == threshold Observed(0, p+1), rho=1
    b_h = belief_after_off(params, ages)
    alpha[:tau] = (b_h + q) / (b_h + q * ages)
    nu[:tau] = b_h / (b_h + q * ages)
    alpha[tau] = (q + b_s) / ((1.0 + tau) * q + b_s)
    nu[tau] = b_s / ((1.0 + tau) * q + b_s)
    return alpha, nu


def threshold_chain(params: ChannelParams, tau: int, rho_grid) -> tuple[np.ndarray, np.ndarray]:
    """alpha and nu along the totally ordered chain of threshold policies.

    The chain starts from never-transmit and moves the threshold down:
    stationary state with rho ascending, then Observed(0, tau) down to
    Observed(0, 1), each with rho ascending.  Activation time increases
    along the chain (each policy's rho -> 0 limit is the previous state's
    rho = 1 point), so monotonicity of consecutive entries covers every
    threshold pair.
    """
    rho_grid = np.asarray(rho_grid, dtype=float)
    alphas = [np.zeros(1)]
    nus = [np.zeros(1)]
    a, v = _metrics_threshold_stationary(params, tau, rho_grid)
    alphas.append(a)
    nus.append(v)
    for h in range(tau, 0, -1):
        a, v = _metrics_threshold_off(params, tau, h, rho_grid)
        alphas.append(a)
        nus.append(v)
    return np.concatenate(alphas), np.concatenate(nus)


def threshold_for_pos(pos: int, tau: int, rho: float = 1.0) -> Threshold:
    from .channel import belief_from_pos

    return Threshold.at(belief_from_pos(pos, tau), rho)


def tau0(channels: Iterable[ChannelParams]) -> float:
    """Truncation-size scale below which the monotonicity lemmas may fail.

    Natural logarithm; callers round up when using this as a state count.
    """
    worst = 0.0
    for params in channels:
        log_gap = math.log(params.memory)
        worst = max(worst, 1.0 / -log_gap, 1.0 / log_gap**2)
    return 4.0 * worst


def f_tau(channels: Iterable[ChannelParams], tau: int) -> float:
    """Truncation throughput-gap bound: sum of activation times with the
    threshold on the oldest OFF-observation."""
    if tau < 1:
        raise ValueError(f"tau must be >= 1, got {tau}")
    total = 0.0
    for params in channels:
        b_t = float(belief_after_off(params, tau))
        q = 1.0 - params.p11
        total += (b_t + q) / (b_t + q * tau)
    return total


def g_tau(channels: Iterable[ChannelParams], tau: int) -> float:
    """Stability-region backoff bound; exactly three times ``f_tau``."""
    return 3.0 * f_tau(channels, tau)


def pos_of(state: Belief, tau: int) -> int:
    return belief_pos(state, tau)
