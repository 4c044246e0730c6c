"""Threshold scheduling policies built on weighted Whittle indices.

``initialize`` reproduces the sorted-ladder walk that finds the threshold
entry and randomization factor making the long-run expected number of
transmissions exactly equal to the budget.  ``QwiPolicy`` re-runs that
initialization at every frame boundary with current queue lengths as
weights.  Threshold comparisons are done on ladder *ranks*, never on float
equality, so tie handling is deterministic and exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelParams, belief_from_pos, num_states
from .whittle import RHO_MIN, Threshold, activation_time

_STATE_DTYPE = np.float64


def channel_arrays(channels) -> tuple[np.ndarray, np.ndarray]:
    p11 = np.array([c.p11 for c in channels], dtype=_STATE_DTYPE)
    p01 = np.array([c.p01 for c in channels], dtype=_STATE_DTYPE)
    return p11, p01


def _gap_powers(p11: np.ndarray, p01: np.ndarray, tau: int) -> np.ndarray:
    """(N, tau+1) table of (p11 - p01)**age for age = 1..tau+1.

    Built by cumulative products: much cheaper than broadcast power for the
    large ladders the initialization sorts.
    """
    gap = (p11 - p01)[:, None]
    return np.cumprod(np.broadcast_to(gap, (gap.shape[0], tau + 1)), axis=1)


def belief_tables(p11: np.ndarray, p01: np.ndarray, tau: int) -> np.ndarray:
    """(N, 2*tau+1) belief values by canonical position, all channels at once."""
    pows = _gap_powers(p11, p01, tau)[:, :tau]
    denom = (1.0 - (p11 - p01))[:, None]
    out = np.empty((p11.shape[0], num_states(tau)))
    out[:, :tau] = p01[:, None] * (1.0 - pows) / denom
    out[:, tau] = p01 / (1.0 + p01 - p11)
    out[:, tau + 1 :] = (p01[:, None] + (1.0 - p11)[:, None] * pows[:, ::-1]) / denom
    return out


def whittle_tables(p11: np.ndarray, p01: np.ndarray, tau: int) -> np.ndarray:
    """(N, 2*tau+1) Whittle index values by canonical position."""
    pows = _gap_powers(p11, p01, tau)
    denom = (1.0 - (p11 - p01))[:, None]
    b_off = p01[:, None] * (1.0 - pows) / denom  # ages 1..tau+1
    b_l, b_n = b_off[:, :tau], b_off[:, 1:]
    ages = np.arange(1, tau + 1, dtype=_STATE_DTYPE)[None, :]
    out = np.empty((p11.shape[0], num_states(tau)))
    out[:, :tau] = ((b_l - b_n) * (ages + 1) + b_n) / (
        (1.0 - p11)[:, None] + (b_l - b_n) * ages + b_n
    )
    out[:, tau] = p01 / ((1.0 - p11) * (1.0 + p01 - p11) + p01)
    b_on = (p01[:, None] + (1.0 - p11)[:, None] * pows[:, :tau][:, ::-1]) / denom
    out[:, tau + 1 :] = b_on / (b_on + (1.0 - p11)[:, None])
    # the index is nondecreasing in belief position; a running maximum
    # scrubs last-ulp rounding inversions that would break the ladder
    # walk's prefix-cut accounting
    return np.maximum.accumulate(out, axis=1)


def activation_by_cut(p11: np.ndarray, p01: np.ndarray, tau: int) -> tuple[np.ndarray, np.ndarray]:
    """(N, 2*tau+2) long-run alpha and nu of "activate positions >= p".

    Column p is the policy whose active set is {positions >= p}; the final
    column (empty active set) is zero, as are all columns past the
    stationary position, whose chains are absorbed in the passive
    stationary state.
    """
    n = p11.shape[0]
    k = num_states(tau)
    q = (1.0 - p11)[:, None]
    bs = (p01 / (1.0 + p01 - p11))[:, None]
    ages = np.arange(1, tau + 1, dtype=_STATE_DTYPE)[None, :]
    b_h = p01[:, None] * (1.0 - _gap_powers(p11, p01, tau)[:, :tau]) / (1.0 - (p11 - p01))[:, None]
    alpha = np.zeros((n, k + 1))
    nu = np.zeros((n, k + 1))
    alpha[:, :tau] = (b_h + q) / (b_h + q * ages)
    nu[:, :tau] = b_h / (b_h + q * ages)
    alpha[:, tau] = ((q + bs) / ((1.0 + tau) * q + bs))[:, 0]
    nu[:, tau] = (bs / ((1.0 + tau) * q + bs))[:, 0]
    return alpha, nu


def _reduced_tables(p11: np.ndarray, p01: np.ndarray, tau: int):
    """Weighted-ladder inputs over positions 0..tau only.

    Returns (windex, alpha, nu): index values (N, tau+1) and cut metrics
    (N, tau+2), where cut column p is the active set {positions >= p} and
    the final column (stationary passive, chain absorbed) is zero.
    ON-observation entries are omitted: they sort above their user's
    stationary entry and contribute no long-run activation, so the ladder
    walk never lands on them.
    """
    kr = tau + 1
    n = p11.shape[0]
    q = (1.0 - p11)[:, None]
    bs = (p01 / (1.0 + p01 - p11))[:, None]
    pows = _gap_powers(p11, p01, tau)  # gap**age, age = 1..tau+1
    b_off = p01[:, None] * (1.0 - pows) / (1.0 - (p11 - p01))[:, None]
    ages = np.arange(1, kr, dtype=_STATE_DTYPE)[None, :]

    windex = np.empty((n, kr))
    diff = b_off[:, :tau] - b_off[:, 1:]
    windex[:, :tau] = (diff * (ages + 1) + b_off[:, 1:]) / (q + diff * ages + b_off[:, 1:])
    windex[:, tau] = (p01 / ((1.0 - p11) * (1.0 + p01 - p11) + p01))
    np.maximum.accumulate(windex, axis=1, out=windex)

    alpha = np.zeros((n, kr + 1))
    nu = np.zeros((n, kr + 1))
    den = b_off[:, :tau] + q * ages
    alpha[:, :tau] = (b_off[:, :tau] + q) / den
    nu[:, :tau] = b_off[:, :tau] / den
    den_s = (1.0 + tau) * q + bs
    alpha[:, tau] = ((q + bs) / den_s)[:, 0]
    nu[:, tau] = (bs / den_s)[:, 0]
    return windex, alpha, nu


def solve_rho(
    params: ChannelParams,
    tau: int,
    threshold_state,
    target_alpha: float,
    tol: float = 1e-12,
) -> float:
    """Randomization factor whose activation time hits ``target_alpha``.

    Bisection over rho; activation time is monotone in rho so the bracket
    check is exact up to ``tol``.
    """
    lo, hi = RHO_MIN, 1.0
    a_lo = activation_time(params, tau, Threshold.at(threshold_state, lo))
    a_hi = activation_time(params, tau, Threshold.at(threshold_state, hi))
    if not (a_lo - tol <= target_alpha <= a_hi + tol):
        raise ValueError(
            f"target activation {target_alpha} outside [{a_lo}, {a_hi}]"
        )
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        a_mid = activation_time(params, tau, Threshold.at(threshold_state, mid))
        if abs(a_mid - target_alpha) < tol:
            return mid
        if a_mid < target_alpha:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass
class ThresholdPolicy:
    """Initialized r-weighted index policy over the truncated belief space.

    The threshold is the ladder entry ``threshold_entry = (user, position)``
    scheduled with probability ``rho``; every entry whose weighted index is
    strictly larger -- ties broken by flat (user-major, position-minor)
    order, exactly as a stable sort would -- always transmits, the rest
    never do.  ``sentinel`` marks the two degenerate policies without a
    threshold entry: "below_all" transmits everywhere, "above_all" nowhere.
    """

    channels: tuple
    tau: int
    weights: np.ndarray
    rho: float
    alpha_hat: np.ndarray
    nu_hat: np.ndarray
    threshold_entry: tuple[int, int] | None = None
    sentinel: str | None = None
    slack: bool = False
    meta: dict = field(default_factory=dict)
    _values: np.ndarray | None = field(default=None, repr=False)
    _rank_table: np.ndarray | None = field(default=None, repr=False)
    _activation_table: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if (self.threshold_entry is None) == (self.sentinel is None):
            raise ValueError("exactly one of threshold_entry/sentinel is required")
        if self.sentinel not in (None, "below_all", "above_all"):
            raise ValueError(f"unknown sentinel {self.sentinel!r}")

    @property
    def values(self) -> np.ndarray:
        """(N, 2*tau+1) weighted index values by canonical position."""
        if self._values is None:
            p11, p01 = channel_arrays(self.channels)
            self._values = self.weights[:, None] * whittle_tables(p11, p01, self.tau)
        return self._values

    @property
    def rank_table(self) -> np.ndarray:
        """Stable-sort ladder rank of every (user, position) entry."""
        if self._rank_table is None:
            order = np.argsort(self.values.ravel(), kind="stable")
            ranks = np.empty(order.size, dtype=np.int64)
            ranks[order] = np.arange(order.size, dtype=np.int64)
            self._rank_table = ranks.reshape(self.n_users, num_states(self.tau))
        return self._rank_table

    @property
    def threshold_rank(self) -> int:
        """Ladder rank of the threshold entry (-1 below all, N*k above all)."""
        if self.sentinel == "below_all":
            return -1
        if self.sentinel == "above_all":
            return self.ladder_size
        u, p = self.threshold_entry
        return int(self.rank_table[u, p])

    @property
    def activation_table(self) -> np.ndarray:
        """(N, 2*tau+1) per-state transmission probabilities in {0, rho, 1}."""
        if self._activation_table is None:
            k = num_states(self.tau)
            if self.sentinel == "below_all":
                probs = np.ones((self.n_users, k))
            elif self.sentinel == "above_all":
                probs = np.zeros((self.n_users, k))
            else:
                u, p = self.threshold_entry
                vals = self.values
                v_star = vals[u, p]
                flat = np.arange(vals.size, dtype=np.int64).reshape(vals.shape)
                probs = (
                    (vals > v_star) | ((vals == v_star) & (flat > flat[u, p]))
                ).astype(float)
                probs[u, p] = self.rho
            self._activation_table = probs
        return self._activation_table

    @property
    def ladder_size(self) -> int:
        return len(self.channels) * num_states(self.tau)

    @property
    def n_users(self) -> int:
        return len(self.channels)

    def actions(self, pos: np.ndarray, uniforms: np.ndarray) -> np.ndarray:
        """Action bits for the current per-user belief positions."""
        if self.sentinel == "below_all":
            return np.ones(self.n_users, dtype=bool)
        if self.sentinel == "above_all":
            return np.zeros(self.n_users, dtype=bool)
        probs = self.activation_table[np.arange(self.n_users), pos]
        return uniforms < probs

    def user_threshold(self, user: int) -> Threshold:
        """The single-user threshold policy this user effectively follows.

        Degenerate cases collapse: if the user's stationary state is
        passive, transient activity at fresh ON observations never recurs,
        so the long-run policy is "never transmit".
        """
        if self.sentinel == "below_all":
            return Threshold.below_all()
        if self.sentinel == "above_all":
            return Threshold.above_all()
        row = self.activation_table[user]
        first = np.flatnonzero(row > 0.0)
        if first.size == 0:
            return Threshold.above_all()
        p = int(first[0])
        if self.threshold_entry == (user, p):
            return Threshold.at(belief_from_pos(p, self.tau), self.rho)
        if p == 0:
            return Threshold.below_all()
        if p > self.tau:
            # stationary state passive: the chain is absorbed there
            return Threshold.above_all()
        return Threshold.at(belief_from_pos(p, self.tau), 1.0)

    def expected_transmissions(self) -> float:
        return float(self.alpha_hat.sum())

    def weighted_rate(self) -> float:
        """Closed-form long-run weighted throughput of this policy."""
        return float(self.weights @ self.nu_hat)


def initialize(
    channels,
    weights,
    tau: int,
    budget: float,
    rho_min: float = RHO_MIN,
) -> ThresholdPolicy:
    """Run the sorted-ladder initialization for the weighted index policy.

    Walks the threshold up the ladder until the total activation time drops
    below ``budget``, then solves the randomization factor at the crossing
    entry so the total is exactly ``budget``.  Zero-weight users are kept at
    the bottom of the ladder and never scheduled unless the budget covers
    every user.
    """
    weights = np.asarray(weights, dtype=float)
    n = len(channels)
    if weights.shape != (n,):
        raise ValueError(f"expected {n} weights, got shape {weights.shape}")
    if np.any(weights < 0) or not np.all(np.isfinite(weights)):
        raise ValueError("weights must be finite and nonnegative")
    if budget <= 0:
        raise ValueError(f"budget must be positive, got {budget}")
    if tau < 1:
        raise ValueError(f"tau must be >= 1, got {tau}")

    p11, p01 = channel_arrays(channels)
    k = num_states(tau)
    kr = tau + 1
    windex, alpha_cut, nu_cut = _reduced_tables(p11, p01, tau)
    values = (weights[:, None] * windex).ravel()  # user-major, position-minor
    order = np.argsort(values, kind="stable")

    positive = weights > 0
    n_pos = int(positive.sum())

    def finish(entry, sentinel, rho, alpha_hat, nu_hat, slack, extra=None):
        meta = {"budget": budget, "n_positive": n_pos}
        if extra:
            meta.update(extra)
        return ThresholdPolicy(
            tuple(channels), tau, weights, float(rho),
            alpha_hat, nu_hat, entry, sentinel, slack, meta,
        )

    if n_pos == 0:
        return finish(None, "above_all", 1.0, np.zeros(n), np.zeros(n), True,
                      {"reason": "all weights zero"})
    if budget >= n:
        return finish(None, "below_all", 1.0, alpha_cut[:, 0].copy(),
                      nu_cut[:, 0].copy(), budget > n)

    if n_pos <= budget:
        # every positive-weight user fully active, zero-weight users idle;
        # their entries tie at value zero and hold the lowest ranks, so the
        # threshold sits on the last of them (highest-index zero-weight
        # user, freshest ON observation) with a vanishing randomization
        alpha_hat = np.where(positive, alpha_cut[:, 0], 0.0)
        nu_hat = np.where(positive, nu_cut[:, 0], 0.0)
        u_zero = int(np.flatnonzero(~positive).max())
        return finish((u_zero, k - 1), None, rho_min, alpha_hat, nu_hat, True)

    drop_flat = alpha_cut[:, :-1] - alpha_cut[:, 1:]
    drop_flat[~positive] = 0.0
    drops = drop_flat.ravel()[order]
    walk = np.cumsum(drops)  # activation removed after deactivating ranks <= j
    j = int(np.searchsorted(walk, n_pos - budget, side="right"))
    if j >= n * kr:
        raise RuntimeError("ladder walk failed to bracket the budget")

    u_star, p_star = divmod(int(order[j]), kr)
    remaining = n_pos - walk[j]  # total activation with ranks <= j passive
    target = budget - remaining + alpha_cut[u_star, p_star + 1]
    state = belief_from_pos(p_star, tau)
    rho = solve_rho(channels[u_star], tau, state, float(target))

    # first active position per user = number of its entries at rank <= j;
    # count whichever side of the cut is smaller
    if j + 1 <= n * kr - (j + 1):
        first_active = np.bincount(order[: j + 1] // kr, minlength=n)
    else:
        first_active = kr - np.bincount(order[j + 1 :] // kr, minlength=n)
    alpha_hat = alpha_cut[np.arange(n), first_active]
    nu_hat = nu_cut[np.arange(n), first_active]
    a_star, n_star = _threshold_metrics(channels[u_star], tau, state, rho)
    alpha_hat[u_star] = a_star
    nu_hat[u_star] = n_star
    return finish((u_star, p_star), None, rho, alpha_hat, nu_hat, False)


def _threshold_metrics(params, tau, state, rho):
    from .whittle import activation_rate

    return activation_rate(params, tau, Threshold.at(state, rho))


class QwiPolicy:
    """Frame-based queue-weighted index policy.

    Re-initializes the threshold policy at every frame boundary with the
    queue lengths as weights, against the backed-off budget M - eps/2.
    """

    def __init__(self, channels, tau: int, frame: int, budget: float,
                 eps: float | None = None):
        if frame < 1:
            raise ValueError(f"frame length must be >= 1, got {frame}")
        self.channels = tuple(channels)
        self.tau = tau
        self.frame = frame
        self.budget = budget
        self.eps = 0.02 * budget if eps is None else eps
        if not (0.0 <= self.eps < budget):
            raise ValueError(f"backoff {self.eps} outside [0, {budget})")
        self.effective_budget = budget - self.eps / 2.0
        self.current: ThresholdPolicy | None = None
        self.frames_built = 0

    def actions(self, t: int, queues: np.ndarray, pos: np.ndarray,
                uniforms: np.ndarray) -> np.ndarray:
        if t % self.frame == 0 or self.current is None:
            self.current = initialize(
                self.channels, queues.astype(float), self.tau, self.effective_budget
            )
            self.frames_built += 1
        return self.current.actions(pos, uniforms)


class FixedPolicy:
    """Adapter giving an initialized ThresholdPolicy the frame interface."""

    def __init__(self, policy: ThresholdPolicy):
        self.policy = policy

    def actions(self, t, queues, pos, uniforms):
        return self.policy.actions(pos, uniforms)


class RoundRobinPolicy:
    """Rotates a window of floor(M) users, one step per slot."""

    def __init__(self, n_users: int, budget: float):
        self.n = n_users
        self.per_slot = int(np.floor(budget))

    def actions(self, t, queues, pos, uniforms):
        a = np.zeros(self.n, dtype=bool)
        if self.per_slot >= self.n:
            a[:] = True
            return a
        start = (t * self.per_slot) % self.n
        idx = (start + np.arange(self.per_slot)) % self.n
        a[idx] = True
        return a


class MyopicBeliefPolicy:
    """Schedules the floor(M) users with the largest queue-weighted beliefs."""

    def __init__(self, channels, tau: int, budget: float):
        p11, p01 = channel_arrays(channels)
        self.beliefs = belief_tables(p11, p01, tau)
        self.n = len(channels)
        self.per_slot = min(int(np.floor(budget)), self.n)

    def actions(self, t, queues, pos, uniforms):
        score = queues * self.beliefs[np.arange(self.n), pos]
        a = np.zeros(self.n, dtype=bool)
        if self.per_slot:
            top = np.argsort(-score, kind="stable")[: self.per_slot]
            a[top] = True
        return a


class RandomPolicy:
    """Schedules each user independently with probability M/N."""

    def __init__(self, n_users: int, budget: float):
        self.p = budget / n_users

    def actions(self, t, queues, pos, uniforms):
        return uniforms < self.p


def baseline_policy(name: str, channels, tau: int, budget: float):
    if name == "round-robin":
        return RoundRobinPolicy(len(channels), budget)
    if name == "myopic-belief":
        return MyopicBeliefPolicy(channels, tau, budget)
    if name == "random":
        return RandomPolicy(len(channels), budget)
    raise ValueError(f"unknown baseline policy {name!r}")
