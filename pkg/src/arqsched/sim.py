"""Slot-level Monte Carlo simulation of the multi-user scheduling system.

Channel states are exogenous two-state Markov chains; the scheduler only
ever sees ARQ feedback from slots it transmitted in, which the engine
enforces by construction: belief positions are updated from the feedback
bit on transmission and aged otherwise, never from the hidden state.

Randomness is split into named streams (channel, policy, arrivals,
initialization) spawned from ``seed + replication``.  All replications of a
run are stepped together as one (reps, users) batch, but each replication
consumes its own streams in the same chunked order a solo run would, so
per-replication results do not depend on the batch.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .channel import num_states
from .policy import (
    MyopicBeliefPolicy,
    QwiPolicy,
    RoundRobinPolicy,
    belief_tables,
    channel_arrays,
    initialize,
)

POLICIES = ("weighted-index", "queue-index", "round-robin", "myopic-belief", "random")

_CHUNK = 4096


@dataclass(frozen=True)
class SimConfig:
    """Everything needed to reproduce one simulation run."""

    channels: tuple
    tau: int
    budget: float
    policy: str = "queue-index"
    weights: tuple | None = None  # weighted-index only
    frame: int = 1000  # queue-index rebuild period
    eps: float | None = None  # queue-index budget backoff, default 0.02 * budget
    arrivals: str = "bernoulli"  # "bernoulli" | "poisson"
    lam: tuple | None = None  # per-user arrival rates (queued mode)
    horizon: int = 100_000
    replications: int = 1
    seed: int = 0
    backlogged: bool = False
    initial_belief: str = "stationary"  # "stationary" | "revealed"
    sample_every: int | None = None  # queue-trace stride, default horizon // 512
    record_actions: bool = False

    def __post_init__(self):
        n = len(self.channels)
        if n == 0:
            raise ValueError("need at least one channel")
        if self.tau < 1:
            raise ValueError(f"tau must be >= 1, got {self.tau}")
        if not (0.0 < self.budget <= n):
            raise ValueError(f"budget must lie in (0, {n}], got {self.budget}")
        if self.policy not in POLICIES:
            raise ValueError(f"unknown policy {self.policy!r}, expected one of {POLICIES}")
        if self.horizon < 1 or self.replications < 1:
            raise ValueError("horizon and replications must be positive")
        if self.arrivals not in ("bernoulli", "poisson"):
            raise ValueError(f"unknown arrival process {self.arrivals!r}")
        if self.initial_belief not in ("stationary", "revealed"):
            raise ValueError(f"unknown initial belief {self.initial_belief!r}")
        if self.weights is not None and len(self.weights) != n:
            raise ValueError(f"expected {n} weights, got {len(self.weights)}")
        if not self.backlogged:
            if self.policy == "queue-index" and self.horizon % self.frame != 0:
                raise ValueError(
                    f"queued horizon {self.horizon} must be a multiple of the "
                    f"frame length {self.frame}"
                )
            if self.lam is None:
                raise ValueError("queued mode needs per-user arrival rates")
            if len(self.lam) != n:
                raise ValueError(f"expected {n} arrival rates, got {len(self.lam)}")
            if any(r < 0 for r in self.lam):
                raise ValueError("arrival rates must be nonnegative")
            if self.arrivals == "bernoulli" and any(r > 1 for r in self.lam):
                raise ValueError("Bernoulli arrival rates must be <= 1")

    @property
    def n_users(self) -> int:
        return len(self.channels)


@dataclass
class RepMetrics:
    """Per-replication summaries of one simulated path."""

    rep: int
    horizon: int
    z_hat: float  # mean transmissions per slot
    transmissions: np.ndarray  # per-user slot counts
    successes: np.ndarray  # per-user ON transmissions
    delivered: np.ndarray  # per-user packets served (== successes when backlogged)
    expected_success: np.ndarray  # per-user sums of belief at transmit slots
    sample_times: np.ndarray
    queue_totals: np.ndarray  # total backlog at sample times
    lyapunov: np.ndarray  # 0.5 * sum q_i^2 at sample times
    max_queue: float
    final_queues: np.ndarray
    seed: int = 0
    frames_built: int = 0
    actions: np.ndarray | None = None

    @property
    def throughput(self) -> np.ndarray:
        return self.delivered / self.horizon

    @property
    def expected_rate(self) -> np.ndarray:
        """Belief-weighted throughput estimator (mean belief over transmit
        slots); same mean as ``throughput`` but lower variance."""
        return self.expected_success / self.horizon

    def value_hat(self, weights) -> float:
        """Finite-horizon weighted rate estimate."""
        return float(np.asarray(weights, float) @ self.expected_rate)

    def queue_slope(self, fraction: float = 0.5) -> float:
        """Least-squares growth rate of the total backlog over the trailing
        ``fraction`` of the sampled trace, in packets per slot."""
        m = len(self.sample_times)
        start = int(m * (1.0 - fraction))
        t = self.sample_times[start:]
        y = self.queue_totals[start:]
        if len(t) < 2:
            return 0.0
        return float(np.polyfit(t, y, 1)[0])


@dataclass
class Metrics:
    config: SimConfig
    reps: list

    @property
    def z_values(self) -> np.ndarray:
        return np.array([r.z_hat for r in self.reps])

    @property
    def z_mean(self) -> float:
        return float(self.z_values.mean())

    @property
    def z_stderr(self) -> float:
        z = self.z_values
        if len(z) < 2:
            return 0.0
        return float(z.std(ddof=1) / np.sqrt(len(z)))

    @property
    def throughput(self) -> np.ndarray:
        """(reps, users) delivered-packet rates."""
        return np.stack([r.throughput for r in self.reps])

    def throughput_mean(self) -> np.ndarray:
        return self.throughput.mean(axis=0)

    def throughput_stderr(self) -> np.ndarray:
        t = self.throughput
        if t.shape[0] < 2:
            return np.zeros(t.shape[1])
        return t.std(axis=0, ddof=1) / np.sqrt(t.shape[0])


class _BatchFixed:
    """One initialized threshold policy applied to every replication."""

    def __init__(self, config):
        w = np.ones(config.n_users) if config.weights is None else np.asarray(
            config.weights, float
        )
        self.policy = initialize(config.channels, w, config.tau, config.budget)
        k = num_states(config.tau)
        self.flat = self.policy.activation_table.ravel()
        self.base = np.arange(config.n_users, dtype=np.int64) * k
        self.frames_built = 0

    def actions(self, t, q, pos, u):
        return u < self.flat[pos + self.base]


class _BatchQwi:
    """Per-replication frame policies rebuilt from each replication's queues."""

    def __init__(self, config, n_reps):
        self.inner = [
            QwiPolicy(config.channels, config.tau, config.frame, config.budget,
                      config.eps)
            for _ in range(n_reps)
        ]
        n, k = config.n_users, num_states(config.tau)
        self.frame = config.frame
        self.tables = np.zeros((n_reps, n, k))
        self.base = (np.arange(n_reps, dtype=np.int64)[:, None] * (n * k)
                     + np.arange(n, dtype=np.int64) * k)

    def actions(self, t, q, pos, u):
        if t % self.frame == 0:
            for r, pol in enumerate(self.inner):
                pol.current = initialize(
                    pol.channels, q[r].astype(float), pol.tau, pol.effective_budget
                )
                pol.frames_built += 1
                self.tables[r] = pol.current.activation_table
            self.flat = self.tables.ravel()
        return u < self.flat[pos + self.base]

    @property
    def frames_built(self):
        return self.inner[0].frames_built


class _BatchShared:
    """Wraps a queue-blind baseline; actions broadcast across replications."""

    def __init__(self, policy):
        self.policy = policy
        self.frames_built = 0

    def actions(self, t, q, pos, u):
        n_reps = pos.shape[0]
        out = np.empty(pos.shape, dtype=bool)
        for r in range(n_reps):
            out[r] = self.policy.actions(t, q[r], pos[r], u[r])
        return out


def _make_batch_policy(config: SimConfig, n_reps: int):
    if config.policy == "weighted-index":
        return _BatchFixed(config)
    if config.policy == "queue-index":
        return _BatchQwi(config, n_reps)
    if config.policy == "round-robin":
        return _BatchShared(RoundRobinPolicy(config.n_users, config.budget))
    if config.policy == "myopic-belief":
        return _BatchShared(MyopicBeliefPolicy(config.channels, config.tau, config.budget))
    # random: independent coin per user per replication
    class _Rand:
        frames_built = 0
        p = config.budget / config.n_users

        def actions(self, t, q, pos, u):
            return u < self.p

    return _Rand()


def _simulate_batch(
    config: SimConfig, rep_ids, channel_states: np.ndarray | None = None
) -> list[RepMetrics]:
    n, tau, horizon = config.n_users, config.tau, config.horizon
    n_reps = len(rep_ids)
    streams = []
    for rep in rep_ids:
        root = np.random.SeedSequence(config.seed + rep)
        streams.append([np.random.default_rng(s) for s in root.spawn(4)])
    p11, p01 = channel_arrays(config.channels)
    b_s = p01 / (1.0 + p01 - p11)

    if channel_states is not None:
        channel_states = np.asarray(channel_states)
        if channel_states.shape != (horizon, n):
            raise ValueError(
                f"channel_states must be ({horizon}, {n}), got {channel_states.shape}"
            )
        state = np.broadcast_to(channel_states[0], (n_reps, n)).copy().astype(np.int8)
    else:
        state = np.stack(
            [(s[3].random(n) < b_s).astype(np.int8) for s in streams]
        )

    if config.initial_belief == "revealed":
        pos = np.where(state == 1, 2 * tau, 0).astype(np.int64)
    else:
        pos = np.full((n_reps, n), tau, dtype=np.int64)

    k = num_states(tau)
    span = np.arange(k)
    aging = span + (span < tau).astype(np.int64) - (span > tau).astype(np.int64)
    policy = _make_batch_policy(config, n_reps)
    queued = not config.backlogged
    q = np.zeros((n_reps, n), dtype=np.int64)
    lam = np.asarray(config.lam, float) if queued else None

    tx = np.zeros((n_reps, n), dtype=np.int64)
    succ = np.zeros((n_reps, n), dtype=np.int64)
    delivered = np.zeros((n_reps, n), dtype=np.int64)
    exp_succ = np.zeros((n_reps, n))
    belief_flat = belief_tables(p11, p01, tau).ravel()
    flat_base = np.arange(n, dtype=np.int64) * k
    stride = config.sample_every or max(1, horizon // 512)
    sample_times = []
    queue_totals = []  # rows of (n_reps,) totals
    lyapunov = []
    max_queue = np.zeros(n_reps)
    all_actions = (
        np.empty((horizon, n_reps, n), dtype=bool) if config.record_actions else None
    )

    on_pos = 2 * tau
    gap = p11 - p01
    t0 = 0
    while t0 < horizon:
        b = min(_CHUNK, horizon - t0)
        u_pol = np.empty((b, n_reps, n))
        for r, s in enumerate(streams):
            u_pol[:, r, :] = s[1].random((b, n))
        if channel_states is None:
            u_chan = np.empty((b, n_reps, n))
            for r, s in enumerate(streams):
                u_chan[:, r, :] = s[0].random((b, n))
        if queued:
            arr = np.empty((b, n_reps, n), dtype=np.int64)
            for r, s in enumerate(streams):
                if config.arrivals == "bernoulli":
                    arr[:, r, :] = s[2].random((b, n)) < lam
                else:
                    arr[:, r, :] = s[2].poisson(lam, (b, n))
        a_buf = np.empty((b, n_reps, n), dtype=bool)
        s_buf = np.empty((b, n_reps, n), dtype=bool)
        for i in range(b):
            t = t0 + i
            a = policy.actions(t, q, pos, u_pol[i])
            if channel_states is None:
                on = u_chan[i] < (p01 + state * gap)
                state = on.astype(np.int8)
            else:
                state = np.broadcast_to(channel_states[t], (n_reps, n))
                on = state == 1
            hit = a & on
            a_buf[i] = a
            s_buf[i] = hit
            exp_succ += a * belief_flat[pos + flat_base]
            if queued:
                served = hit & (q > 0)
                delivered += served
                q = q - served + arr[i]
                if t % stride == 0:
                    totals = q.sum(axis=1)
                    sample_times.append(t)
                    queue_totals.append(totals)
                    lyapunov.append(0.5 * np.square(q, dtype=float).sum(axis=1))
                    np.maximum(max_queue, totals, out=max_queue)
            pos = np.where(a, on * on_pos, aging[pos])
        tx += a_buf.sum(axis=0)
        succ += s_buf.sum(axis=0)
        if all_actions is not None:
            all_actions[t0 : t0 + b] = a_buf
        t0 += b

    if not queued:
        delivered = succ.copy()
    sample_times = np.array(sample_times, dtype=np.int64)
    queue_totals = (
        np.array(queue_totals, dtype=np.int64).T
        if queue_totals
        else np.zeros((n_reps, 0), dtype=np.int64)
    )
    lyapunov = (
        np.array(lyapunov).T if lyapunov else np.zeros((n_reps, 0))
    )
    frames = [getattr(p, "frames_built", 0) for p in getattr(policy, "inner", [policy])]
    out = []
    for r, rep in enumerate(rep_ids):
        out.append(
            RepMetrics(
                rep=rep,
                horizon=horizon,
                z_hat=float(tx[r].sum() / horizon),
                transmissions=tx[r].copy(),
                successes=succ[r].copy(),
                delivered=delivered[r].copy(),
                expected_success=exp_succ[r].copy(),
                sample_times=sample_times.copy(),
                queue_totals=queue_totals[r].copy(),
                lyapunov=lyapunov[r].copy(),
                max_queue=float(max_queue[r]),
                final_queues=q[r].astype(float),
                seed=config.seed + rep,
                frames_built=frames[r] if r < len(frames) else frames[0],
                actions=all_actions[:, r, :].copy() if all_actions is not None else None,
            )
        )
    return out


def run_replication(
    config: SimConfig, rep: int, channel_states: np.ndarray | None = None
) -> RepMetrics:
    """Simulate one path.  ``channel_states`` optionally fixes the hidden
    state sequence (horizon x users), bypassing the channel stream."""
    return _simulate_batch(config, [rep], channel_states)[0]


def run(config: SimConfig, jobs: int = 1) -> Metrics:
    """Run all replications as one vectorized batch.

    ``jobs`` is accepted for interface stability; batching already steps
    every replication per slot, so no extra processes are spawned.
    """
    del jobs
    results = _simulate_batch(config, list(range(config.replications)))
    return Metrics(config, results)


def estimate_rate_point(
    config: SimConfig, weights, jobs: int = 1
) -> tuple[np.ndarray, np.ndarray, Metrics]:
    """Backlogged throughput vector of the weighted-index policy.

    Returns (per-user mean rates, per-user standard errors, metrics).  The
    rates come from the belief-weighted estimator (mean belief over transmit
    slots), which has the same mean as the realized-success count but lower
    variance; the realized counts stay available on the metrics for
    cross-checking.
    """
    cfg = replace(
        config,
        policy="weighted-index",
        weights=tuple(float(w) for w in weights),
        backlogged=True,
        lam=None,
    )
    metrics = run(cfg, jobs=jobs)
    rates = np.stack([r.expected_rate for r in metrics.reps])
    mean = rates.mean(axis=0)
    stderr = (
        rates.std(axis=0, ddof=1) / np.sqrt(rates.shape[0])
        if rates.shape[0] > 1
        else np.zeros(mean.shape)
    )
    return mean, stderr, metrics


@dataclass
class ConstraintReport:
    z_mean: float
    z_stderr: float
    budget: float
    passed: bool
    z_values: np.ndarray


def constraint_audit(metrics: Metrics) -> ConstraintReport:
    """Check the empirical transmission average against the budget."""
    z, se = metrics.z_mean, metrics.z_stderr
    budget = metrics.config.budget
    return ConstraintReport(z, se, budget, z <= budget + 3.0 * se, metrics.z_values)


@dataclass
class StabilityReport:
    slopes: np.ndarray
    verdicts: list  # per replication: "stable" | "unstable" | "inconclusive"
    verdict: str
    max_queues: np.ndarray
    metrics: Metrics


def stability_probe(
    config: SimConfig,
    delta: float = 1e-3,
    queue_ceiling: float = 1e6,
    jobs: int = 1,
) -> StabilityReport:
    """Classify an arrival vector as stable or unstable under the configured
    policy from the growth of the total backlog.

    Per replication: slope below ``delta`` packets/slot with the backlog
    staying under ``queue_ceiling`` reads stable; slope above ``delta`` reads
    unstable; anything else is inconclusive.  The aggregate verdict applies
    the same rule to the mean slope with a normal-theory confidence band.
    This is a finite-horizon surrogate for stability of the limiting queue
    process, which no finite run can certify; it is reported as a verdict,
    not a proof.
    """
    if config.backlogged:
        raise ValueError("stability probing needs queued dynamics")
    metrics = run(config, jobs=jobs)
    slopes = np.array([r.queue_slope() for r in metrics.reps])
    maxq = np.array([r.max_queue for r in metrics.reps])
    verdicts = []
    for s, m in zip(slopes, maxq):
        if s < delta and m < queue_ceiling:
            verdicts.append("stable")
        elif s > delta:
            verdicts.append("unstable")
        else:
            verdicts.append("inconclusive")
    mean = slopes.mean()
    half = 1.96 * slopes.std(ddof=1) / np.sqrt(len(slopes)) if len(slopes) > 1 else 0.0
    if mean + half < delta and maxq.max() < queue_ceiling:
        overall = "stable"
    elif mean - half > delta:
        overall = "unstable"
    else:
        overall = "inconclusive"
    return StabilityReport(slopes, verdicts, overall, maxq, metrics)
