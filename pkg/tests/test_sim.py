"""Slot-level simulator: dynamics, estimators, determinism, information flow."""

import numpy as np
import pytest

from arqsched.channel import ChannelParams, stationary_prob
from arqsched.policy import initialize
from arqsched.sim import (
    SimConfig,
    constraint_audit,
    estimate_rate_point,
    run,
    run_replication,
    stability_probe,
)

from channel_cases import random_channels

CH = ChannelParams(0.8, 0.2)


def test_config_validation():
    with pytest.raises(ValueError):
        SimConfig(channels=(CH,), tau=5, budget=0.0)
    with pytest.raises(ValueError):
        SimConfig(channels=(CH,), tau=5, budget=2.0)  # exceeds user count
    with pytest.raises(ValueError):
        SimConfig(channels=(CH,), tau=5, budget=0.5, policy="bogus")
    with pytest.raises(ValueError):
        SimConfig(channels=(CH,), tau=5, budget=0.5)  # queued mode needs rates
    with pytest.raises(ValueError):
        SimConfig(channels=(CH,), tau=5, budget=0.5, lam=(0.1,),
                  horizon=1001, frame=100)  # horizon not a frame multiple
    with pytest.raises(ValueError):
        SimConfig(channels=(CH,), tau=5, budget=0.5, lam=(1.5,))  # Bernoulli rate


def test_no_arrivals_no_queues():
    cfg = SimConfig(channels=(CH,), tau=5, budget=1.0, lam=(0.0,),
                    horizon=2000, frame=100, seed=1)
    rep = run_replication(cfg, 0)
    assert rep.final_queues.tolist() == [0.0]
    assert rep.delivered.tolist() == [0]
    assert rep.max_queue == 0.0


def test_queue_recursion_deterministic_path():
    # one packet arrives every slot, the channel is pinned ON, and the
    # budget covers the user: service starts one slot behind arrivals, so
    # exactly one packet stays queued from slot 0 onward
    horizon = 500
    states = np.ones((horizon, 1), dtype=np.int8)
    cfg = SimConfig(channels=(CH,), tau=5, budget=1.0, policy="weighted-index",
                    weights=(1.0,), lam=(1.0,), horizon=horizon, seed=3)
    rep = run_replication(cfg, 0, channel_states=states)
    assert rep.delivered.tolist() == [horizon - 1]
    assert rep.final_queues.tolist() == [1.0]
    assert rep.transmissions.tolist() == [horizon]


def test_backlogged_always_transmit_matches_stationary_rate():
    cfg = SimConfig(channels=(CH,), tau=9, budget=1.0, policy="weighted-index",
                    weights=(1.0,), backlogged=True, horizon=200_000,
                    replications=4, seed=11)
    metrics = run(cfg)
    thr = metrics.throughput_mean()[0]
    assert thr == pytest.approx(stationary_prob(CH), abs=0.006)
    assert metrics.z_mean == pytest.approx(1.0, abs=1e-12)


def test_determinism_and_batch_equivalence(rng):
    channels = tuple(random_channels(rng, 3))
    cfg = SimConfig(channels=channels, tau=8, budget=1.2, lam=(0.2, 0.1, 0.15),
                    horizon=20_000, frame=500, replications=3, seed=42,
                    record_actions=True)
    batch = run(cfg)
    again = run(cfg)
    for a, b in zip(batch.reps, again.reps):
        assert np.array_equal(a.actions, b.actions)
        assert a.z_hat == b.z_hat
    # each replication alone reproduces its slice of the batch bit for bit
    for r in range(3):
        solo = run_replication(cfg, r)
        assert np.array_equal(solo.actions, batch.reps[r].actions)
        assert solo.transmissions.tolist() == batch.reps[r].transmissions.tolist()
        assert solo.final_queues.tolist() == batch.reps[r].final_queues.tolist()


def test_policy_sees_only_arq_feedback(rng):
    """Flipping hidden channel states on idle slots must not change actions."""
    channels = tuple(random_channels(rng, 3))
    horizon, n = 4000, 3
    states = (rng.random((horizon, n)) < 0.5).astype(np.int8)
    cfg = SimConfig(channels=channels, tau=6, budget=1.0, lam=(0.3, 0.2, 0.1),
                    horizon=horizon, frame=200, seed=5, record_actions=True)
    base = run_replication(cfg, 0, channel_states=states)
    perturbed = states.copy()
    idle = ~base.actions
    perturbed[idle] = 1 - perturbed[idle]
    again = run_replication(cfg, 0, channel_states=perturbed)
    assert np.array_equal(base.actions, again.actions)


def test_belief_calibration(rng):
    """Realized successes track the belief-weighted expectation."""
    channels = tuple(random_channels(rng, 2))
    cfg = SimConfig(channels=channels, tau=10, budget=1.0, policy="weighted-index",
                    weights=(1.0, 1.0), backlogged=True, horizon=300_000,
                    replications=4, seed=9)
    metrics = run(cfg)
    for rep in metrics.reps:
        for u in range(2):
            if rep.transmissions[u] == 0:
                continue
            realized = rep.successes[u] / rep.transmissions[u]
            expected = rep.expected_success[u] / rep.transmissions[u]
            assert realized == pytest.approx(expected, abs=0.01)


def test_estimate_rate_point_matches_closed_form(rng):
    channels = tuple(random_channels(rng, 2))
    weights = np.array([1.0, 0.7])
    tau, budget = 12, 0.8
    cfg = SimConfig(channels=channels, tau=tau, budget=budget, backlogged=True,
                    lam=None, horizon=400_000, replications=4, seed=17)
    rates, stderr, metrics = estimate_rate_point(cfg, weights)
    pol = initialize(channels, weights, tau, budget)
    for u in range(2):
        assert rates[u] == pytest.approx(pol.nu_hat[u], abs=max(5e-3, 4 * stderr[u]))
    audit = constraint_audit(metrics)
    assert audit.passed


def test_finite_horizon_convergence(rng):
    channels = tuple(random_channels(rng, 2))
    weights = (1.0, 1.0)
    errors = []
    for horizon in (1000, 100_000):
        cfg = SimConfig(channels=channels, tau=8, budget=0.9,
                        policy="weighted-index", weights=weights,
                        backlogged=True, horizon=horizon, replications=2, seed=23)
        metrics = run(cfg)
        errors.append(abs(metrics.z_mean - 0.9))
    assert errors[-1] < errors[0]


def test_stability_probe_verdicts():
    # no arrivals: flat queues
    calm = SimConfig(channels=(CH,), tau=6, budget=0.5, lam=(0.0,),
                     horizon=50_000, frame=500, replications=3, seed=2)
    assert stability_probe(calm).verdict == "stable"
    # arrivals beyond the always-ON service ceiling b_s: certain blow-up
    hot = SimConfig(channels=(CH,), tau=6, budget=1.0, lam=(0.9,),
                    horizon=50_000, frame=500, replications=3, seed=2)
    report = stability_probe(hot)
    assert report.verdict == "unstable"
    assert report.slopes.mean() > 0.1
    with pytest.raises(ValueError):
        stability_probe(SimConfig(channels=(CH,), tau=6, budget=1.0,
                                  backlogged=True, horizon=1000))


def test_constraint_audit_pass_and_budget():
    cfg = SimConfig(channels=(CH, CH), tau=8, budget=0.6, policy="random",
                    lam=(0.1, 0.1), horizon=40_000, frame=500,
                    replications=4, seed=31)
    audit = constraint_audit(run(cfg))
    assert audit.budget == 0.6
    assert audit.z_mean == pytest.approx(0.6, abs=0.02)
    assert audit.passed
