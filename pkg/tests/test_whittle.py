"""Closed-form Whittle indices, threshold metrics, and truncation bounds."""

import numpy as np
import pytest

from arqsched.channel import Belief, ChannelParams, STATIONARY, belief_value, num_states
from arqsched.oracles import exact_stationary_metrics
from arqsched.whittle import (
    Threshold,
    activation_rate,
    activation_time,
    f_tau,
    g_tau,
    second_branch_index,
    tau0,
    threshold_chain,
    threshold_for_pos,
    transmission_rate,
    whittle_index,
    whittle_table,
)

from channel_cases import random_channels


CH = ChannelParams(0.8, 0.2)


def test_known_index_values():
    tau = 9
    # stationary state: b_s / (b_s + 1 - p11) with b_s = 0.5
    assert second_branch_index(CH) == pytest.approx(0.5 / 0.7, abs=1e-12)
    assert whittle_index(CH, STATIONARY, tau) == pytest.approx(0.7142857142857143)
    # a fresh ON observation is worth exactly p11
    assert whittle_index(CH, Belief(1, 1), tau) == pytest.approx(CH.p11, abs=1e-12)
    # OFF observations: first-branch formula at ages 1 and 2
    assert whittle_index(CH, Belief(0, 1), tau) == pytest.approx(0.2, abs=1e-12)
    assert whittle_index(CH, Belief(0, 2), tau) == pytest.approx(0.3928571428571, abs=1e-9)


def test_table_matches_scalar_and_is_increasing(rng):
    tau = 14
    for ch in random_channels(rng, 10):
        table = whittle_table(ch, tau)
        for pos in range(num_states(tau)):
            state = (
                STATIONARY if pos == tau
                else Belief(0, pos + 1) if pos < tau
                else Belief(1, 2 * tau + 1 - pos)
            )
            assert table[pos] == pytest.approx(whittle_index(ch, state, tau), abs=1e-14)
        # index nondecreasing in belief, i.e. in canonical position
        assert np.all(np.diff(table) >= -1e-15)
        assert np.all((table >= 0.0) & (table <= 1.0))


def test_first_branch_limit_is_stationary_value():
    # evaluating both branches far past the truncation horizon: the
    # OFF-observed expression converges to the stationary-state index
    tau = 300
    w_far = whittle_index(CH, Belief(0, 200), tau)
    assert w_far == pytest.approx(second_branch_index(CH), abs=1e-8)


def test_activation_rate_stationary_example():
    # threshold on the stationary state with rho = 1, tau = 9:
    # alpha = (q + b_s) / ((1 + tau) q + b_s) = 0.7 / 2.5
    a, nu = activation_rate(CH, 9, Threshold.at(STATIONARY, 1.0))
    assert a == pytest.approx(0.28, abs=1e-12)
    assert nu == pytest.approx(0.5 / 2.5, abs=1e-12)


def test_sentinel_thresholds():
    tau = 6
    assert activation_rate(CH, tau, Threshold.below_all()) == pytest.approx((1.0, 0.5))
    assert activation_rate(CH, tau, Threshold.above_all()) == (0.0, 0.0)
    # threshold on an ON observation leaves the stationary state passive:
    # the chain is absorbed there, so nothing recurs
    assert activation_rate(CH, tau, Threshold.at(Belief(1, 2), 0.7)) == (0.0, 0.0)
    assert activation_time(CH, tau, Threshold.below_all()) == 1.0
    assert transmission_rate(CH, tau, Threshold.below_all()) == pytest.approx(0.5)


def test_threshold_validation():
    with pytest.raises(ValueError):
        Threshold("bogus")
    with pytest.raises(ValueError):
        Threshold.at(STATIONARY, 0.0)
    with pytest.raises(ValueError):
        Threshold.at(STATIONARY, 1.5)
    with pytest.raises(ValueError):
        Threshold("at", None)


def test_metrics_match_chain_oracle(rng):
    tau = 8
    for ch in random_channels(rng, 5):
        for pos in range(num_states(tau)):
            for rho in (0.25, 1.0):
                thr = threshold_for_pos(pos, tau, rho)
                a_c, n_c = activation_rate(ch, tau, thr)
                a_o, n_o = exact_stationary_metrics(ch, tau, thr)
                assert a_c == pytest.approx(a_o, abs=1e-11)
                assert n_c == pytest.approx(n_o, abs=1e-11)


def test_threshold_chain_monotone_above_tau0(rng):
    grid = np.linspace(0.05, 1.0, 12)
    for ch in random_channels(rng, 20, gap_range=(0.05, 0.7)):
        tau = max(int(np.ceil(tau0([ch]))), 10)
        alpha, nu = threshold_chain(ch, tau, grid)
        da, dn = np.diff(alpha), np.diff(nu)
        assert da.min() >= -1e-12
        assert dn.min() >= -1e-12
        # rate moves no faster than activation along the chain
        assert (np.abs(dn) - np.abs(da)).max() <= 1e-12


def test_truncation_diagnostics(rng):
    chans = random_channels(rng, 4)
    taus = [10, 20, 40, 80, 160]
    fs = [f_tau(chans, t) for t in taus]
    assert all(a > b for a, b in zip(fs, fs[1:]))  # strictly decreasing
    for t, f in zip(taus, fs):
        assert g_tau(chans, t) == pytest.approx(3.0 * f)
    assert tau0(chans) > 0
    with pytest.raises(ValueError):
        f_tau(chans, 0)
