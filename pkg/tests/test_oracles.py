"""Ground-truth chain and subsidy-MDP oracles."""

import numpy as np
import pytest

from arqsched.channel import Belief, ChannelParams, STATIONARY, num_states, stationary_prob
from arqsched.oracles import (
    SubsidyProblem,
    activation_profile,
    aging_map,
    belief_chain_kernel,
    exact_metrics_for_cut,
    exact_stationary_metrics,
    stationary_distribution,
    subsidy_value_iteration,
    whittle_index_oracle,
)
from arqsched.whittle import Threshold, second_branch_index, whittle_index

from channel_cases import random_channels

CH = ChannelParams(0.8, 0.2)


def test_aging_map():
    tau = 3
    # OFF beliefs age toward the stationary state from below, ON from above
    assert aging_map(tau).tolist() == [1, 2, 3, 3, 3, 4, 5]


def test_activation_profile_shapes():
    tau = 4
    assert activation_profile(tau, Threshold.below_all()).tolist() == [1.0] * 9
    assert activation_profile(tau, Threshold.above_all()).tolist() == [0.0] * 9
    prof = activation_profile(tau, Threshold.at(Belief(0, 2), 0.5))
    assert prof[1] == 0.5 and prof[0] == 0.0 and np.all(prof[2:] == 1.0)
    prof_on = activation_profile(tau, Threshold.at(Belief(1, 1), 0.25))
    assert prof_on[2 * tau] == 0.25 and np.all(prof_on[: 2 * tau] == 0.0)


def test_kernel_rows_are_distributions(rng):
    tau = 9
    for ch in random_channels(rng, 8):
        for rho in (0.0, 0.4, 1.0):
            act = np.full(num_states(tau), rho)
            kern = belief_chain_kernel(ch, tau, act)
            assert np.abs(kern.sum(axis=1) - 1.0).max() < 1e-12


def test_always_transmit_metrics():
    tau = 6
    a, nu = exact_stationary_metrics(CH, tau, Threshold.below_all())
    assert a == pytest.approx(1.0, abs=1e-12)
    assert nu == pytest.approx(stationary_prob(CH), abs=1e-12)


def test_stationary_distribution_power_iteration_agrees():
    tau = 5
    act = activation_profile(tau, Threshold.at(STATIONARY, 0.3))
    kern = belief_chain_kernel(CH, tau, act)
    pi = stationary_distribution(kern)
    assert pi.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.abs(pi @ kern - pi).max() < 1e-10


def test_cut_oracle_matches_threshold_oracle():
    tau = 7
    for cut, rho in [(0, 1.0), (3, 0.5), (tau, 0.8)]:
        state = Belief(0, cut + 1) if cut < tau else STATIONARY
        a1, n1 = exact_stationary_metrics(CH, tau, Threshold.at(state, rho))
        a2, n2 = exact_metrics_for_cut(CH, tau, cut, rho)
        assert a1 == pytest.approx(a2, abs=1e-12)
        assert n1 == pytest.approx(n2, abs=1e-12)
    # cutting above the stationary position absorbs the chain: nothing recurs
    a, n = exact_metrics_for_cut(CH, tau, tau + 2, 1.0)
    assert a == 0.0 and n == 0.0


def test_subsidy_endpoints():
    tau = 8
    lo = subsidy_value_iteration(SubsidyProblem(CH, tau, 0.0))
    assert np.all(lo.q_active >= lo.q_passive - 1e-9)  # free transmissions
    hi = subsidy_value_iteration(SubsidyProblem(CH, tau, 1.0))
    assert np.all(hi.q_passive >= hi.q_active - 1e-9)  # subsidy beats any belief
    assert hi.gain == pytest.approx(1.0, abs=1e-8)


def test_passive_set_grows_with_subsidy():
    tau = 10
    prev = None
    bias = None
    for omega in np.linspace(0.0, 1.0, 21):
        sol = subsidy_value_iteration(SubsidyProblem(CH, tau, float(omega)),
                                      bias_init=bias)
        bias = sol.bias
        passive = sol.passive_set(1e-9)
        if prev is not None:
            assert not np.any(prev & ~passive)
        prev = passive


def test_bisection_oracle_recovers_closed_form(rng):
    tau = 10
    for ch in random_channels(rng, 3):
        for state in (Belief(0, 1), Belief(0, 4), STATIONARY, Belief(1, 1)):
            w_o = whittle_index_oracle(ch, state, tau)
            assert w_o == pytest.approx(whittle_index(ch, state, tau), abs=1e-6)
    assert whittle_index_oracle(CH, STATIONARY, tau) == pytest.approx(
        second_branch_index(CH), abs=1e-6
    )
