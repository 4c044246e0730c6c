"""Gilbert-Elliott ON/OFF channels and symbolic belief states.

A channel is a two-state Markov chain with stay-ON probability ``p11`` and
OFF-to-ON probability ``p01``.  The scheduler never sees the channel state
directly; it tracks a belief (probability of ON) that is fully determined by
the last ARQ observation and its age.  Beliefs are therefore kept symbolic
(tag + age) and their numeric values are recomputed from closed forms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ChannelParams:
    """Transition probabilities of one positively correlated ON/OFF channel."""

    p11: float
    p01: float

    def __post_init__(self):
        if not (0.0 < self.p01 < self.p11 < 1.0):
            raise ValueError(
                f"require 0 < p01 < p11 < 1, got p01={self.p01}, p11={self.p11}"
            )

    @property
    def memory(self) -> float:
        """Correlation factor p11 - p01 in (0, 1)."""
        return self.p11 - self.p01


@dataclass(frozen=True)
class Belief:
    """Symbolic belief state: last observed bit plus its age, or stationary.

    ``obs is None`` encodes the stationary belief (history forgotten).
    Otherwise ``obs`` is the last ARQ feedback bit and ``age >= 1`` counts the
    slots since that observation.
    """

    obs: int | None
    age: int = 0

    def __post_init__(self):
        if self.obs is None:
            if self.age != 0:
                raise ValueError("stationary belief carries no age")
        else:
            if self.obs not in (0, 1):
                raise ValueError(f"observation must be 0 or 1, got {self.obs}")
            if self.age < 1:
                raise ValueError(f"observed belief needs age >= 1, got {self.age}")

    @property
    def is_stationary(self) -> bool:
        return self.obs is None


STATIONARY = Belief(None)


def num_states(tau: int) -> int:
    """Size of the truncated belief space: tau ages per observation plus b_s."""
    return 2 * tau + 1


def belief_pos(state: Belief, tau: int) -> int:
    """Canonical position of a belief state, ordered by increasing belief value.

    Positions 0..tau-1 hold Observed(0, 1..tau), position tau is Stationary,
    positions tau+1..2*tau hold Observed(1, tau..1).
    """
    if state.is_stationary:
        return tau
    if not (1 <= state.age <= tau):
        raise ValueError(f"age {state.age} outside [1, {tau}]")
    if state.obs == 0:
        return state.age - 1
    return 2 * tau + 1 - state.age


def belief_from_pos(pos: int, tau: int) -> Belief:
    if not (0 <= pos <= 2 * tau):
        raise ValueError(f"position {pos} outside [0, {2 * tau}]")
    if pos < tau:
        return Belief(0, pos + 1)
    if pos == tau:
        return STATIONARY
    return Belief(1, 2 * tau + 1 - pos)


def stationary_prob(params: ChannelParams) -> float:
    """Long-run probability of the ON state, the fixed point of Q."""
    return params.p01 / (1.0 + params.p01 - params.p11)


def belief_after_off(params: ChannelParams, age) -> np.ndarray | float:
    """Belief ``age`` slots after observing OFF (closed form, vectorized)."""
    gap = params.memory
    return params.p01 * (1.0 - gap ** np.asarray(age, dtype=float)) / (1.0 - gap)


def belief_after_on(params: ChannelParams, age) -> np.ndarray | float:
    """Belief ``age`` slots after observing ON (closed form, vectorized)."""
    gap = params.memory
    num = params.p01 + (1.0 - params.p11) * gap ** np.asarray(age, dtype=float)
    return num / (1.0 - gap)


def belief_value(params: ChannelParams, state: Belief, tau: int) -> float:
    """Numeric belief of a symbolic state under truncation size ``tau``."""
    if state.is_stationary:
        return stationary_prob(params)
    if not (1 <= state.age <= tau):
        raise ValueError(f"age {state.age} outside [1, {tau}]")
    if state.obs == 0:
        return float(belief_after_off(params, state.age))
    return float(belief_after_on(params, state.age))


def belief_table(params: ChannelParams, tau: int) -> np.ndarray:
    """Belief values for every state, indexed by canonical position."""
    out = np.empty(num_states(tau))
    ages = np.arange(1, tau + 1)
    out[:tau] = belief_after_off(params, ages)
    out[tau] = stationary_prob(params)
    out[tau + 1 :] = belief_after_on(params, ages[::-1])
    return out


def evolve_operator(params: ChannelParams, x: float) -> float:
    """One idle-slot belief update Q(x) = x*p11 + (1-x)*p01."""
    return x * params.p11 + (1.0 - x) * params.p01


def advance_belief(
    state: Belief, action: int, observation: int | None, tau: int
) -> Belief:
    """Next symbolic belief after one slot.

    A transmission (action=1) must come with the ARQ feedback bit; an idle
    slot must not.  Idle slots age the belief, saturating into the stationary
    state once the age would exceed ``tau``.
    """
    if action == 1:
        if observation is None:
            raise ValueError("transmission requires an ARQ observation")
        return Belief(int(observation), 1)
    if observation is not None:
        raise ValueError("idle slot cannot carry an observation")
    if state.is_stationary:
        return STATIONARY
    if state.age >= tau:
        return STATIONARY
    return Belief(state.obs, state.age + 1)


def sample_transition(rng: np.random.Generator, params: ChannelParams, current: int) -> int:
    """Draw the next channel state given the current one."""
    p_on = params.p11 if current == 1 else params.p01
    return int(rng.random() < p_on)


def sample_trajectory(
    rng: np.random.Generator,
    params: ChannelParams,
    horizon: int,
    initial: int | None = None,
) -> np.ndarray:
    """Sample a state path of length ``horizon``; initial state ~ stationary
    unless given."""
    draws = rng.random(horizon)
    out = np.empty(horizon, dtype=np.int8)
    if initial is None:
        state = int(rng.random() < stationary_prob(params))
    else:
        state = int(initial)
    p11, p01 = params.p11, params.p01
    for t in range(horizon):
        state = int(draws[t] < (p11 if state else p01))
        out[t] = state
    return out
