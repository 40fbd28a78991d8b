"""Episodic absorbing-state MDP with softmax policies.

State 0 is reward-free and absorbing; an episode starts at ``start``, follows
the policy until it reaches state 0 (or hits the step cap), and its return is
the sum of per-step rewards.  Used as a black-box return distribution for the
optimizers: the policy class is Boltzmann in linear features, so the episode
return distribution is a smooth function of the feature weights.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

__all__ = [
    "SspMdp",
    "BoltzmannPolicy",
    "EpisodeResult",
    "boltzmann_probs",
    "ssp_episode",
    "SspReturnEnv",
    "two_state_chain",
    "one_step_chain",
]

_ROW_ATOL = 1e-9


@dataclass(frozen=True)
class SspMdp:
    """Tabular episodic MDP.

    ``transitions[s][a][s']`` is given for every non-absorbing state s >= 1;
    state 0 carries no actions.  ``features[s][a]`` is the policy feature
    vector of action a in state s; all feature vectors share one length.
    """

    transitions: tuple[tuple[tuple[float, ...], ...], ...]
    rewards: tuple[tuple[float, ...], ...]
    features: tuple[tuple[tuple[float, ...], ...], ...]
    start: int = 1
    t_max: int = 10_000

    def __post_init__(self) -> None:
        n_states = len(self.transitions) + 1
        if len(self.rewards) != n_states - 1 or len(self.features) != n_states - 1:
            raise ValueError("transitions, rewards and features must cover states 1..L")
        if not 0 <= self.start < n_states:
            raise ValueError(f"start state {self.start} out of range")
        if self.t_max < 1:
            raise ValueError("t_max must be positive")
        dims = set()
        for s, per_action in enumerate(self.transitions, start=1):
            if len(per_action) == 0:
                raise ValueError(f"state {s} has an empty action set")
            if len(self.rewards[s - 1]) != len(per_action):
                raise ValueError(f"state {s}: rewards do not match the action set")
            if len(self.features[s - 1]) != len(per_action):
                raise ValueError(f"state {s}: features do not match the action set")
            for a, row in enumerate(per_action):
                if len(row) != n_states:
                    raise ValueError(f"state {s} action {a}: kernel row has wrong length")
                total = float(np.sum(row))
                if abs(total - 1.0) > _ROW_ATOL or min(row) < 0.0:
                    raise ValueError(
                        f"state {s} action {a}: kernel row must be a distribution, "
                        f"sums to {total!r}"
                    )
                if not np.all(np.isfinite(self.rewards[s - 1][a])):
                    raise ValueError(f"state {s} action {a}: reward must be finite")
                dims.add(len(self.features[s - 1][a]))
        if len(dims) != 1:
            raise ValueError("all feature vectors must share one length")
        object.__setattr__(self, "_dim", dims.pop())

    @property
    def n_states(self) -> int:
        return len(self.transitions) + 1

    @property
    def feature_dim(self) -> int:
        return self._dim  # type: ignore[attr-defined]

    def action_features(self, state: int) -> np.ndarray:
        return np.asarray(self.features[state - 1], dtype=float)


@dataclass(frozen=True)
class BoltzmannPolicy:
    """Action probabilities proportional to exp(theta . phi(s, a))."""

    theta: tuple[float, ...]
    mdp: SspMdp

    def __post_init__(self) -> None:
        theta = tuple(float(v) for v in np.atleast_1d(np.asarray(self.theta, float)))
        if len(theta) != self.mdp.feature_dim:
            raise ValueError(
                f"theta has length {len(theta)}, features have length "
                f"{self.mdp.feature_dim}"
            )
        object.__setattr__(self, "theta", theta)

    def probs(self, state: int) -> np.ndarray:
        return boltzmann_probs(self, state)


def boltzmann_probs(policy: BoltzmannPolicy, state: int) -> np.ndarray:
    """Softmax over the state's actions, stabilized by max-subtraction."""
    if not 1 <= state < policy.mdp.n_states:
        raise ValueError(f"state {state} has no actions")
    phi = policy.mdp.action_features(state)
    if phi.shape[0] == 0:
        raise ValueError(f"state {state} has an empty action set")
    scores = phi @ np.asarray(policy.theta)
    scores -= scores.max()
    weights = np.exp(scores)
    return weights / weights.sum()


class EpisodeResult(NamedTuple):
    ret: float
    length: int
    truncated: bool


def ssp_episode(
    mdp: SspMdp, policy: BoltzmannPolicy, rng: np.random.Generator
) -> EpisodeResult:
    """Roll out one episode; truncates (with a flag) at the step cap."""
    state = mdp.start
    total = 0.0
    steps = 0
    while state != 0:
        if steps >= mdp.t_max:
            return EpisodeResult(total, steps, True)
        probs = boltzmann_probs(policy, state)
        action = int(rng.choice(len(probs), p=probs))
        total += mdp.rewards[state - 1][action]
        row = np.asarray(mdp.transitions[state - 1][action])
        state = int(rng.choice(mdp.n_states, p=row / row.sum()))
        steps += 1
    return EpisodeResult(total, steps, False)


class SspReturnEnv:
    """Adapter: episode returns of a softmax policy as a return distribution."""

    def __init__(self, mdp: SspMdp):
        self.mdp = mdp

    @property
    def dim(self) -> int:
        return self.mdp.feature_dim

    def sample_returns(
        self, theta: np.ndarray, m: int, rng: np.random.Generator
    ) -> np.ndarray:
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        if theta.shape != (self.dim,) or not np.all(np.isfinite(theta)):
            raise ValueError("theta must be a finite vector matching the feature length")
        if m < 1:
            raise ValueError("need at least one sample")
        policy = BoltzmannPolicy(tuple(theta), self.mdp)
        return np.asarray([ssp_episode(self.mdp, policy, rng).ret for _ in range(m)])


def one_step_chain(reward: float = 1.0) -> SspMdp:
    """Single transient state whose every action absorbs immediately."""
    return SspMdp(
        transitions=(((1.0, 0.0),),),
        rewards=((reward,),),
        features=(((1.0,),),),
        start=1,
    )


def two_state_chain(
    absorb_reward: float = 0.0,
    loop_reward: float = 1.0,
    continue_prob: float = 0.5,
    t_max: int = 10_000,
) -> SspMdp:
    """One transient state, two actions.

    Action 0 absorbs with ``absorb_reward``; action 1 collects ``loop_reward``
    and stays with probability ``continue_prob``.  Under the uniform policy the
    expected return solves R = (1/2) a + (1/2)(b + continue_prob * R).
    """
    if not 0.0 <= continue_prob < 1.0:
        raise ValueError("continue_prob must lie in [0, 1)")
    return SspMdp(
        transitions=(
            (
                (1.0, 0.0),
                (1.0 - continue_prob, continue_prob),
            ),
        ),
        rewards=((absorb_reward, loop_reward),),
        features=(((1.0, 0.0), (0.0, 1.0)),),
        start=1,
        t_max=t_max,
    )
