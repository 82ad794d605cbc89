"""Regret-matching dynamics on a finite game.

Each agent tracks, for every message, the average payoff it would have earned
by always sending it against the opponents' realised play, minus the average
payoff it actually earned. Next period's mixed strategy is proportional to the
positive part of those regrets; with no positive regret the agent falls back
to a uniform (or its previous) strategy.

Sampling is counter based: the uniform draw of agent ``i`` in period ``t``
depends only on ``(seed, t, i)``, so traces are reproducible and independent
of evaluation order.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .game import NormalFormGame

FALLBACKS = ("uniform", "prior")


@dataclass
class LearningConfig:
    iterations: int = 2000
    seed: int = 0
    fallback_policy: str = "uniform"
    record_every: int = 1
    inertia: float | None = None  # switching constant for the inertia variant
    window: int = 100
    threshold: float = 0.9

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be at least 1")
        if not 1 <= self.record_every <= self.iterations:
            raise ValueError("record_every must lie in [1, iterations]")
        if self.fallback_policy not in FALLBACKS:
            raise ValueError(f"fallback_policy must be one of {FALLBACKS}")
        if self.inertia is not None and self.inertia <= 0:
            raise ValueError("inertia constant must be positive")


@dataclass
class RegretState:
    cum_counterfactual: list  # per agent, array over own messages
    cum_realized: np.ndarray
    T: int = 0
    last_profile: tuple | None = None
    last_strategy: list | None = None

    @classmethod
    def initial(cls, counts) -> "RegretState":
        return cls([np.zeros(c) for c in counts], np.zeros(len(counts)))

    def regrets(self, agent: int) -> np.ndarray:
        if self.T == 0:
            return np.zeros_like(self.cum_counterfactual[agent])
        return (self.cum_counterfactual[agent] - self.cum_realized[agent]) / self.T


@dataclass
class TraceRecord:
    period: int
    strategies: list
    profile: tuple
    utilities: np.ndarray
    gains_from_trade: float
    transfers: np.ndarray
    avg_max_regret: np.ndarray


@dataclass
class SimulationResult:
    records: list
    profiles: np.ndarray  # (T, I) realised message indices
    state: RegretState
    config: LearningConfig
    converged_at: int | None = None
    modal_profile: tuple | None = None
    modal_frequency: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def final_regret(self) -> np.ndarray:
        return average_max_regret(self.state)


def uniform_draw(seed: int, period: int, agent: int) -> float:
    """A U[0, 1) draw determined by (seed, period, agent) alone."""
    words = np.random.SeedSequence(entropy=seed & (2 ** 64 - 1), spawn_key=(period, agent)).generate_state(2)
    return ((int(words[0]) << 21) ^ (int(words[1]) >> 11)) % (1 << 53) / float(1 << 53)


def sample(p: np.ndarray, u: float) -> int:
    k = int(np.searchsorted(np.cumsum(p), u * p.sum(), side="right"))
    return min(k, p.size - 1)


def regret_update(state: RegretState, game: NormalFormGame, profile) -> RegretState:
    """Add period payoffs of every own message against the realised opponents; T += 1.

    Updates ``state`` in place and returns it.
    """
    profile = tuple(int(k) for k in profile)
    for i in range(game.n_agents):
        idx = list(profile)
        idx[i] = slice(None)
        row = game.payoffs[tuple(idx) + (i,)]
        state.cum_counterfactual[i] += row
        state.cum_realized[i] += row[profile[i]]
    state.T += 1
    state.last_profile = profile
    return state


def strategy_from_regrets(state: RegretState, fallback_policy: str = "uniform", inertia: float | None = None) -> list:
    """Mixed strategies proportional to positive regrets, with a fallback when none is positive.

    With ``inertia`` set, the agent keeps its last message with the residual
    probability and switches to ``m'`` with probability ``R+(m') / inertia``.
    """
    out = []
    for i, cf in enumerate(state.cum_counterfactual):
        R = np.maximum(state.regrets(i), 0.0)
        n = R.size
        if inertia is not None and state.last_profile is not None:
            last = state.last_profile[i]
            p = R / inertia
            p[last] = 0.0
            total = p.sum()
            if total > 1:
                p /= total
                total = 1.0
            p[last] = 1.0 - total
        elif R.sum() > 0:
            p = R / R.sum()
        elif fallback_policy == "prior" and state.last_strategy is not None:
            p = state.last_strategy[i].copy()
        else:
            p = np.full(n, 1.0 / n)
        out.append(p)
    return out


def average_max_regret(state: RegretState) -> np.ndarray:
    """max over own messages of the average regret, per agent."""
    return np.array([state.regrets(i).max() for i in range(len(state.cum_counterfactual))])


def trailing_modal(profiles: np.ndarray, end: int, window: int) -> tuple:
    """Modal profile and its frequency in ``profiles[end - window:end]``."""
    chunk = profiles[max(0, end - window):end]
    keys, counts = np.unique(chunk, axis=0, return_counts=True)
    k = int(np.argmax(counts))
    return tuple(int(v) for v in keys[k]), counts[k] / len(chunk)


def simulate(game: NormalFormGame, config: LearningConfig, target_profile=None) -> SimulationResult:
    """Run the dynamics for ``config.iterations`` periods.

    ``converged_at`` is the first period ``T >= window`` at which the modal
    profile of the trailing window has frequency above the threshold (and,
    when ``target_profile`` is given, equals it).
    """
    n = game.n_agents
    state = RegretState.initial(game.counts)
    strategies = [np.full(c, 1.0 / c) for c in game.counts]
    profiles = np.empty((config.iterations, n), dtype=np.int64)
    records = []
    converged_at = None
    target = None if target_profile is None else tuple(target_profile)
    for t in range(1, config.iterations + 1):
        prof = tuple(sample(strategies[i], uniform_draw(config.seed, t, i)) for i in range(n))
        profiles[t - 1] = prof
        state.last_strategy = strategies
        regret_update(state, game, prof)
        strategies = strategy_from_regrets(state, config.fallback_policy, config.inertia)
        if converged_at is None and t >= config.window:
            modal, freq = trailing_modal(profiles, t, config.window)
            if freq > config.threshold and (target is None or modal == target):
                converged_at = t
        if t % config.record_every == 0 or t == config.iterations:
            vals = game.values[prof] if game.values is not None else game.payoffs[prof]
            trans = game.transfers[prof] if game.transfers is not None else np.zeros(n)
            records.append(TraceRecord(
                period=t,
                strategies=[p.copy() for p in strategies],
                profile=prof,
                utilities=np.array(vals, dtype=float),
                gains_from_trade=float(np.sum(vals)),
                transfers=np.array(trans, dtype=float),
                avg_max_regret=average_max_regret(state),
            ))
    modal, freq = trailing_modal(profiles, config.iterations, config.window)
    return SimulationResult(records, profiles, state, config, converged_at, modal, float(freq))


run_dynamics = simulate
