"""Finite complete-information environments with lottery-plus-transfer outcomes.

Numbers are kept in whatever exact type the caller supplies (``int`` or
``fractions.Fraction`` from the config loader), so every utility comparison on
the bundled presets is carried out in exact rational arithmetic.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Real
from typing import Iterable, Mapping, Sequence

PROB_TOL = 1e-12
UTIL_TOL = 1e-9

TypeProfile = tuple  # one type id per agent


class DomainError(ValueError):
    """An argument lies outside the domain of an operation."""


@dataclass(frozen=True)
class Outcome:
    """A finite-support lottery over alternatives together with a transfer vector.

    The lottery is stored normalised: duplicate alternatives merged, zero
    weights dropped, entries sorted by alternative id. Two outcomes built from
    the same exact numbers therefore compare equal structurally.
    """

    lottery: tuple
    transfers: tuple

    def __post_init__(self):
        merged: dict = {}
        for alt, p in self.lottery:
            if p < 0:
                raise DomainError(f"negative probability {p} on {alt!r}")
            merged[alt] = merged.get(alt, 0) + p
        total = sum(merged.values())
        if abs(total - 1) > PROB_TOL:
            raise DomainError(f"lottery probabilities sum to {total}, not 1")
        lot = tuple(sorted((a, p) for a, p in merged.items() if p != 0))
        object.__setattr__(self, "lottery", lot)
        object.__setattr__(self, "transfers", tuple(self.transfers))

    @classmethod
    def pure(cls, alternative, n_agents: int, transfers: Sequence[Real] | None = None) -> "Outcome":
        t = tuple(transfers) if transfers is not None else (0,) * n_agents
        return cls(((alternative, 1),), t)

    @property
    def support(self) -> tuple:
        return tuple(a for a, _ in self.lottery)

    def prob(self, alternative) -> Real:
        for a, p in self.lottery:
            if a == alternative:
                return p
        return 0

    def close_to(self, other: "Outcome", tol: float = UTIL_TOL) -> bool:
        if len(self.transfers) != len(other.transfers):
            return False
        if any(abs(a - b) > tol for a, b in zip(self.transfers, other.transfers)):
            return False
        alts = set(self.support) | set(other.support)
        return all(abs(self.prob(a) - other.prob(a)) <= tol for a in alts)

    def to_json(self) -> dict:
        return {
            "lottery": {a: _num_out(p) for a, p in self.lottery},
            "transfers": [_num_out(t) for t in self.transfers],
        }

    def __str__(self) -> str:
        lot = ", ".join(f"{a}:{_fmt(p)}" for a, p in self.lottery)
        t = ", ".join(_fmt(x) for x in self.transfers)
        return f"[{lot} | t=({t})]"


def _num_out(x):
    if isinstance(x, Fraction):
        return int(x) if x.denominator == 1 else str(x)
    return x


def _fmt(x) -> str:
    if isinstance(x, Fraction):
        if x.denominator == 1:
            return str(x.numerator)
        return f"{float(x):g}"
    if isinstance(x, float) and x.is_integer():
        return str(int(x))
    return f"{x:g}" if isinstance(x, float) else str(x)


@dataclass(frozen=True, eq=False)
class Environment:
    """The tuple (agents, type sets, admissible states, alternatives, utilities).

    ``utilities`` maps ``(alternative, agent_index, type_id)`` to the Bernoulli
    utility of that alternative for that type.
    """

    agents: tuple
    types: tuple
    states: tuple
    alternatives: tuple
    utilities: Mapping = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "agents", tuple(self.agents))
        object.__setattr__(self, "types", tuple(tuple(ts) for ts in self.types))
        object.__setattr__(self, "states", tuple(tuple(s) for s in self.states))
        object.__setattr__(self, "alternatives", tuple(self.alternatives))
        object.__setattr__(self, "_state_set", frozenset(self.states))

    @property
    def n_agents(self) -> int:
        return len(self.agents)

    def agent_index(self, agent) -> int:
        if isinstance(agent, int):
            if not 0 <= agent < self.n_agents:
                raise DomainError(f"agent index {agent} out of range")
            return agent
        try:
            return self.agents.index(agent)
        except ValueError:
            raise DomainError(f"unknown agent {agent!r}") from None

    def value(self, alternative, agent: int, type_id) -> Real:
        try:
            return self.utilities[(alternative, agent, type_id)]
        except KeyError:
            raise DomainError(
                f"no utility for alternative {alternative!r}, agent {agent}, type {type_id!r}"
            ) from None

    def is_state(self, profile) -> bool:
        return tuple(profile) in self._state_set

    def type_profiles(self) -> list:
        """All of ``×_i Θ_i`` in declaration order (lexicographic)."""
        return list(itertools.product(*self.types))

    def check_type(self, agent: int, type_id) -> None:
        if type_id not in self.types[agent]:
            raise DomainError(f"type {type_id!r} is not a type of agent {self.agents[agent]!r}")


@dataclass(frozen=True, eq=False)
class SCF:
    """Social choice function: one outcome per admissible state."""

    assignment: Mapping

    def __call__(self, state) -> Outcome:
        try:
            return self.assignment[tuple(state)]
        except KeyError:
            raise DomainError(f"SCF undefined at {state!r}") from None

    def range(self) -> list:
        out: list = []
        for o in self.assignment.values():
            if o not in out:
                out.append(o)
        return out


@dataclass(frozen=True, eq=False)
class SCC:
    """Social choice correspondence: a nonempty finite outcome set per state."""

    assignment: Mapping

    def __post_init__(self):
        for s, outs in self.assignment.items():
            if len(outs) == 0:
                raise DomainError(f"F{s} is empty")

    def __call__(self, state) -> tuple:
        try:
            return tuple(self.assignment[tuple(state)])
        except KeyError:
            raise DomainError(f"SCC undefined at {state!r}") from None

    def all_outcomes(self) -> list:
        out: list = []
        for outs in self.assignment.values():
            for o in outs:
                if o not in out:
                    out.append(o)
        return out


def expected_utility(env: Environment, outcome: Outcome, agent, type_id) -> Real:
    """Expected Bernoulli utility of the lottery plus the agent's own transfer."""
    i = env.agent_index(agent)
    env.check_type(i, type_id)
    if len(outcome.transfers) != env.n_agents:
        raise DomainError("transfer vector length does not match agent count")
    v = sum(p * env.value(a, i, type_id) for a, p in outcome.lottery)
    return v + outcome.transfers[i]


def lottery_value(env: Environment, outcome: Outcome, agent: int, type_id) -> Real:
    """Expected utility of the lottery part only (no transfer)."""
    return sum(p * env.value(a, agent, type_id) for a, p in outcome.lottery)


def compound(alpha: Real, x: Outcome, y: Outcome) -> Outcome:
    """``alpha x ⊕ (1 - alpha) y``: mix lotteries pointwise and transfers linearly."""
    if not 0 <= alpha <= 1:
        raise DomainError(f"mixture weight {alpha} outside [0, 1]")
    return mixture([(alpha, x), (1 - alpha, y)])


def mixture(weighted: Iterable[tuple]) -> Outcome:
    """Convex combination of outcomes given as ``(weight, outcome)`` pairs."""
    weighted = list(weighted)
    n = len(weighted[0][1].transfers)
    lot: list = []
    t = [0] * n
    for w, o in weighted:
        if w == 0:
            continue
        lot.extend((a, w * p) for a, p in o.lottery)
        for k in range(n):
            t[k] += w * o.transfers[k]
    return Outcome(tuple(lot), tuple(t))


def validate_environment(env: Environment) -> list[str]:
    """List every violated environment invariant; an empty list means valid."""
    problems: list[str] = []
    if env.n_agents < 2:
        problems.append(f"need at least 2 agents, got {env.n_agents}")
    if len(env.types) != env.n_agents:
        problems.append("one type list per agent required")
        return problems
    if not env.states:
        problems.append("state list is empty")
    for s in env.states:
        if len(s) != env.n_agents:
            problems.append(f"state {s} has wrong length")
            continue
        for i, t in enumerate(s):
            if t not in env.types[i]:
                problems.append(f"state {s}: {t!r} is not a type of {env.agents[i]}")
    seen = set()
    for s in env.states:
        if s in seen:
            problems.append(f"redundancy: state {s} listed more than once")
        seen.add(s)
    for i, ts in enumerate(env.types):
        for t in ts:
            missing = [a for a in env.alternatives if (a, i, t) not in env.utilities]
            if missing:
                problems.append(f"{env.agents[i]}/{t}: missing utilities for {missing}")
                continue
            vals = [env.utilities[(a, i, t)] for a in env.alternatives]
            if len(set(vals)) <= 1:
                problems.append(f"indifference: {env.agents[i]} type {t} values all alternatives equally")
        for t1, t2 in itertools.combinations(ts, 2):
            try:
                same = same_ordering(env, i, t1, t2)
            except DomainError:
                continue
            if same:
                problems.append(
                    f"{env.agents[i]}: types {t1} and {t2} induce the same ordering over lotteries"
                )
    return problems


def same_ordering(env: Environment, agent: int, t1, t2) -> bool:
    """True when two types rank all lotteries over A identically.

    Expected-utility orderings over Δ(A) coincide exactly when one Bernoulli
    utility is a positive affine transform of the other, so checking that
    relation on the alternatives decides the question for every lottery.
    """
    u = [env.value(a, agent, t1) for a in env.alternatives]
    w = [env.value(a, agent, t2) for a in env.alternatives]
    k = next((j for j in range(len(u)) if u[j] != u[0]), None)
    if k is None:
        return len(set(w)) <= 1
    num, den = w[k] - w[0], u[k] - u[0]
    exact = not any(isinstance(x, float) for x in (*u, *w))
    scale = Fraction(num) / Fraction(den) if exact else num / den
    if scale <= 0:
        return False
    shift = w[0] - scale * u[0]
    return all(abs(w[j] - (scale * u[j] + shift)) <= UTIL_TOL for j in range(len(u)))


def as_fraction(x) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(x)
