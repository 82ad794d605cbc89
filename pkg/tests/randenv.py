"""Random finite environments and a brute-force best-C oracle for property tests."""
from __future__ import annotations

import itertools
from fractions import Fraction

import numpy as np

from cemech.env import SCF, Environment, Outcome, expected_utility, validate_environment
from cemech.schemes import ChallengeScheme, in_test_set


def random_environment(rng: np.random.Generator, max_agents=3, max_types=3, max_alts=4, lo=-10, hi=10,
                       tries=200) -> Environment:
    """Integer utilities in [lo, hi]; resampled until the environment is valid."""
    for _ in range(tries):
        n = int(rng.integers(2, max_agents + 1))
        types = [tuple(f"t{k}" for k in range(int(rng.integers(2, max_types + 1)))) for _ in range(n)]
        alts = tuple(f"a{k}" for k in range(int(rng.integers(2, max_alts + 1))))
        util = {(a, i, t): int(rng.integers(lo, hi + 1)) for i in range(n) for t in types[i] for a in alts}
        states = list(itertools.product(*types))
        if len(states) > 2 and rng.random() < 0.3:
            keep = rng.choice(len(states), size=int(rng.integers(2, len(states) + 1)), replace=False)
            states = [states[k] for k in sorted(keep)]
        env = Environment(tuple(f"ag{i}" for i in range(n)), tuple(types), tuple(states), alts, util)
        if not validate_environment(env):
            return env
    raise RuntimeError("no valid environment found")


def random_outcome(rng, env: Environment, transfer_range=6) -> Outcome:
    """Lottery with weights in quarters over up to two alternatives, integer transfers."""
    a, b = rng.choice(len(env.alternatives), size=2)
    w = Fraction(int(rng.integers(0, 5)), 4)
    lot = ((env.alternatives[a], w), (env.alternatives[b], 1 - w))
    t = tuple(int(v) for v in rng.integers(-transfer_range, transfer_range + 1, size=env.n_agents))
    return Outcome(lot, t)


def random_scf(rng, env: Environment) -> SCF:
    return SCF({s: Outcome.pure(env.alternatives[int(rng.integers(len(env.alternatives)))], env.n_agents)
                for s in env.states})


def random_raw_scheme(rng, env: Environment, f: SCF, pool_size=30) -> ChallengeScheme:
    """Each entry is a random valid test allocation from a random pool, or f when none fits."""
    pool = [random_outcome(rng, env) for _ in range(pool_size)]
    table = {}
    for s in env.states:
        for i, types in enumerate(env.types):
            for t in types:
                fits = [x for x in pool if in_test_set(env, x, f(s), i, s[i], t, 0)]
                table[(s, i, t)] = fits[int(rng.integers(len(fits)))] if fits else f(s)
    return ChallengeScheme(table)


def best_c_brute_force(env, x) -> list:
    """Independent check: every type weakly prefers its own entry to any other type's."""
    bad = []
    for s in env.states:
        for i, types in enumerate(env.types):
            for t in types:
                for t2 in types:
                    if expected_utility(env, x(s, i, t), i, t) < expected_utility(env, x(s, i, t2), i, t):
                        bad.append((s, i, t, t2))
    return bad
