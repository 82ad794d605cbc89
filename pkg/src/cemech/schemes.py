"""Dictator lotteries, challenge schemes and Maskin monotonicity.

A challenge scheme assigns a test allocation ``x(reported, i, true_type)`` to
every reported state, agent and type. An entry that differs from the
reported state's desired outcome must sit in the reported type's lower-contour
set and in the true type's strict upper-contour set; every other entry equals
the desired outcome itself.

The SCC variants key the scheme by ``(reported_state, z)`` with ``z`` one of
the outcomes the correspondence allows at that state. Internally both cases
share one code path parameterised by an *anchor* (the outcome being
challenged) and the reported state it came from.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .env import (
    SCC,
    SCF,
    UTIL_TOL,
    DomainError,
    Environment,
    Outcome,
    expected_utility,
    lottery_value,
)
from .report import Report


@dataclass(frozen=True, eq=False)
class DictatorLotteries:
    """``table[(agent, type)]`` is the lottery agent ``agent`` gets for reporting ``type``."""

    table: Mapping

    def __call__(self, agent: int, type_id) -> Outcome:
        try:
            return self.table[(agent, type_id)]
        except KeyError:
            raise DomainError(f"no dictator lottery for agent {agent}, type {type_id!r}") from None


@dataclass(frozen=True, eq=False)
class ChallengeScheme:
    """``table[(reported_state, agent, type)]`` -> test allocation."""

    table: Mapping

    def __call__(self, state, agent: int, type_id) -> Outcome:
        try:
            return self.table[(tuple(state), agent, type_id)]
        except KeyError:
            raise DomainError(f"scheme undefined at {state}, agent {agent}, type {type_id!r}") from None

    def entries(self) -> list:
        out: list = []
        for o in self.table.values():
            if o not in out:
                out.append(o)
        return out


@dataclass(frozen=True, eq=False)
class SCCChallengeScheme:
    """``table[(reported_state, z, agent, type)]`` -> test allocation."""

    table: Mapping

    def __call__(self, state, z: Outcome, agent: int, type_id) -> Outcome:
        try:
            return self.table[(tuple(state), z, agent, type_id)]
        except KeyError:
            raise DomainError(f"scheme undefined at {state}, {z}, agent {agent}, type {type_id!r}") from None


@dataclass
class MonotonicityReport:
    holds: bool
    witnesses: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)

    def render(self, env: Environment) -> str:
        lines = [f"== Maskin monotonicity: {'holds' if self.holds else 'FAILS'}"]
        for key, (agent, x) in self.witnesses.items():
            lines.append(f"  lie {_key_str(key[0])} / true {_key_str(key[1])}: "
                         f"{env.agents[agent]} blows the whistle with {x}")
        for key in self.failures:
            lines.append(f"  lie {_key_str(key[0])} / true {_key_str(key[1])}: NO whistle-blower")
        return "\n".join(lines)


def _key_str(k) -> str:
    if isinstance(k, tuple) and len(k) == 2 and isinstance(k[1], Outcome):
        return f"({','.join(map(str, k[0]))}) z={k[1]}"
    return "(" + ",".join(map(str, k)) + ")"


def differs(a: Outcome, b: Outcome) -> bool:
    return a != b and not a.close_to(b)


def in_test_set(env, x: Outcome, anchor: Outcome, agent: int, reported_type, true_type,
                tol: float = UTIL_TOL) -> bool:
    """Membership of ``x`` in L(anchor, reported_type) ∩ SU(anchor, true_type)."""
    lower = expected_utility(env, x, agent, reported_type) <= expected_utility(env, anchor, agent, reported_type) + tol
    upper = expected_utility(env, x, agent, true_type) > expected_utility(env, anchor, agent, true_type) + tol
    return lower and upper


def exact_test_allocation(env: Environment, anchor: Outcome, agent: int, reported_type, true_type):
    """An element of L(anchor, reported) ∩ SU(anchor, true) over all of X, or None.

    Quasilinearity makes the intersection nonempty exactly when some pure
    alternative raises the true-minus-reported utility difference above the
    anchor's; the returned allocation splits that margin evenly so that both
    inequalities hold with slack.
    """
    def gap(alt):
        return env.value(alt, agent, true_type) - env.value(alt, agent, reported_type)

    base = lottery_value(env, anchor, agent, true_type) - lottery_value(env, anchor, agent, reported_type)
    best = max(env.alternatives, key=gap)
    margin = gap(best) - base
    if margin <= UTIL_TOL:
        return None
    t = list(anchor.transfers)
    t[agent] = expected_utility(env, anchor, agent, reported_type) - margin / 2 - env.value(best, agent, reported_type)
    return Outcome.pure(best, env.n_agents, t)


# -- dictator lotteries -------------------------------------------------------

def validate_dictator_lotteries(env: Environment, y: DictatorLotteries, tol: float = UTIL_TOL) -> Report:
    rep = Report("dictator lotteries")
    for i, types in enumerate(env.types):
        for true in types:
            for other in types:
                if other == true:
                    continue
                lhs = expected_utility(env, y(i, true), i, true)
                rhs = expected_utility(env, y(i, other), i, true)
                rep.add(f"{env.agents[i]} true {true}: report {true} vs report {other}",
                        lhs, ">", rhs, tol, agent=i, true=true, report=other)
    return rep


# -- challenge-scheme structure -----------------------------------------------

def _anchors_scf(env: Environment, f: SCF):
    return [(s, f(s), s) for s in env.states]


def _anchors_scc(env: Environment, F: SCC):
    return [((s, z), z, s) for s in env.states for z in F(s)]


def _structure_report(env, anchors, lookup, title, tol) -> Report:
    rep = Report(title)
    for key, anchor, state in anchors:
        for i, types in enumerate(env.types):
            for t in types:
                x = lookup(key, i, t)
                if not differs(x, anchor):
                    continue
                r = state[i]
                where = f"{_key_str(key)} {env.agents[i]}/{t}"
                rep.add(f"{where} lower contour at {r}",
                        expected_utility(env, x, i, r), "<=", expected_utility(env, anchor, i, r), tol)
                rep.add(f"{where} strict upper contour at {t}",
                        expected_utility(env, x, i, t), ">", expected_utility(env, anchor, i, t), tol)
    return rep


def scheme_structure_report(env: Environment, f: SCF, x: ChallengeScheme, tol: float = UTIL_TOL) -> Report:
    """Check that every entry differing from f lies in its lower/strict-upper intersection."""
    return _structure_report(env, _anchors_scf(env, f), lambda k, i, t: x(k, i, t), "challenge scheme structure", tol)


def scc_scheme_structure_report(env: Environment, F: SCC, x: SCCChallengeScheme, tol: float = UTIL_TOL) -> Report:
    return _structure_report(env, _anchors_scc(env, F), lambda k, i, t: x(k[0], k[1], i, t),
                             "SCC challenge scheme structure", tol)


def missing_challenges(env: Environment, f: SCF, x: ChallengeScheme) -> list:
    """Entries left at f although some allocation in X would certify a challenge."""
    out = []
    for s in env.states:
        for i, types in enumerate(env.types):
            for t in types:
                if not differs(x(s, i, t), f(s)) and exact_test_allocation(env, f(s), i, s[i], t) is not None:
                    out.append((s, i, t))
    return out


def validate_challenge_scheme(env: Environment, f: SCF, x: ChallengeScheme, true_state,
                              tol: float = UTIL_TOL) -> Report:
    """Whistle-blower conditions for every lie against ``true_state``.

    Each agent whose type differs between the lie and the truth is checked on
    both conditions (no false alarm in the lie state, strict gain in the true
    state); those per-agent lines are informational. A lie is covered when at
    least one agent passes both, and the report passes when every lie whose
    desired outcome differs from the truth's is covered. Lies sharing the
    truth's outcome are still evaluated and shown.
    """
    true_state = tuple(true_state)
    if not env.is_state(true_state):
        raise DomainError(f"{true_state} is not a state")
    rep = Report(f"challenge scheme, true state {_key_str(true_state)}")
    for lie in env.states:
        if lie == true_state:
            continue
        fl = f(lie)
        needed = differs(fl, f(true_state))
        covered = []
        for i in range(env.n_agents):
            if lie[i] == true_state[i]:
                continue
            test = x(lie, i, true_state[i])
            who = env.agents[i]
            c1 = rep.add(f"lie {_key_str(lie)}, {who} condition 1 (no false alarm)",
                         expected_utility(env, fl, i, lie[i]), ">=", expected_utility(env, test, i, lie[i]), tol,
                         required=False, agent=i, lie=lie, test=str(test))
            c2 = rep.add(f"lie {_key_str(lie)}, {who} condition 2 (incentive to expose)",
                         expected_utility(env, test, i, true_state[i]), ">", expected_utility(env, fl, i, true_state[i]), tol,
                         required=False, agent=i, lie=lie, test=str(test))
            if c1.passed and c2.passed:
                covered.append(who)
        if needed:
            rep.note(f"lie {_key_str(lie)}: whistle-blower {', '.join(covered) if covered else 'NONE'}",
                     passed=bool(covered), lie=lie)
        else:
            rep.note(f"lie {_key_str(lie)}: whistle-blower {', '.join(covered) if covered else 'none'}"
                     " (not required, same outcome as the truth)", lie=lie)
    return rep


# -- best challenge transform ---------------------------------------------------

def _best_transform(env, anchors, lookup, tol):
    out = {}
    for key, anchor, state in anchors:
        for i, types in enumerate(env.types):
            pool: list = []
            for t in types:
                e = lookup(key, i, t)
                if differs(e, anchor) and e not in pool:
                    pool.append(e)
            for t in types:
                choice = anchor
                if pool:
                    best = pool[0]
                    best_u = expected_utility(env, best, i, t)
                    for cand in pool[1:]:
                        u = expected_utility(env, cand, i, t)
                        if u > best_u:
                            best, best_u = cand, u
                    if best_u > expected_utility(env, anchor, i, t) + tol:
                        choice = best
                out[(key, i, t)] = choice
    return out


def best_challenge_transform(env: Environment, f: SCF, raw: ChallengeScheme, tol: float = UTIL_TOL) -> ChallengeScheme:
    """Rebuild ``raw`` so that reporting one's true type picks the best test allocation.

    Per reported state and agent, the non-trivial entries form a finite pool;
    each type receives its favourite member of the pool when that beats the
    desired outcome for it, and the desired outcome otherwise. Ties go to the
    earliest pool member. On a scheme whose trivial entries mark genuinely
    empty intersections this is exactly the pool-argmax construction; types
    that keep the desired outcome rank every pool member no higher than it.
    """
    rep = scheme_structure_report(env, f, raw, tol)
    if not rep.ok:
        raise DomainError("raw scheme is not a valid challenge scheme:\n" + rep.render())
    new = _best_transform(env, _anchors_scf(env, f), lambda k, i, t: raw(k, i, t), tol)
    return ChallengeScheme({(k, i, t): v for (k, i, t), v in new.items()})


def best_challenge_transform_scc(env: Environment, F: SCC, raw: SCCChallengeScheme,
                                 tol: float = UTIL_TOL) -> SCCChallengeScheme:
    rep = scc_scheme_structure_report(env, F, raw, tol)
    if not rep.ok:
        raise DomainError("raw SCC scheme is not a valid challenge scheme:\n" + rep.render())
    new = _best_transform(env, _anchors_scc(env, F), lambda k, i, t: raw(k[0], k[1], i, t), tol)
    return SCCChallengeScheme({(k[0], k[1], i, t): v for (k, i, t), v in new.items()})


def best_c_violations(env, anchors_lookup: Iterable, tol: float = UTIL_TOL) -> list:
    """Exhaustive check of the truthful-report optimality inequality.

    ``anchors_lookup`` yields ``(key, lookup)`` where ``lookup(i, t)`` returns the
    entry for agent ``i`` and type ``t``.
    """
    bad = []
    for key, lookup in anchors_lookup:
        for i, types in enumerate(env.types):
            for t in types:
                own = expected_utility(env, lookup(i, t), i, t)
                for t2 in types:
                    other = expected_utility(env, lookup(i, t2), i, t)
                    if own < other - tol:
                        bad.append((key, i, t, t2, own, other))
    return bad


def scheme_best_c_violations(env: Environment, x: ChallengeScheme, tol: float = UTIL_TOL) -> list:
    return best_c_violations(env, ((s, lambda i, t, s=s: x(s, i, t)) for s in env.states), tol)


# -- synthesis ------------------------------------------------------------------

def synthesize_challenge_scheme(env: Environment, f: SCF) -> ChallengeScheme:
    """A raw scheme whose trivial entries mark exactly the empty intersections."""
    table = {}
    for s in env.states:
        for i, types in enumerate(env.types):
            for t in types:
                x = exact_test_allocation(env, f(s), i, s[i], t)
                table[(s, i, t)] = f(s) if x is None else x
    return ChallengeScheme(table)


def synthesize_scc_scheme(env: Environment, F: SCC) -> SCCChallengeScheme:
    table = {}
    for s in env.states:
        for z in F(s):
            for i, types in enumerate(env.types):
                for t in types:
                    x = exact_test_allocation(env, z, i, s[i], t)
                    table[(s, z, i, t)] = z if x is None else x
    return SCCChallengeScheme(table)


def complete_scheme(env: Environment, f: SCF, partial: Mapping) -> ChallengeScheme:
    """Fill every entry absent from ``partial`` with the desired outcome."""
    table = {}
    for s in env.states:
        for i, types in enumerate(env.types):
            for t in types:
                table[(s, i, t)] = partial.get((s, i, t), f(s))
    return ChallengeScheme(table)


# -- Maskin monotonicity --------------------------------------------------------

def default_candidates(env: Environment, f: SCF, scheme: ChallengeScheme | None = None) -> list:
    """SCF range, scheme entries, and one exact test allocation per (lie, truth, agent)."""
    cands = list(f.range())
    if scheme is not None:
        cands += [e for e in scheme.entries() if e not in cands]
    for lie, true in itertools.product(env.states, repeat=2):
        for i in range(env.n_agents):
            x = exact_test_allocation(env, f(lie), i, lie[i], true[i])
            if x is not None and x not in cands:
                cands.append(x)
    return cands


def _monotonicity(env, pairs, candidates, tol) -> MonotonicityReport:
    rep = MonotonicityReport(holds=True)
    for key, anchor, lie, true in pairs:
        found = None
        for i in range(env.n_agents):
            for c in candidates:
                if in_test_set(env, c, anchor, i, lie[i], true[i], tol):
                    found = (i, c)
                    break
            if found:
                break
        if found:
            rep.witnesses[key] = found
        else:
            rep.failures.append(key)
    rep.holds = not rep.failures
    return rep


def check_maskin_monotonicity(env: Environment, f: SCF, candidate_allocations: list | None = None,
                              scheme: ChallengeScheme | None = None, tol: float = UTIL_TOL) -> MonotonicityReport:
    """Search ``candidate_allocations`` for a whistle-blower on every (lie, truth) pair.

    Keys of ``witnesses``/``failures`` are ``(lie_state, true_state)``.
    """
    cands = candidate_allocations if candidate_allocations is not None else default_candidates(env, f, scheme)
    if not cands:
        raise DomainError("candidate allocation list is empty")
    pairs = [((lie, true), f(lie), lie, true)
             for lie, true in itertools.product(env.states, repeat=2)
             if differs(f(lie), f(true))]
    return _monotonicity(env, pairs, cands, tol)


def check_scc_monotonicity(env: Environment, F: SCC, candidate_allocations: list | None = None,
                           tol: float = UTIL_TOL) -> MonotonicityReport:
    """Keys are ``((lie_state, z), true_state)`` for ``z`` in F(lie) but not in F(true)."""
    pairs = []
    for lie, true in itertools.product(env.states, repeat=2):
        for z in F(lie):
            if all(differs(z, w) for w in F(true)):
                pairs.append((((lie, z), true), z, lie, true))
    if candidate_allocations is None:
        cands = list(F.all_outcomes())
        for (_, true), z, lie, _t in pairs:
            for i in range(env.n_agents):
                x = exact_test_allocation(env, z, i, lie[i], true[i])
                if x is not None and x not in cands:
                    cands.append(x)
    else:
        cands = candidate_allocations
    return _monotonicity(env, pairs, cands, tol)


def monotonic_at(report: MonotonicityReport, true_state) -> list:
    """Failures whose true state is ``true_state``."""
    return [k for k in report.failures if k[1] == tuple(true_state)]


def whistleblower_set(env: Environment, f: SCF, x: ChallengeScheme, reported, true_state) -> set:
    """Agents whose scheme entry challenges ``reported`` when their type is as in ``true_state``."""
    reported, true_state = tuple(reported), tuple(true_state)
    for s in (reported, true_state):
        if not env.is_state(s):
            raise DomainError(f"{s} is not a state")
    return {j for j in range(env.n_agents) if differs(x(reported, j, true_state[j]), f(reported))}
