"""The mechanism for social choice correspondences (three or more agents).

A message is ``(report1, state_report, allocation, bets)``: a type profile
whose own coordinate is the sender's type, a state, an allocation allowed at
that state, and a bet in {0, 0.5, 1} on each opponent challenging itself.
Both type-profile components range over the listed states.

The *effective allocation* is the one announced by at least ``I - 1`` agents,
and agent 1's announcement otherwise. Agent ``j`` challenges agent ``i`` when
``i`` announced the effective allocation and ``j``'s scheme entry for
``(state_report_i, effective, report1_j[j])`` differs from it.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

from .env import SCC, DomainError, Environment, Outcome, compound, mixture
from .mech_scf import (
    AtomTable,
    Mechanism,
    MechanismParams,
    _dictator_profiles,
    calibrate_configs,
    certify_penalty,
)
from .schemes import (
    DictatorLotteries,
    SCCChallengeScheme,
    best_challenge_transform_scc,
    differs,
    synthesize_scc_scheme,
)

BET_GRID = (Fraction(0), Fraction(1, 2), Fraction(1))


class UnsupportedConfiguration(DomainError):
    pass


@dataclass(frozen=True)
class SccMessage:
    report1: tuple
    state_report: tuple
    allocation: Outcome
    bets: tuple  # one entry per agent; the sender's own entry is ignored
    alloc_id: int = field(default=-1, compare=False)

    def own_type(self, i: int):
        return self.report1[i]

    def __str__(self) -> str:
        bets = ",".join(str(b) for b in self.bets)
        return f"({','.join(self.report1)}|{','.join(self.state_report)}|a{self.alloc_id}|{bets})"


def _require_three(n: int) -> None:
    if n < 3:
        raise UnsupportedConfiguration(f"the correspondence mechanism needs at least three agents, got {n}")


def effective_allocation(m: Sequence[SccMessage]) -> Outcome:
    """The allocation with at least I - 1 adherents, else agent 1's announcement."""
    n = len(m)
    _require_three(n)
    for cand in (m[0].allocation, m[1].allocation):
        if sum(1 for mi in m if mi.allocation == cand) >= n - 1:
            return cand
    return m[0].allocation


def scheme_entry(F: SCC, x_scheme: SCCChallengeScheme, state, z: Outcome, agent: int, type_id) -> Outcome:
    """x(state, z, agent, type), read as z itself when z is not allowed at ``state``."""
    if not any(not differs(z, w) for w in F(state)):
        return z
    return x_scheme(state, z, agent, type_id)


def scc_challenge(m: Sequence[SccMessage], i: int, j: int, x_scheme: SCCChallengeScheme, F: SCC) -> bool:
    """Whether agent ``j`` challenges agent ``i`` under ``m``."""
    phi = effective_allocation(m)
    if differs(m[i].allocation, phi):
        return False
    return differs(scheme_entry(F, x_scheme, m[i].state_report, phi, j, m[j].report1[j]), phi)


def scoring_rule(c, event: bool):
    """Quadratic score of the bet ``c`` on the event of an opponent challenging itself."""
    if c not in BET_GRID:
        raise DomainError(f"bet {c} is not on the grid {{0, 0.5, 1}}")
    c = Fraction(c)
    base = -c * c - (1 - c) * (1 - c) - 1
    return base + (2 * c if event else 2 * (1 - c))


def _ybar(env, y, m):
    n = env.n_agents
    return mixture([(Fraction(1, n), y(k, m[k].report1[k])) for k in range(n)])


def scc_outcome_g(env: Environment, F: SCC, x_scheme: SCCChallengeScheme, y: DictatorLotteries,
                  params: MechanismParams, m: Sequence[SccMessage]) -> Outcome:
    """Exact g(m) by direct evaluation of the double sum."""
    n = env.n_agents
    _require_three(n)
    phi = effective_allocation(m)
    ybar = _ybar(env, y, m)
    parts = []
    for i in range(n):
        for j in range(n):
            x = scheme_entry(F, x_scheme, m[i].state_report, phi, j, m[j].report1[j])
            e = params.epsilon if scc_challenge(m, i, j, x_scheme, F) else 0
            parts.append((Fraction(1, n * n), compound(e, ybar, x)))
    return mixture(parts)


def scc_transfer(env: Environment, F: SCC, x_scheme: SCCChallengeScheme, params: MechanismParams,
                 m: Sequence[SccMessage], i: int):
    """Score plus the three penalties, summed over opponents."""
    n = env.n_agents
    _require_three(n)
    total = Fraction(0)
    for j in range(n):
        if j == i:
            continue
        self_chal = scc_challenge(m, j, j, x_scheme, F)
        total += scoring_rule(m[i].bets[j], self_chal)
        if scc_challenge(m, i, j, x_scheme, F):
            total -= 2 * params.eta
        if self_chal and m[i].report1[j] != m[j].report1[j]:
            total -= params.epsilon
        if m[j].bets[i] > 0 and m[i].state_report[i] != m[j].report1[i]:
            total -= params.eta
    return total


# -- assembly ------------------------------------------------------------------------

def scc_message_space(env: Environment, F: SCC, i: int, outcome_ids: dict) -> list:
    n = env.n_agents
    bet_choices = [BET_GRID if j != i else (Fraction(0),) for j in range(n)]
    out = []
    for r1 in env.states:
        for s in env.states:
            for z in F(s):
                for bets in itertools.product(*bet_choices):
                    out.append(SccMessage(r1, s, z, bets, outcome_ids[z]))
    return out


def scc_calibrate(env: Environment, F: SCC, x_scheme: SCCChallengeScheme, y: DictatorLotteries):
    configs = []
    n = env.n_agents
    for s in env.states:
        for z in F(s):
            for j, types in enumerate(env.types):
                for t in types:
                    entry = x_scheme(s, z, j, t)
                    if not differs(entry, z):
                        continue
                    ybars = [(p, mixture([(Fraction(1, n), y(k, p[k])) for k in range(n)]))
                             for p in _dictator_profiles(env, j, t)]
                    configs.append((s, j, t, entry, z, ybars))
    atoms = list(F.all_outcomes()) + [y(i, t) for i, ts in enumerate(env.types) for t in ts]
    for v in x_scheme.table.values():
        if v not in atoms:
            atoms.append(v)
    params, rep, _ = calibrate_configs(env, "calibration (correspondence)", configs, atoms)
    return params, rep


def build_scc_mechanism(env: Environment, F: SCC, y: DictatorLotteries, x_scheme: SCCChallengeScheme | None = None,
                        params: MechanismParams | None = None) -> Mechanism:
    """Synthesize the best challenge scheme when none is given, calibrate, assemble."""
    n = env.n_agents
    _require_three(n)
    if x_scheme is None:
        x_scheme = best_challenge_transform_scc(env, F, synthesize_scc_scheme(env, F))
    report = None
    if params is None:
        params, report = scc_calibrate(env, F, x_scheme, y)
    atoms = AtomTable(env)
    outcome_ids = {z: atoms.id(z) for z in F.all_outcomes()}
    messages = [scc_message_space(env, F, i, outcome_ids) for i in range(n)]
    y_ids = {(k, t): atoms.id(y(k, t)) for k in range(n) for t in env.types[k]}
    allowed = {s: {outcome_ids[z] for z in F(s)} for s in env.states}
    x_cache: dict = {}

    def entry(s, phi_id, j, t):
        key = (s, phi_id, j, t)
        hit = x_cache.get(key)
        if hit is None:
            z = atoms.atoms[phi_id]
            e = x_scheme(s, z, j, t) if phi_id in allowed[s] else z
            hit = (atoms.id(e), differs(e, z))
            x_cache[key] = hit
        return hit

    def phi_id(m):
        ids = [mi.alloc_id for mi in m]
        for cand in (ids[0], ids[1]):
            if ids.count(cand) >= n - 1:
                return cand
        return ids[0]

    w_pair = Fraction(1, n * n)
    eps = params.epsilon
    w_eps = w_pair * eps * Fraction(1, n)
    w_test = w_pair * (1 - eps)
    # scores in half units, keyed by (bet, event)
    half_score = {(c, ev): int(2 * scoring_rule(c, ev)) for c in BET_GRID for ev in (False, True)}

    def terms(m):
        ph = phi_id(m)
        ys = [y_ids[(k, m[k].report1[k])] for k in range(n)]
        out = []
        for i in range(n):
            eff = m[i].alloc_id == ph
            for j in range(n):
                a, differs_ = entry(m[i].state_report, ph, j, m[j].report1[j])
                if eff and differs_:
                    out += [(w_eps, b) for b in ys]
                    out.append((w_test, a))
                else:
                    out.append((w_pair, a))
        return out

    def transfer(m, i):
        ph = phi_id(m)

        def challenges(a, b):
            return m[a].alloc_id == ph and entry(m[a].state_report, ph, b, m[b].report1[b])[1]

        halves = n_cha = n_spot = n_back = 0
        for j in range(n):
            if j == i:
                continue
            self_chal = challenges(j, j)
            halves += half_score[(m[i].bets[j], self_chal)]
            n_cha += challenges(i, j)
            n_spot += self_chal and m[i].report1[j] != m[j].report1[j]
            n_back += m[j].bets[i] > 0 and m[i].state_report[i] != m[j].report1[i]
        if not (halves or n_cha or n_spot or n_back):
            return 0
        return Fraction(halves, 2) - (2 * n_cha + n_back) * params.eta - n_spot * params.epsilon

    mech = Mechanism(env, messages, terms, transfer, atoms, params, "scc",
                     {"F": F, "scheme": x_scheme, "lotteries": y})
    if report is not None:
        mech.meta["certificate"] = certify_penalty(mech, report)
    return mech


def unanimous_profile(mech: Mechanism, state, z: Outcome) -> tuple:
    """Everybody reports ``state`` twice, announces ``z`` and bets zero."""
    state = tuple(state)
    n = mech.env.n_agents
    out = []
    for i in range(n):
        for k, msg in enumerate(mech.messages[i]):
            if (msg.report1 == state and msg.state_report == state and not differs(msg.allocation, z)
                    and all(b == 0 for b in msg.bets)):
                out.append(k)
                break
        else:
            raise DomainError(f"no unanimous message for {state} and {z}")
    return tuple(out)
