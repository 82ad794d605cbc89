"""The direct-revelation style mechanism for a social choice function.

Each agent sends two type profiles. The first (``report1``) carries the agent's
own type on its own coordinate and gossip about everybody else; the second
(``report2``) names a state. The allocation averages, over all ordered pairs
``(i, j)``, a blend of the equal-weight dictator lottery and the scheme entry
``x(report2_i, report1_j[j])``:

* weight 0 on the lottery when that entry equals the desired outcome,
* weight ``epsilon`` when agent ``j``'s entry challenges ``i``'s state report,
* weight 1 when ``report2_i`` is not a state at all.

Transfers punish being challenged (``2 eta``), disagreeing with a challenger
about its own type or failing to spot a challenge (``small_fee``), and naming
a state that the others' gossip would challenge (``eta``).

Outcomes are kept as a weighted list of *atoms* (scheme entries, desired
outcomes and dictator lotteries). ``Mechanism.outcome`` mixes them exactly;
``Mechanism.outcome_utilities`` uses cached float utilities of the atoms, which is what
game induction needs.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np
from scipy import sparse

from .env import SCF, DomainError, Environment, Outcome, compound, expected_utility, mixture
from .report import Report
from .schemes import ChallengeScheme, DictatorLotteries, differs

EPS_GRID = tuple(Fraction(1, 2 ** k) for k in range(1, 41))
ETA_FACTOR = Fraction(11, 10)
FEE_FACTOR = Fraction(1, 100)
ENUMERATION_LIMIT = 200_000


class CalibrationError(RuntimeError):
    """No grid value of epsilon keeps every challenge effective."""

    def __init__(self, message: str, report: Report | None = None):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class ScfMessage:
    report1: tuple
    report2: tuple

    def __str__(self) -> str:
        return f"({','.join(self.report1)}|{','.join(self.report2)})"


@dataclass(frozen=True)
class MechanismParams:
    epsilon: Fraction
    eta: Fraction
    small_fee: Fraction

    def __post_init__(self):
        if not 0 < self.epsilon < 1:
            raise DomainError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if self.eta <= 0 or self.small_fee <= 0:
            raise DomainError("eta and small_fee must be positive")


class AtomTable:
    """Interns outcomes so that payoffs can be cached per (atom, agent, type)."""

    def __init__(self, env: Environment):
        self.env = env
        self.atoms: list[Outcome] = []
        self._index: dict = {}
        self._util: dict = {}

    def id(self, o: Outcome) -> int:
        k = self._index.get(o)
        if k is None:
            k = len(self.atoms)
            self.atoms.append(o)
            self._index[o] = k
        return k

    def utility_vector(self, agent: int, type_id) -> np.ndarray:
        key = (agent, type_id)
        vec = self._util.get(key)
        if vec is None or vec.size < len(self.atoms):
            vec = np.array([float(expected_utility(self.env, o, agent, type_id)) for o in self.atoms])
            self._util[key] = vec
        return vec


@dataclass(eq=False)
class Mechanism:
    """Finite message sets, an outcome rule and transfer rules.

    ``terms(profile)`` returns ``[(weight, atom_id), ...]`` describing g; the
    exact outcome and the float payoffs are both derived from it.
    """

    env: Environment
    messages: list
    terms_fn: Callable
    transfer_fn: Callable
    atoms: AtomTable
    params: MechanismParams | None = None
    kind: str = "scf"
    meta: dict = field(default_factory=dict)
    _tab: object = field(default=None, repr=False)

    @property
    def counts(self) -> tuple:
        return tuple(len(m) for m in self.messages)

    @property
    def n_profiles(self) -> int:
        return int(np.prod(self.counts))

    def profiles(self):
        return itertools.product(*(range(c) for c in self.counts))

    def decode(self, profile: Sequence[int]) -> tuple:
        return tuple(self.messages[i][k] for i, k in enumerate(profile))

    def index_of(self, messages: Sequence) -> tuple:
        return tuple(self.messages[i].index(m) for i, m in enumerate(messages))

    def terms(self, profile) -> list:
        return self.terms_fn(self.decode(profile))

    def outcome(self, profile) -> Outcome:
        return mixture([(w, self.atoms.atoms[a]) for w, a in self.terms(profile)])

    def transfer(self, profile, agent: int):
        return self.transfer_fn(self.decode(profile), agent)

    def transfers(self, profile) -> tuple:
        ms = self.decode(profile)
        return tuple(self.transfer_fn(ms, i) for i in range(self.env.n_agents))

    def outcome_utilities(self, profile, state) -> np.ndarray:
        """Float u_i(g(m), state_i) for every agent, transfers excluded."""
        tt = self.terms(profile)
        out = np.empty(self.env.n_agents)
        for i in range(self.env.n_agents):
            vec = self.atoms.utility_vector(i, state[i])
            out[i] = sum(float(w) * vec[a] for w, a in tt)
        return out

    def tabulate(self) -> "Tabulation":
        """One pass over all profiles; cached on the mechanism."""
        if self._tab is None:
            self._tab = _tabulate(self)
        return self._tab


@dataclass(eq=False)
class Tabulation:
    """Every profile at once, in flat (C-order) profile index.

    ``W[k, a]`` is the float weight of atom ``a`` in g at profile ``k``;
    ``transfers[k, i]`` is agent i's transfer. Profiles sharing a term pattern
    share an exact outcome: ``outcomes[pattern[k]]``.
    """

    W: sparse.csr_matrix
    transfers: np.ndarray
    pattern: np.ndarray
    outcomes: list

    def utilities(self, atoms: AtomTable, agent: int, type_id) -> np.ndarray:
        vec = atoms.utility_vector(agent, type_id)
        return self.W @ vec[: self.W.shape[1]]


def _tabulate(mech: Mechanism) -> Tabulation:
    n = mech.env.n_agents
    N = mech.n_profiles
    fmemo: dict = {}
    keep: list = []
    rows, cols, vals = [], [], []
    transfers = np.empty((N, n))
    pattern = np.empty(N, dtype=np.int64)
    patterns: dict = {}
    outcomes: list = []
    for k, p in enumerate(mech.profiles()):
        ms = mech.decode(p)
        tt = mech.terms_fn(ms)
        agg: dict = {}
        for w, a in tt:
            f = fmemo.get(id(w))
            if f is None:
                f = float(w)
                fmemo[id(w)] = f
                keep.append(w)
            agg[a] = agg.get(a, 0.0) + f
        key = tuple(sorted((a, round(v, 12)) for a, v in agg.items()))
        pid = patterns.get(key)
        if pid is None:
            pid = len(outcomes)
            patterns[key] = pid
            outcomes.append(mixture([(w, mech.atoms.atoms[a]) for w, a in tt]))
        pattern[k] = pid
        for a, v in agg.items():
            rows.append(k)
            cols.append(a)
            vals.append(v)
        for i in range(n):
            transfers[k, i] = float(mech.transfer_fn(ms, i))
    W = sparse.csr_matrix((vals, (rows, cols)), shape=(N, len(mech.atoms.atoms)))
    return Tabulation(W, transfers, pattern, outcomes)


# -- building blocks ---------------------------------------------------------------

def message_space(env: Environment) -> list:
    """Lexicographic over (report1, report2), each over declared type order."""
    profiles = env.type_profiles()
    return [ScfMessage(r1, r2) for r1 in profiles for r2 in profiles]


def _challenged(env, f, x, reported, agent, type_id) -> bool:
    return differs(x(reported, agent, type_id), f(reported))


def dictator_average(env: Environment, y: DictatorLotteries, m: Sequence[ScfMessage]) -> Outcome:
    n = env.n_agents
    return mixture([(Fraction(1, n), y(k, m[k].report1[k])) for k in range(n)])


def e_fn(params: MechanismParams, m_i: ScfMessage, m_j: ScfMessage, j: int,
         x_scheme: ChallengeScheme, f: SCF, env: Environment):
    """Lottery weight of the pair (i, j): 0, epsilon, or 1."""
    if not env.is_state(m_i.report2):
        return 1
    if _challenged(env, f, x_scheme, m_i.report2, j, m_j.report1[j]):
        return params.epsilon
    return 0


def compound_challenge(env: Environment, y: DictatorLotteries, x_scheme: ChallengeScheme,
                       params: MechanismParams, m: Sequence[ScfMessage], i: int, j: int) -> Outcome:
    """epsilon * dictator average + (1 - epsilon) * x(report2_i, report1_j[j])."""
    test = x_scheme(m[i].report2, j, m[j].report1[j])
    return compound(params.epsilon, dictator_average(env, y, m), test)


def outcome_g(env: Environment, f: SCF, x_scheme: ChallengeScheme, y: DictatorLotteries,
              params: MechanismParams, m: Sequence[ScfMessage]) -> Outcome:
    """Exact g(m) by direct evaluation of the double sum (no atom caching)."""
    n = env.n_agents
    ybar = dictator_average(env, y, m)
    parts = []
    for i in range(n):
        for j in range(n):
            e = e_fn(params, m[i], m[j], j, x_scheme, f, env)
            if e == 1:
                g_ij = ybar
            else:
                g_ij = compound(e, ybar, x_scheme(m[i].report2, j, m[j].report1[j]))
            parts.append((Fraction(1, n * n), g_ij))
    return mixture(parts)


def transfer_tau(env: Environment, f: SCF, x_scheme: ChallengeScheme, params: MechanismParams,
                 m: Sequence[ScfMessage], i: int, tau1_includes_nonstate: bool = True):
    """Total transfer to agent ``i``, summed over opponents ``j != i``.

    A component whose scheme lookup needs a non-state report is zero, except
    the non-state penalty of the first component when the switch is on.
    """
    total = Fraction(0)
    r_i = m[i].report2
    i_state = env.is_state(r_i)
    for j in range(env.n_agents):
        if j == i:
            continue
        # being challenged by j, or naming no state
        if i_state:
            if _challenged(env, f, x_scheme, r_i, j, m[j].report1[j]):
                total -= 2 * params.eta
        elif tau1_includes_nonstate:
            total -= 2 * params.eta
        # disagreeing with j about j's type when j self-challenges, or missing a challenge on j
        r_j = m[j].report2
        if env.is_state(r_j):
            own = _challenged(env, f, x_scheme, r_j, j, m[j].report1[j])
            if own and m[i].report1[j] != m[j].report1[j]:
                total -= params.small_fee
            elif not own and _challenged(env, f, x_scheme, r_j, j, m[i].report1[j]):
                total -= params.small_fee
        # j's gossip about i would challenge i's state report
        if i_state and _challenged(env, f, x_scheme, r_i, i, m[j].report1[i]):
            total -= params.eta
    return total


# -- calibration --------------------------------------------------------------------

def _challenge_configs(env, f, x):
    """(reported state, agent j, type t, entry) with the entry differing from f."""
    out = []
    for s in env.states:
        for j, types in enumerate(env.types):
            for t in types:
                e = x(s, j, t)
                if differs(e, f(s)):
                    out.append((s, j, t, e))
    return out


def _dictator_profiles(env, j, t):
    choices = [env.types[k] if k != j else (t,) for k in range(env.n_agents)]
    return list(itertools.product(*choices))


def _bw_holds(env, eps, s, j, t, anchor, entry, ybar):
    lhs_lie = expected_utility(env, mixture([(eps, ybar), (1 - eps, entry)]), j, s[j])
    rhs_lie = expected_utility(env, anchor, j, s[j])
    lhs_true = expected_utility(env, mixture([(eps, ybar), (1 - eps, entry)]), j, t)
    rhs_true = expected_utility(env, anchor, j, t)
    return lhs_lie, rhs_lie, lhs_true, rhs_true


def challenge_effectiveness(env, configs, eps):
    """Yield (label-context, four utilities) of the effectiveness condition at ``eps``.

    ``configs`` is a list of (reported, agent, type, entry, anchor, dictator ybar list).
    """
    for s, j, t, entry, anchor, ybars in configs:
        for prof, ybar in ybars:
            yield (s, j, t, prof), _bw_holds(env, eps, s, j, t, anchor, entry, ybar)


def _search_epsilon(env, configs):
    worst = None
    for eps in EPS_GRID:
        ok = True
        for ctx, (a, b, c, d) in challenge_effectiveness(env, configs, eps):
            if not (a < b and c > d):
                ok, worst = False, (eps, ctx, (a, b, c, d))
                break
        if ok:
            return eps, None
    return None, worst


def _atom_range(env, atoms):
    """max over (agent, type) of the spread of atom utilities."""
    best = (Fraction(0), None)
    for i, types in enumerate(env.types):
        for t in types:
            us = [expected_utility(env, o, i, t) for o in atoms]
            spread = max(us) - min(us)
            if spread > best[0]:
                best = (spread, (i, t))
    return best


def calibrate_configs(env: Environment, title: str, configs: list, atoms: list) -> tuple:
    """Shared epsilon/eta/fee search. Returns (params, report, bound)."""
    rep = Report(title)
    eps, worst = _search_epsilon(env, configs)
    if eps is None:
        e0, (s, j, t, prof), (a, b, c, d) = worst
        rep.add(f"effectiveness at reported {s}, agent {env.agents[j]}, type {t}, lotteries {prof}, eps={e0}: "
                f"lie-side", a, "<", b)
        rep.add("true-side", c, ">", d)
        raise CalibrationError(
            f"no epsilon in 2^-1..2^-40 keeps the challenge at reported state {s} by "
            f"{env.agents[j]} (type {t}, dictator reports {prof}) effective", rep)
    slacks = []
    for (s, j, t, prof), (a, b, c, d) in challenge_effectiveness(env, configs, eps):
        who = f"reported ({','.join(s)}), {env.agents[j]} type {t}, lotteries ({','.join(prof)})"
        rep.add(f"lie side at {who}", a, "<", b)
        rep.add(f"true side at {who}", c, ">", d)
        slacks += [b - a, c - d]
    if not configs:
        rep.note("no challenged configuration; epsilon set to the largest grid value")
    bound, where = _atom_range(env, atoms)
    if bound == 0:
        bound = Fraction(1)
    eta = ETA_FACTOR * bound
    rep.add("eta exceeds the utility spread of the outcome atoms", eta, ">", bound)
    slacks.append(eta - bound)
    pos = [s for s in slacks if s > 0]
    fee = FEE_FACTOR * min(pos) if pos else FEE_FACTOR
    return MechanismParams(eps, eta, fee), rep, bound


def calibrate(env: Environment, f: SCF, x_scheme: ChallengeScheme, y: DictatorLotteries) -> tuple:
    """Pick (epsilon, eta, small_fee) for the SCF mechanism.

    Returns ``(params, report)``; the report lists every effectiveness check at
    the chosen epsilon and the penalty bound. ``certify_penalty`` adds the
    exhaustive spread once the mechanism exists.
    """
    configs = []
    for s, j, t, entry in _challenge_configs(env, f, x_scheme):
        ybars = [(prof, mixture([(Fraction(1, env.n_agents), y(k, prof[k])) for k in range(env.n_agents)]))
                 for prof in _dictator_profiles(env, j, t)]
        configs.append((s, j, t, entry, f(s), ybars))
    atoms = list(f.range()) + x_scheme.entries() + [y(i, t) for i, ts in enumerate(env.types) for t in ts]
    params, rep, _ = calibrate_configs(env, "calibration", configs, atoms)
    return params, rep


def certify_penalty(mech: Mechanism, report: Report, limit: int = ENUMERATION_LIMIT) -> Report:
    """Exhaustive utility spread of g over all profiles and types, checked against eta.

    Exact (rational) on small games, float on large ones.
    """
    env = mech.env
    if mech.n_profiles > limit:
        report.note(f"exhaustive spread skipped ({mech.n_profiles} profiles > {limit}); atom bound stands")
        return report
    exact = mech.n_profiles <= 5000
    spread = Fraction(0) if exact else 0.0
    if exact:
        outs = [mech.outcome(p) for p in mech.profiles()]
    else:
        tab = mech.tabulate()
    for i, types in enumerate(env.types):
        for t in types:
            if exact:
                us = [expected_utility(env, o, i, t) for o in outs]
                spread = max(spread, max(us) - min(us))
            else:
                us = tab.utilities(mech.atoms, i, t)
                spread = max(spread, float(us.max() - us.min()))
    report.add(f"eta exceeds the exhaustive utility spread of g ({mech.n_profiles} profiles, "
               f"{'exact' if exact else 'float'})", mech.params.eta, ">", spread)
    return report


# -- assembly -------------------------------------------------------------------

def build_mechanism(env: Environment, f: SCF, x_scheme: ChallengeScheme, y: DictatorLotteries,
                    params: MechanismParams | None = None, tau1_includes_nonstate: bool = True) -> Mechanism:
    """Assemble the SCF mechanism; calibrates when ``params`` is None."""
    report = None
    if params is None:
        params, report = calibrate(env, f, x_scheme, y)
    n = env.n_agents
    msgs = message_space(env)
    atoms = AtomTable(env)
    y_ids = {(k, t): atoms.id(y(k, t)) for k in range(n) for t in env.types[k]}
    x_cache: dict = {}

    def entry(reported, j, t):
        key = (reported, j, t)
        hit = x_cache.get(key)
        if hit is None:
            e = x_scheme(reported, j, t)
            hit = (atoms.id(e), differs(e, f(reported)))
            x_cache[key] = hit
        return hit

    w_pair = Fraction(1, n * n)
    w_y = Fraction(1, n)
    eps = params.epsilon

    w_full = w_pair * w_y
    w_eps = w_pair * eps * w_y
    w_test = w_pair * (1 - eps)

    def terms(m):
        out = []
        ys = [y_ids[(k, m[k].report1[k])] for k in range(n)]
        for i in range(n):
            r = m[i].report2
            state = env.is_state(r)
            for j in range(n):
                if not state:
                    out += [(w_full, b) for b in ys]
                    continue
                a, chal = entry(r, j, m[j].report1[j])
                if chal:
                    out += [(w_eps, b) for b in ys]
                    out.append((w_test, a))
                else:
                    out.append((w_pair, a))
        return out

    def transfer(m, i):
        return transfer_tau(env, f, x_scheme, params, m, i, tau1_includes_nonstate)

    mech = Mechanism(env, [list(msgs) for _ in range(n)], terms, transfer, atoms, params, "scf",
                     {"f": f, "scheme": x_scheme, "lotteries": y,
                      "tau1_includes_nonstate": tau1_includes_nonstate})
    if report is not None:
        mech.meta["certificate"] = certify_penalty(mech, report)
    return mech


def truthful_profile(mech: Mechanism, state) -> tuple:
    state = tuple(state)
    return mech.index_of([ScfMessage(state, state)] * mech.env.n_agents)


def on_target(mech: Mechanism, profile, desired: Outcome) -> bool:
    """g(m) equals ``desired`` and no agent pays or receives a mechanism transfer."""
    return not differs(mech.outcome(profile), desired) and all(t == 0 for t in mech.transfers(profile))
