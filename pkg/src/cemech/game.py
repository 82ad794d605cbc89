"""Normal-form games induced by a mechanism, correlated equilibria and the implementation LP.

The incentive constraints are written in unconditional form: for agent ``i``
and messages ``a != b``

    sum_{m_-i} sigma(a, m_-i) [u_i(a, m_-i) - u_i(b, m_-i)] >= 0.

Implementation at a state holds exactly when no correlated equilibrium puts
positive mass on a profile outside the target set; that is the linear program
``max sum_{m not in target} sigma(m)`` over the polytope.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .env import DomainError, Outcome
from .lp import lp_solve
from .schemes import differs

log = logging.getLogger(__name__)

PROB_TOL = 1e-12


@dataclass(eq=False)
class NormalFormGame:
    """``payoffs[m_1, ..., m_I, i]`` is agent i's total payoff at the profile.

    ``values`` holds outcome utilities without mechanism transfers and
    ``transfers`` the transfers alone; both are optional and only used for
    learning traces.
    """

    payoffs: np.ndarray
    values: np.ndarray | None = None
    transfers: np.ndarray | None = None
    labels: list | None = None

    def __post_init__(self):
        self.payoffs = np.asarray(self.payoffs, dtype=float)
        if self.payoffs.ndim < 2 or self.payoffs.shape[-1] != self.payoffs.ndim - 1:
            raise DomainError("payoff tensor must have shape counts + (n_agents,)")
        if not np.all(np.isfinite(self.payoffs)):
            raise DomainError("payoff tensor has non-finite entries")

    @property
    def n_agents(self) -> int:
        return self.payoffs.ndim - 1

    @property
    def counts(self) -> tuple:
        return self.payoffs.shape[:-1]

    @property
    def n_profiles(self) -> int:
        return int(np.prod(self.counts))

    def payoff(self, profile, agent: int) -> float:
        return float(self.payoffs[tuple(profile) + (agent,)])

    def flat_index(self, profile) -> int:
        return int(np.ravel_multi_index(tuple(profile), self.counts))

    def unflatten(self, k: int) -> tuple:
        return tuple(int(v) for v in np.unravel_index(k, self.counts))


@dataclass
class CorrelatedStrategy:
    """Distribution over joint profiles, stored as a dense array of shape ``counts``."""

    probs: np.ndarray

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=float)
        if np.any(self.probs < -PROB_TOL):
            raise DomainError("correlated strategy has negative mass")
        if abs(self.probs.sum() - 1.0) > 1e-9:
            raise DomainError(f"correlated strategy sums to {self.probs.sum()}, not 1")

    @classmethod
    def point(cls, counts, profile) -> "CorrelatedStrategy":
        p = np.zeros(counts)
        p[tuple(profile)] = 1.0
        return cls(p)

    @classmethod
    def uniform(cls, counts) -> "CorrelatedStrategy":
        p = np.ones(counts)
        return cls(p / p.sum())

    @classmethod
    def empirical(cls, counts, profiles) -> "CorrelatedStrategy":
        p = np.zeros(counts)
        for prof in profiles:
            p[tuple(prof)] += 1
        return cls(p / p.sum())

    def support(self, tol: float = 1e-9) -> list:
        return [tuple(int(v) for v in k) for k in np.argwhere(self.probs > tol)]


@dataclass
class CECheck:
    passed: bool
    worst_gain: float
    agent: int | None = None
    recommended: int | None = None
    deviation: int | None = None


@dataclass
class CEVerificationReport:
    truthful_profile_is_nash: bool
    max_offpath_mass: float
    offpath_witness: CorrelatedStrategy | None
    implemented: bool
    tol: float = 1e-8
    nash_gain: float = 0.0
    nash_deviation: tuple | None = None
    lp: dict = field(default_factory=dict)
    witness_check: CECheck | None = None
    reduced_counts: tuple | None = None
    seconds: float = 0.0

    def summary(self) -> dict:
        return {
            "implemented": self.implemented,
            "truthful_profile_is_nash": self.truthful_profile_is_nash,
            "nash_best_gain": self.nash_gain,
            "max_offpath_mass": self.max_offpath_mass,
            "tol": self.tol,
            "lp": self.lp,
            "reduced_counts": list(self.reduced_counts) if self.reduced_counts else None,
            "seconds": round(self.seconds, 3),
        }


# -- induction --------------------------------------------------------------------

def induce_game(mech, env, true_state) -> NormalFormGame:
    """payoff(m, i) = u_i(g(m), true_state_i) + tau_i(m) at every joint profile."""
    true_state = tuple(true_state)
    if not env.is_state(true_state):
        raise DomainError(f"{true_state} is not a state")
    tab = mech.tabulate()
    counts = mech.counts
    n = env.n_agents
    values = np.stack([tab.utilities(mech.atoms, i, true_state[i]) for i in range(n)], axis=1)
    values = values.reshape(counts + (n,))
    transfers = tab.transfers.reshape(counts + (n,))
    labels = [[str(m) for m in ms] for ms in mech.messages]
    return NormalFormGame(values + transfers, values, transfers, labels)


def target_mask(mech, desired) -> np.ndarray:
    """Boolean array over profiles: g(m) is a desired outcome and every transfer is zero.

    ``desired`` is one Outcome or a collection of them (for correspondences).
    """
    allowed = [desired] if isinstance(desired, Outcome) else list(desired)
    tab = mech.tabulate()
    hits = np.array([any(not differs(o, z) for z in allowed) for o in tab.outcomes], dtype=bool)
    mask = hits[tab.pattern] & np.all(tab.transfers == 0, axis=1)
    return mask.reshape(mech.counts)


# -- CE membership ------------------------------------------------------------------

def _agent_matrices(game: NormalFormGame, i: int):
    """Payoffs of agent i with its own axis first, flattened over the others."""
    U = np.moveaxis(game.payoffs[..., i], i, 0)
    return U.reshape(U.shape[0], -1)


def deviation_gains(game: NormalFormGame, sigma: np.ndarray, i: int) -> np.ndarray:
    """gain[a, b] = sum_{m_-i} sigma(a, m_-i) [u_i(b, m_-i) - u_i(a, m_-i)]."""
    U = _agent_matrices(game, i)
    S = np.moveaxis(np.asarray(sigma, float), i, 0).reshape(U.shape[0], -1)
    return S @ U.T - (S * U).sum(axis=1)[:, None]


def ce_check(game: NormalFormGame, sigma: CorrelatedStrategy, tol: float = 1e-9) -> CECheck:
    """Every incentive constraint within ``tol``; reports the most violated one."""
    if sigma.probs.shape != game.counts:
        raise DomainError(f"strategy shape {sigma.probs.shape} does not match game {game.counts}")
    worst = CECheck(True, -np.inf)
    for i in range(game.n_agents):
        G = deviation_gains(game, sigma.probs, i)
        np.fill_diagonal(G, -np.inf)
        a, b = np.unravel_index(int(np.argmax(G)), G.shape)
        if G[a, b] > worst.worst_gain:
            worst = CECheck(True, float(G[a, b]), i, int(a), int(b))
    worst.passed = worst.worst_gain <= tol
    return worst


def best_deviation(game: NormalFormGame, profile) -> tuple:
    """(largest unilateral gain, agent, message) at a pure profile."""
    profile = tuple(profile)
    best = (-np.inf, None, None)
    for i in range(game.n_agents):
        idx = list(profile)
        idx[i] = slice(None)
        row = game.payoffs[tuple(idx) + (i,)]
        gains = row - row[profile[i]]
        gains[profile[i]] = -np.inf
        k = int(np.argmax(gains)) if gains.size > 1 else profile[i]
        g = float(gains[k]) if gains.size > 1 else 0.0
        if g > best[0]:
            best = (g, i, k)
    if best[1] is None:
        best = (0.0, None, None)
    return best


def is_pure_nash(game: NormalFormGame, profile, tol: float = 1e-9) -> bool:
    return best_deviation(game, profile)[0] <= tol


def pure_nash_equilibria(game: NormalFormGame, tol: float = 1e-9) -> list:
    best = np.ones(game.counts, dtype=bool)
    for i in range(game.n_agents):
        u = game.payoffs[..., i]
        best &= u >= u.max(axis=i, keepdims=True) - tol
    return [tuple(int(v) for v in k) for k in np.argwhere(best)]


# -- reductions ---------------------------------------------------------------------

def strictly_dominated_reduction(game: NormalFormGame, tol: float = 1e-9) -> list:
    """Iterated removal of messages strictly dominated by another pure message.

    Returns per-agent lists of surviving message indices. No correlated
    equilibrium puts mass on a removed message, and deviations to removed
    messages are dominated by deviations to their dominators, so the CE
    polytope of the reduced game is the original one restricted to survivors.
    """
    alive = [list(range(c)) for c in game.counts]
    changed = True
    while changed:
        changed = False
        sub = game.payoffs[np.ix_(*alive)] if game.n_agents > 1 else game.payoffs
        for i in range(game.n_agents):
            U = np.moveaxis(sub[..., i], i, 0).reshape(len(alive[i]), -1)
            keep = np.ones(len(alive[i]), dtype=bool)
            for b in range(len(alive[i])):
                for a in range(len(alive[i])):
                    if a != b and keep[a] and np.all(U[a] > U[b] + tol):
                        keep[b] = False
                        break
            if not keep.all():
                alive[i] = [m for m, k in zip(alive[i], keep) if k]
                changed = True
                break
    return alive


def subgame(game: NormalFormGame, alive: list) -> NormalFormGame:
    grid = np.ix_(*alive, np.arange(game.n_agents))
    return NormalFormGame(game.payoffs[grid])


# -- the implementation LP -------------------------------------------------------------

def ce_constraints(game: NormalFormGame, drop_zero: bool = True, scale: bool = True):
    """Sparse matrix A with A sigma <= 0 encoding every CE incentive constraint.

    Rows are (agent, recommended, deviation); all-zero rows are dropped and
    each row is scaled to unit max-norm. Returns (A, row_keys).
    """
    N = game.n_profiles
    flat = np.arange(N).reshape(game.counts)
    rows, cols, vals, keys = [], [], [], []
    r = 0
    for i in range(game.n_agents):
        U = _agent_matrices(game, i)
        idx = np.moveaxis(flat, i, 0).reshape(U.shape[0], -1)
        for a in range(U.shape[0]):
            for b in range(U.shape[0]):
                if a == b:
                    continue
                d = U[b] - U[a]
                nz = np.flatnonzero(np.abs(d) > 1e-12)
                if drop_zero and nz.size == 0:
                    continue
                if drop_zero and np.all(d[nz] < 0):
                    # constraint holds for every sigma >= 0
                    continue
                coef = d[nz]
                if scale:
                    coef = coef / np.abs(coef).max()
                rows.append(np.full(nz.size, r))
                cols.append(idx[a, nz])
                vals.append(coef)
                keys.append((i, a, b))
                r += 1
    if rows:
        A = sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(r, N))
    else:
        A = sparse.csr_matrix((0, N))
    return A, keys


def max_offtarget_mass(game: NormalFormGame, target: np.ndarray, backend: str = "auto") -> tuple:
    """Solve max sum_{m not in target} sigma(m) over the CE polytope. Returns (LPResult, A, keys)."""
    A, keys = ce_constraints(game)
    N = game.n_profiles
    c = (~np.asarray(target, bool)).reshape(-1).astype(float)
    A_eq = np.ones((1, N))
    if backend == "auto" and N * (A.shape[0] + 1) > 4_000_000:
        backend = "highs"
    A_ub = A if backend == "highs" else A.toarray()
    res = lp_solve(c, A_ub, np.zeros(A.shape[0]), A_eq, np.ones(1), backend=backend)
    return res, A, keys


def verify_implementation(game: NormalFormGame, target: np.ndarray, truthful=None, tol: float = 1e-8,
                          reduce: bool | None = None, backend: str = "auto") -> CEVerificationReport:
    """LP check that every correlated equilibrium is supported on ``target``.

    ``truthful`` is the profile that should be a pure Nash equilibrium;
    ``reduce`` applies iterated strict dominance first (default: only for
    games with more than 20,000 profiles).
    """
    t0 = time.perf_counter()
    target = np.asarray(target, bool)
    if target.shape != game.counts:
        raise DomainError("target mask shape does not match the game")
    nash_gain, nash_dev = 0.0, None
    is_nash = True
    if truthful is not None:
        g, i, k = best_deviation(game, truthful)
        nash_gain, nash_dev = g, (i, k)
        is_nash = g <= tol
    if reduce is None:
        reduce = game.n_profiles > 20_000
    alive = strictly_dominated_reduction(game) if reduce else [list(range(c)) for c in game.counts]
    sub = subgame(game, alive) if reduce else game
    sub_target = target[np.ix_(*alive)] if reduce else target
    res, A, _ = max_offtarget_mass(sub, sub_target, backend)
    if res.status != "optimal":
        raise RuntimeError(f"implementation LP returned status {res.status}; the CE polytope is never empty")
    x = np.clip(res.x, 0.0, None)
    x = x / x.sum()
    full = np.zeros(game.counts)
    full[np.ix_(*alive)] = x.reshape(sub.counts)
    witness = CorrelatedStrategy(full)
    value = max(0.0, float(res.value))
    wcheck = ce_check(game, witness, tol=1e-7)
    lp_info = {
        "backend": res.backend,
        "status": res.status,
        "value": float(res.value),
        "variables": sub.n_profiles,
        "constraints": int(A.shape[0]) + 1,
        "iterations": res.iterations,
        "certificate": res.certificate,
    }
    return CEVerificationReport(
        truthful_profile_is_nash=is_nash,
        max_offpath_mass=value,
        offpath_witness=witness if value > tol else None,
        implemented=is_nash and value <= tol,
        tol=tol,
        nash_gain=nash_gain,
        nash_deviation=nash_dev,
        lp=lp_info,
        witness_check=wcheck,
        reduced_counts=sub.counts if reduce else None,
        seconds=time.perf_counter() - t0,
    )
