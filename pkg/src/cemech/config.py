"""Declarative JSON configs for environments, rules, lotteries and schemes.

Numbers are parsed exactly: JSON floats become ``Fraction`` (so ``0.5`` is
exactly one half) and strings such as ``"1/3"`` are accepted wherever a number
is expected.

Top-level keys::

    agents              list of agent names
    types               {agent: [type ids]}
    states              [[type per agent], ...]
    alternatives        [alternative ids]
    utilities           {agent: {type: {alternative: value}}}
    scf                 [{"state": [...], "outcome": OUTCOME}, ...]
    scc                 [{"state": [...], "outcomes": [OUTCOME, ...]}, ...]
    dictator_lotteries  {agent: {type: OUTCOME}}
    challenge_scheme    [{"state": [...], "agent": a, "type": t, "outcome": OUTCOME}, ...]
    seed                integer (optional)

An OUTCOME is an alternative id (point mass, zero transfers) or
``{"lottery": {alt: prob} | alt, "transfers": [..] | {agent: t}}``. Scheme
entries that are not listed default to the desired outcome of their state.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

from .env import SCC, SCF, DomainError, Environment, Outcome, validate_environment
from .schemes import ChallengeScheme, DictatorLotteries, complete_scheme


class ConfigError(ValueError):
    """Malformed config; the message names the offending key path."""


@dataclass(eq=False)
class Problem:
    name: str
    env: Environment
    scf: SCF | None = None
    scc: SCC | None = None
    lotteries: DictatorLotteries | None = None
    scheme: ChallengeScheme | None = None
    seed: int = 0
    raw: dict | None = None


def _num(x, where: str):
    if isinstance(x, bool):
        raise ConfigError(f"{where}: expected a number, got {x!r}")
    if isinstance(x, (int, Fraction)):
        return x
    if isinstance(x, float):
        return Fraction(x)
    if isinstance(x, str):
        try:
            v = Fraction(x)
        except (ValueError, ZeroDivisionError):
            raise ConfigError(f"{where}: cannot parse number {x!r}") from None
        return int(v) if v.denominator == 1 else v
    raise ConfigError(f"{where}: expected a number, got {x!r}")


def _require(d: dict, key: str, where: str = ""):
    if key not in d:
        raise ConfigError(f"{where}{key}: missing required key")
    return d[key]


def parse_outcome(spec, env: Environment, where: str) -> Outcome:
    n = env.n_agents
    if isinstance(spec, str):
        if spec not in env.alternatives:
            raise ConfigError(f"{where}: unknown alternative {spec!r}")
        return Outcome.pure(spec, n)
    if not isinstance(spec, dict):
        raise ConfigError(f"{where}: outcome must be an alternative id or an object")
    lot = _require(spec, "lottery", where + ".")
    if isinstance(lot, str):
        lot = {lot: 1}
    if not isinstance(lot, dict) or not lot:
        raise ConfigError(f"{where}.lottery: expected a nonempty mapping")
    pairs = []
    for a, p in lot.items():
        if a not in env.alternatives:
            raise ConfigError(f"{where}.lottery: unknown alternative {a!r}")
        pairs.append((a, _num(p, f"{where}.lottery.{a}")))
    t = spec.get("transfers", [0] * n)
    if isinstance(t, dict):
        vec = [0] * n
        for agent, val in t.items():
            try:
                vec[env.agent_index(agent)] = _num(val, f"{where}.transfers.{agent}")
            except DomainError as e:
                raise ConfigError(f"{where}.transfers: {e}") from None
        t = vec
    if len(t) != n:
        raise ConfigError(f"{where}.transfers: expected {n} entries")
    t = [_num(v, f"{where}.transfers[{k}]") for k, v in enumerate(t)]
    try:
        return Outcome(tuple(pairs), tuple(t))
    except DomainError as e:
        raise ConfigError(f"{where}: {e}") from None


def _state(raw, env: Environment, where: str) -> tuple:
    if isinstance(raw, str):
        raw = raw.split(",")
    s = tuple(raw)
    if s not in env.states:
        raise ConfigError(f"{where}: {list(s)} is not a listed state")
    return s


def parse_environment(cfg: dict) -> Environment:
    agents = _require(cfg, "agents")
    if not isinstance(agents, list) or len(agents) < 2:
        raise ConfigError("agents: need a list of at least two agents")
    types_raw = _require(cfg, "types")
    types = []
    for a in agents:
        ts = types_raw.get(a) if isinstance(types_raw, dict) else None
        if not ts:
            raise ConfigError(f"types.{a}: missing or empty type list")
        types.append(tuple(str(t) for t in ts))
    states = _require(cfg, "states")
    if not isinstance(states, list) or not states:
        raise ConfigError("states: need a nonempty list of type profiles")
    for k, s in enumerate(states):
        if not isinstance(s, list) or len(s) != len(agents):
            raise ConfigError(f"states[{k}]: expected one type per agent")
    alts = _require(cfg, "alternatives")
    if not isinstance(alts, list) or not alts:
        raise ConfigError("alternatives: need a nonempty list")
    util_raw = _require(cfg, "utilities")
    utilities = {}
    for i, a in enumerate(agents):
        per_agent = util_raw.get(a)
        if not isinstance(per_agent, dict):
            raise ConfigError(f"utilities.{a}: missing")
        for t in types[i]:
            row = per_agent.get(t)
            if not isinstance(row, dict):
                raise ConfigError(f"utilities.{a}.{t}: missing")
            for alt in alts:
                if alt not in row:
                    raise ConfigError(f"utilities.{a}.{t}.{alt}: missing")
                utilities[(alt, i, t)] = _num(row[alt], f"utilities.{a}.{t}.{alt}")
    env = Environment(tuple(agents), tuple(types), tuple(tuple(str(x) for x in s) for s in states),
                      tuple(alts), utilities)
    return env


def parse_config(cfg: dict, name: str = "config") -> Problem:
    env = parse_environment(cfg)
    problems = validate_environment(env)
    if problems:
        raise ConfigError("environment invalid: " + "; ".join(problems))
    prob = Problem(name=name, env=env, seed=int(cfg.get("seed", 0)), raw=cfg)
    if "scf" in cfg:
        assignment = {}
        for k, row in enumerate(cfg["scf"]):
            s = _state(_require(row, "state", f"scf[{k}]."), env, f"scf[{k}].state")
            assignment[s] = parse_outcome(_require(row, "outcome", f"scf[{k}]."), env, f"scf[{k}].outcome")
        missing = [s for s in env.states if s not in assignment]
        if missing:
            raise ConfigError(f"scf: no outcome for states {missing}")
        prob.scf = SCF(assignment)
    if "scc" in cfg:
        assignment = {}
        for k, row in enumerate(cfg["scc"]):
            s = _state(_require(row, "state", f"scc[{k}]."), env, f"scc[{k}].state")
            outs = _require(row, "outcomes", f"scc[{k}].")
            if not outs:
                raise ConfigError(f"scc[{k}].outcomes: must be nonempty")
            parsed = []
            for j, o in enumerate(outs):
                oo = parse_outcome(o, env, f"scc[{k}].outcomes[{j}]")
                if oo not in parsed:
                    parsed.append(oo)
            assignment[s] = tuple(parsed)
        missing = [s for s in env.states if s not in assignment]
        if missing:
            raise ConfigError(f"scc: no outcomes for states {missing}")
        prob.scc = SCC(assignment)
    if "dictator_lotteries" in cfg:
        table = {}
        raw = cfg["dictator_lotteries"]
        for i, a in enumerate(env.agents):
            for t in env.types[i]:
                try:
                    spec = raw[a][t]
                except (KeyError, TypeError):
                    raise ConfigError(f"dictator_lotteries.{a}.{t}: missing") from None
                table[(i, t)] = parse_outcome(spec, env, f"dictator_lotteries.{a}.{t}")
        prob.lotteries = DictatorLotteries(table)
    if prob.scf is not None:
        partial = {}
        for k, row in enumerate(cfg.get("challenge_scheme", [])):
            where = f"challenge_scheme[{k}]"
            s = _state(_require(row, "state", where + "."), env, where + ".state")
            try:
                i = env.agent_index(_require(row, "agent", where + "."))
            except DomainError as e:
                raise ConfigError(f"{where}.agent: {e}") from None
            t = str(_require(row, "type", where + "."))
            if t not in env.types[i]:
                raise ConfigError(f"{where}.type: {t!r} is not a type of {env.agents[i]}")
            partial[(s, i, t)] = parse_outcome(_require(row, "outcome", where + "."), env, where + ".outcome")
        prob.scheme = complete_scheme(env, prob.scf, partial)
    return prob


def loads(text: str, name: str = "config") -> Problem:
    try:
        cfg = json.loads(text, parse_float=Fraction)
    except json.JSONDecodeError as e:
        raise ConfigError(f"line {e.lineno}, column {e.colno}: {e.msg}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("top level must be an object")
    return parse_config(cfg, name)


def load(path) -> Problem:
    p = Path(path)
    return loads(p.read_text(), name=p.stem)
