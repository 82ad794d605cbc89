"""Bundled example problems.

``bilateral`` is the two-agent trade environment (buyer values 20/12, seller
costs 8/2) with its SCF, test allocations and dictator lotteries.
``scc3`` is a three-agent, two-state correspondence used to exercise the SCC
mechanism end to end.
"""
from __future__ import annotations

import json
from fractions import Fraction
from importlib import resources

from ..config import Problem, loads

VALUES = {"H": 20, "L": 12}
COSTS = {"H": 8, "L": 2}
HALF = Fraction(1, 2)

# (q, t_B, t_S) triples appearing in the SCF, scheme and lotteries
TRIPLES = [
    (1, -6, 6),
    (1, -10, 10),
    (HALF, -2, 2),
    (HALF, -3, 3),
    (1, -15, 15),
    (0, 0, 0),
    (1, -4, 4),
]


def triple_id(q, tb, ts) -> str:
    qs = "0.5" if q == HALF else str(q)
    return f"({qs},{tb},{ts})"


def bilateral_config() -> dict:
    """The bilateral-trade problem as a plain config tree (numbers as strings where fractional)."""
    alts = [triple_id(*t) for t in TRIPLES]

    def num(x):
        return int(x) if Fraction(x).denominator == 1 else str(Fraction(x))

    utilities = {
        "buyer": {ty: {triple_id(q, tb, ts): num(q * v + tb) for q, tb, ts in TRIPLES} for ty, v in VALUES.items()},
        "seller": {ty: {triple_id(q, tb, ts): num(ts - q * c) for q, tb, ts in TRIPLES} for ty, c in COSTS.items()},
    }
    scf = [
        {"state": ["L", "L"], "outcome": triple_id(1, -6, 6)},
        {"state": ["H", "H"], "outcome": triple_id(1, -10, 10)},
        {"state": ["H", "L"], "outcome": triple_id(1, -10, 10)},
        {"state": ["L", "H"], "outcome": triple_id(1, -10, 10)},
    ]
    buyer_test = triple_id(HALF, -2, 2)
    seller_test = triple_id(HALF, -3, 3)
    # buyer of true type L challenges reports naming the buyer H; the seller of
    # true type H challenges (L,L). At (H,L) the seller's allocation is not a
    # strict gain for cost 8, so that entry stays at the desired outcome.
    scheme = [
        {"state": ["H", "H"], "agent": "buyer", "type": "L", "outcome": buyer_test},
        {"state": ["H", "L"], "agent": "buyer", "type": "L", "outcome": buyer_test},
        {"state": ["L", "L"], "agent": "seller", "type": "H", "outcome": seller_test},
    ]
    lotteries = {
        "buyer": {"H": triple_id(1, -15, 15), "L": triple_id(0, 0, 0)},
        "seller": {"H": triple_id(0, 0, 0), "L": triple_id(1, -4, 4)},
    }
    return {
        "agents": ["buyer", "seller"],
        "types": {"buyer": ["H", "L"], "seller": ["H", "L"]},
        "states": [["L", "L"], ["H", "H"], ["H", "L"], ["L", "H"]],
        "alternatives": alts,
        "utilities": utilities,
        "scf": scf,
        "dictator_lotteries": lotteries,
        "challenge_scheme": scheme,
        "seed": 0,
    }


def scc3_config() -> dict:
    """Three agents with types {a, b}; two states; F(a,a,a) = {p, q}, F(b,b,b) = {r}."""
    agents = ["1", "2", "3"]
    base = {"a": {"p": 4, "q": 3, "r": 0}, "b": {"p": 0, "q": 1, "r": 4}}
    # agent-specific scaling keeps the agents from being exact copies
    scale = {"1": 1, "2": 2, "3": 1}
    utilities = {a: {t: {k: v * scale[a] for k, v in row.items()} for t, row in base.items()} for a in agents}
    return {
        "agents": agents,
        "types": {a: ["a", "b"] for a in agents},
        "states": [["a", "a", "a"], ["b", "b", "b"]],
        "alternatives": ["p", "q", "r"],
        "utilities": utilities,
        "scc": [
            {"state": ["a", "a", "a"], "outcomes": ["p", "q"]},
            {"state": ["b", "b", "b"], "outcomes": ["r"]},
        ],
        "dictator_lotteries": {a: {"a": "p", "b": "r"} for a in agents},
        "seed": 0,
    }


BUILDERS = {"bilateral": bilateral_config, "scc3": scc3_config}


def preset_text(name: str) -> str:
    return resources.files(__package__).joinpath(f"{name}.json").read_text()


def load_preset(name: str) -> Problem:
    if name not in BUILDERS:
        raise KeyError(f"unknown preset {name!r}; available: {sorted(BUILDERS)}")
    return loads(preset_text(name), name=name)


def write_presets(directory) -> None:
    from pathlib import Path

    for name, build in BUILDERS.items():
        Path(directory, f"{name}.json").write_text(json.dumps(build(), indent=2) + "\n")
