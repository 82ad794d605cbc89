"""Validation reports carrying every inequality that was checked, with its numbers."""
from __future__ import annotations

from dataclasses import dataclass, field

from .env import _fmt, _num_out


@dataclass(frozen=True)
class Check:
    label: str
    lhs: object
    relation: str  # ">", ">=", "<", "<=", or "note"
    rhs: object
    passed: bool
    context: dict = field(default_factory=dict)
    required: bool = True

    def render(self) -> str:
        tag = "ok" if self.passed else ("FAIL" if self.required else "info")
        if self.relation == "note":
            return f"[{tag}] {self.label}"
        rel = {">=": "≥", "<=": "≤"}.get(self.relation, self.relation)
        verdict = "holds" if self.passed else "fails"
        return f"[{tag}] {self.label}: {_fmt(self.lhs)} {rel} {_fmt(self.rhs)} {verdict}"

    def to_json(self) -> dict:
        return {
            "label": self.label,
            "lhs": _num_out(self.lhs),
            "relation": self.relation,
            "rhs": _num_out(self.rhs),
            "passed": self.passed,
            "required": self.required,
            "context": {k: _jsonable(v) for k, v in self.context.items()},
        }


def _jsonable(v):
    if isinstance(v, tuple):
        return [_jsonable(x) for x in v]
    return _num_out(v)


def compare(lhs, relation: str, rhs, tol: float = 0.0) -> bool:
    if relation == ">":
        return lhs > rhs + tol
    if relation == ">=":
        return lhs >= rhs - tol
    if relation == "<":
        return lhs < rhs - tol
    if relation == "<=":
        return lhs <= rhs + tol
    raise ValueError(relation)


@dataclass
class Report:
    title: str
    checks: list = field(default_factory=list)

    def add(self, label, lhs, relation, rhs, tol: float = 0.0, required: bool = True, **context) -> Check:
        c = Check(label, lhs, relation, rhs, compare(lhs, relation, rhs, tol), context, required)
        self.checks.append(c)
        return c

    def note(self, label: str, passed: bool = True, **context) -> Check:
        c = Check(label, None, "note", None, passed, context)
        self.checks.append(c)
        return c

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks if c.required)

    @property
    def violations(self) -> list:
        return [c for c in self.checks if c.required and not c.passed]

    def render(self) -> str:
        head = f"== {self.title}: {'PASS' if self.ok else 'FAIL'} ({len(self.checks)} checks)"
        return "\n".join([head] + ["  " + c.render() for c in self.checks])

    def to_json(self) -> dict:
        return {"title": self.title, "ok": self.ok, "checks": [c.to_json() for c in self.checks]}
