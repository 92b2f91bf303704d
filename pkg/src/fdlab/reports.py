"""Verification reports with declarative pass/fail checks."""

from __future__ import annotations

import enum
import json
import math
import operator
from dataclasses import dataclass, field

from .flow import fmt


class ResultId(str, enum.Enum):
    THM1 = "THM1"
    THM2_RATIO = "THM2_RATIO"
    THM_GAUSS_NONASYMP = "THM_GAUSS_NONASYMP"
    PROP_ID = "PROP_ID"
    PROP_LPFT = "PROP_LPFT"
    PROP_LP_PERFECT = "PROP_LP_PERFECT"
    LEM_BALANCE = "LEM_BALANCE"
    LEM_FEATINV = "LEM_FEATINV"
    LEM_LP_UPPER = "LEM_LP_UPPER"
    LEM_ANGLE_PERTURB = "LEM_ANGLE_PERTURB"
    LEM_SUBSPACE_ANGLE = "LEM_SUBSPACE_ANGLE"
    LEM_HEAD_ANTICONC = "LEM_HEAD_ANTICONC"


_OPS = {"<=": operator.le, "<": operator.lt, ">=": operator.ge, ">": operator.gt,
        "==": operator.eq}


@dataclass(frozen=True)
class Check:
    """``quantities[quantity] <op> bound``; ``bound`` is a number or another quantity's name."""

    quantity: str
    op: str
    bound: float | str

    def holds(self, quantities) -> bool:
        lhs = quantities[self.quantity]
        rhs = quantities[self.bound] if isinstance(self.bound, str) else self.bound
        return bool(_OPS[self.op](lhs, rhs))

    def describe(self, quantities) -> str:
        rhs = quantities[self.bound] if isinstance(self.bound, str) else self.bound
        name = f"{self.bound}=" if isinstance(self.bound, str) else ""
        return f"{self.quantity}={quantities[self.quantity]:.6g} {self.op} {name}{rhs:.6g}"


@dataclass
class TheoremReport:
    """Quantities measured for one result, and the checks that decide it.

    A report without checks has nothing assertable (e.g. a vacuous bound)
    and counts as passing.
    """

    result_id: ResultId
    quantities: dict
    checks: list = field(default_factory=list)
    notes: str = ""

    def __post_init__(self):
        self.result_id = ResultId(self.result_id)
        self.quantities = {k: float(v) for k, v in self.quantities.items()}
        bad = [k for k, v in self.quantities.items() if not math.isfinite(v)]
        if bad:
            raise ValueError(f"non-finite report quantities: {bad}")
        for c in self.checks:
            if c.op not in _OPS:
                raise ValueError(f"unknown comparison {c.op!r}")

    @property
    def passed(self) -> bool:
        return all(c.holds(self.quantities) for c in self.checks)

    @property
    def assertable(self) -> bool:
        return bool(self.checks)

    def to_dict(self):
        return {
            "result_id": self.result_id.value,
            "pass": self.passed,
            "assertable": self.assertable,
            "quantities": {k: fmt(v) for k, v in sorted(self.quantities.items())},
            "checks": [{"quantity": c.quantity, "op": c.op,
                        "bound": c.bound if isinstance(c.bound, str) else fmt(c.bound)}
                       for c in self.checks],
            "notes": self.notes,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, data) -> "TheoremReport":
        checks = []
        for c in data["checks"]:
            bound = c["bound"]
            try:
                bound = float(bound)
            except ValueError:
                pass
            checks.append(Check(c["quantity"], c["op"], bound))
        return cls(result_id=data["result_id"],
                   quantities={k: float(v) for k, v in data["quantities"].items()},
                   checks=checks, notes=data.get("notes", ""))

    @classmethod
    def from_json(cls, text) -> "TheoremReport":
        return cls.from_dict(json.loads(text))

    def summary_line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        if not self.assertable:
            status = "PASS (nothing asserted)"
        detail = "; ".join(c.describe(self.quantities) for c in self.checks)
        return f"{self.result_id.value:<20} {status}  {detail}"


def summary_table(reports) -> str:
    lines = ["| result | verdict | checks |", "|---|---|---|"]
    for r in reports:
        verdict = "pass" if r.passed else "FAIL"
        if not r.assertable:
            verdict = "pass (vacuous)"
        checks = "<br>".join(c.describe(r.quantities) for c in r.checks) or "-"
        lines.append(f"| {r.result_id.value} | {verdict} | {checks} |")
    return "\n".join(lines) + "\n"
