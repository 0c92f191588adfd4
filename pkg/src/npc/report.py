"""Outcome records for inequality checks."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

#: Gate classes. Exact gates are hard pass/fail at arithmetic tolerance,
#: trend gates judge behaviour under refinement, diagnostics never fail a run.
EXACT = "exact"
TREND = "trend"
DIAGNOSTIC = "diagnostic"
PRECONDITION = "precondition"


def _plain(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        if math.isnan(value) or math.isinf(value):
            return repr(value)
        return value
    if isinstance(value, np.bool_):
        return bool(value)
    return value


@dataclass
class CheckReport:
    """Result of one check.

    ``max_violation`` is the largest amount by which the checked inequality
    fails (non-positive when it holds everywhere); ``tolerance`` is what the
    violation is compared against.
    """

    name: str
    passed: bool
    max_violation: float
    tolerance: float
    witnesses: list[int] = field(default_factory=list)
    notes: str = ""
    gate: str = EXACT
    measured: dict[str, Any] = field(default_factory=dict)

    def __bool__(self) -> bool:
        return bool(self.passed)

    @property
    def hard(self) -> bool:
        return self.gate in (EXACT, PRECONDITION)

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "pass": bool(self.passed),
            "max_violation": _plain(self.max_violation),
            "tolerance": _plain(self.tolerance),
            "witnesses": [int(w) for w in self.witnesses],
            "notes": self.notes,
            "gate": self.gate,
            "measured": _plain(self.measured),
        }

    def to_json(self, **kwargs: Any) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "CheckReport":
        def num(v: Any) -> float:
            return float(v) if not isinstance(v, str) else float(v.strip("'"))

        return cls(
            name=data["name"],
            passed=bool(data["pass"]),
            max_violation=num(data["max_violation"]),
            tolerance=num(data["tolerance"]),
            witnesses=list(data.get("witnesses", [])),
            notes=data.get("notes", ""),
            gate=data.get("gate", EXACT),
            measured=dict(data.get("measured", {})),
        )

    def summary(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return (
            f"[{flag}] {self.name} ({self.gate}): max_violation={self.max_violation:.3e} "
            f"tolerance={self.tolerance:.3e}"
        )


def precondition_failure(name: str, notes: str, violation: float = math.inf,
                         witnesses: list[int] | None = None) -> CheckReport:
    return CheckReport(
        name=name,
        passed=False,
        max_violation=violation,
        tolerance=0.0,
        witnesses=list(witnesses or []),
        notes="precondition failed: " + notes,
        gate=PRECONDITION,
    )


def top_witnesses(violation: np.ndarray, tol: float, limit: int = 10) -> list[int]:
    """Indices of the worst offenders among entries exceeding ``tol``."""
    violation = np.asarray(violation, dtype=float)
    bad = np.flatnonzero(violation > tol)
    if bad.size == 0:
        return []
    order = np.argsort(-violation[bad], kind="stable")
    return [int(i) for i in bad[order[:limit]]]
