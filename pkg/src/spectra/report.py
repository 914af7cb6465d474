from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    value: float | None = None
    threshold: float | None = None
    detail: str = ""

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "passed": self.passed,
            "value": _json_float(self.value),
            "threshold": _json_float(self.threshold),
            "detail": self.detail,
        }


@dataclass
class ValidationReport:
    """Ordered list of named pass/fail checks. Report-style operations never raise."""

    title: str
    checks: list[Check] = field(default_factory=list)

    def add(
        self,
        name: str,
        passed: bool,
        value: float | None = None,
        threshold: float | None = None,
        detail: str = "",
    ) -> Check:
        check = Check(name, bool(passed), value, threshold, detail)
        self.checks.append(check)
        return check

    def extend(self, other: "ValidationReport") -> None:
        self.checks.extend(other.checks)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list[Check]:
        return [c for c in self.checks if not c.passed]

    def __getitem__(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict[str, Any]:
        return {
            "title": self.title,
            "passed": self.passed,
            "checks": [c.to_dict() for c in self.checks],
        }


def _json_float(x: float | None) -> float | str | None:
    if x is None:
        return None
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x
