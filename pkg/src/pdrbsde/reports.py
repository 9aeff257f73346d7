"""Verification and run reports: per-condition residuals, machine-readable."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any


@dataclass(frozen=True)
class ConditionReport:
    name: str
    passed: bool
    max_residual: float
    worst_cell: str | None = None

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "condition": self.name,
            "pass": self.passed,
            "max_residual": self.max_residual,
            "worst_cell": self.worst_cell,
        }


@dataclass(frozen=True)
class VerificationReport:
    conditions: tuple[ConditionReport, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.conditions)

    @property
    def max_residual(self) -> float:
        return max((c.max_residual for c in self.conditions), default=0.0)

    def condition(self, name: str) -> ConditionReport:
        for c in self.conditions:
            if c.name == name:
                return c
        raise KeyError(name)

    def failures(self) -> list[str]:
        return [c.name for c in self.conditions if not c.passed]

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "pass": self.passed,
            "max_residual": self.max_residual,
            "conditions": [c.to_json_dict() for c in self.conditions],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, indent=1)


def condition_from_cells(name: str, cells: list[tuple[float, str]], tol: float) -> ConditionReport:
    """Build a condition from (residual, cell-label) pairs; residuals are >= 0."""
    if not cells:
        return ConditionReport(name=name, passed=True, max_residual=0.0)
    worst, label = max(cells, key=lambda rc: rc[0])
    worst = float(worst)
    return ConditionReport(
        name=name,
        passed=worst <= tol,
        max_residual=worst,
        worst_cell=label if worst > 0 else None,
    )


@dataclass
class RunReport:
    mode: str
    scenario: str
    digest: str
    arithmetic: str
    exit_code: int = 0
    y0: Any = None
    norms: dict = field(default_factory=dict)
    verification: VerificationReport | None = None
    trace: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)

    def to_json_dict(self, include_timings: bool = True) -> dict[str, Any]:
        doc: dict[str, Any] = {
            "mode": self.mode,
            "scenario": self.scenario,
            "digest": self.digest,
            "arithmetic": self.arithmetic,
            "exit_code": self.exit_code,
            "y0": self.y0,
            "norms": self.norms,
            "trace": self.trace,
        }
        doc.update(self.extra)
        if self.verification is not None:
            doc["verification"] = self.verification.to_json_dict()
        if include_timings:
            doc["timings"] = self.timings
        return doc

    def to_json(self, include_timings: bool = True) -> str:
        return json.dumps(self.to_json_dict(include_timings), sort_keys=True, indent=1)
