"""Outcome record shared by every verification routine."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any


@dataclass(frozen=True)
class CheckReport:
    """Result of one verification.

    ``worst_margin`` is a signed slack: positive means the inequality holds
    with room to spare. ``passed`` is true exactly when
    ``worst_margin >= -tolerance``.
    """

    check_id: str
    passed: bool
    worst_margin: float
    worst_location: tuple
    tolerance: float
    details: dict = field(default_factory=dict)

    @classmethod
    def from_margin(cls, check_id, worst_margin, worst_location, tolerance, **details):
        worst_margin = float(worst_margin)
        passed = bool(worst_margin >= -tolerance)
        return cls(check_id, passed, worst_margin, tuple(worst_location), float(tolerance), details)

    def to_json(self) -> dict[str, Any]:
        return {
            "check_id": self.check_id,
            "passed": self.passed,
            "worst_margin": _finite_or_str(self.worst_margin),
            "worst_location": [_finite_or_str(v) for v in self.worst_location],
            "tolerance": _finite_or_str(self.tolerance),
        }


def _finite_or_str(v):
    v = float(v)
    if v != v or v in (float("inf"), float("-inf")):
        return str(v)
    return v
