"""Certification results shared by every checker in the package."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class CertReport:
    """Outcome of one sampled inequality check.

    ``max_violation`` is the largest value of ``lhs - rhs`` over the checked
    samples (negative means slack), located at time/sample ``violation_location``.
    """

    inequality_id: str
    samples_checked: int
    max_violation: float
    violation_location: float
    tolerance: float
    passed: bool
    note: str = ""

    def to_json(self) -> dict:
        out = {
            "inequality_id": self.inequality_id,
            "samples_checked": self.samples_checked,
            "max_violation": self.max_violation,
            "violation_location": self.violation_location,
            "tolerance": self.tolerance,
            "pass": self.passed,
        }
        if self.note:
            out["note"] = self.note
        return out

    @classmethod
    def from_violations(cls, inequality_id, times, violations, tolerance, note=""):
        violations = np.asarray(violations, dtype=float)
        times = np.asarray(times, dtype=float)
        if violations.size == 0:
            return cls(inequality_id, 0, float("-inf"), float("nan"), tolerance, True, note)
        bad = ~np.isfinite(violations)
        if bad.any():
            # a NaN anywhere is a failure, reported at its first occurrence
            i = int(np.argmax(bad))
            return cls(inequality_id, int(violations.size), float("inf"),
                       float(times[i]), tolerance, False, note)
        i = int(np.argmax(violations))
        worst = float(violations[i])
        return cls(inequality_id, int(violations.size), worst, float(times[i]),
                   tolerance, worst <= tolerance, note)
