"""Estimate reports: one inequality instantiated numerically."""
from __future__ import annotations

from dataclasses import dataclass, field

from .fpf1 import write_csv

CSV_HEADER = ["check_name", "time", "lhs", "rhs", "slack", "pass"]


@dataclass(frozen=True)
class Row:
    time: float
    lhs: float
    rhs: float
    passed: bool

    @property
    def slack(self) -> float:
        return self.rhs - self.lhs


@dataclass
class EstimateReport:
    check: str
    rows: list = field(default_factory=list)
    info: dict = field(default_factory=dict)

    def add(self, time, lhs, rhs, passed=None):
        """Append a row; by default it passes iff ``lhs <= rhs``."""
        lhs, rhs = float(lhs), float(rhs)
        if passed is None:
            passed = lhs <= rhs
        self.rows.append(Row(float(time), lhs, rhs, bool(passed)))
        return self

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    @property
    def worst(self) -> Row | None:
        return min(self.rows, key=lambda r: r.slack) if self.rows else None

    @property
    def lhs(self) -> float:
        return max(r.lhs for r in self.rows)

    @property
    def rhs(self) -> float:
        return self.worst.rhs

    @property
    def slack(self) -> float:
        return self.worst.slack

    def __bool__(self):
        return self.passed

    def csv_rows(self):
        return [(self.check, r.time, r.lhs, r.rhs, r.slack, r.passed) for r in self.rows]

    def to_csv(self, path):
        return write_csv(path, CSV_HEADER, self.csv_rows())

    def summary(self) -> str:
        w = self.worst
        state = "PASS" if self.passed else "FAIL"
        if w is None:
            return f"{state} {self.check} (no rows)"
        return f"{state} {self.check}: worst lhs={w.lhs:.6g} rhs={w.rhs:.6g} slack={w.slack:.3g} at t={w.time:g}"
