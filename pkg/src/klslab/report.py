"""Shared JSON report schema for every check.

One record per check: ``{check, statistic, threshold, status, lhs, rhs,
slack, seeds, violations, z, hard, details}``.  ``status`` is ``pass``,
``flag`` (statistical check outside its slack) or ``fail`` (hard gate).
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np

STATUSES = ("pass", "flag", "fail")


def _clean(value: Any) -> Any:
    """Make a value JSON-safe: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_clean(v) for v in value.tolist()]
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    return value


@dataclass
class CheckRecord:
    check: str
    statistic: float
    threshold: float
    status: str
    lhs: float | None = None
    rhs: float | None = None
    slack: float | None = None
    seeds: int | None = None
    violations: int | None = None
    z: float | None = None
    hard: bool = False
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.status not in STATUSES:
            raise ValueError(f"status must be one of {STATUSES}")
        if self.status == "fail" and not self.hard:
            raise ValueError("only hard-gate checks may fail; statistical checks flag")

    def to_dict(self) -> dict:
        return _clean(asdict(self))


def aggregate(name: str, records: list[CheckRecord], hard: bool = False, **details) -> CheckRecord:
    """Fold per-seed records into one: worst ratio, violation count, worst status."""
    if not records:
        raise ValueError("nothing to aggregate")
    bad = [r for r in records if r.status != "pass"]
    status = "pass"
    if bad:
        status = "fail" if hard else "flag"

    def ratio(r):
        if r.threshold in (None, 0):
            return r.statistic
        return r.statistic / r.threshold

    worst = max(records, key=ratio)
    margins = [r.details.get("margin") for r in records if "margin" in r.details]
    extra = dict(details)
    if margins:
        extra["min_margin"] = min(margins)
    return CheckRecord(
        check=name, statistic=worst.statistic, threshold=worst.threshold, status=status,
        lhs=worst.lhs, rhs=worst.rhs, slack=worst.slack, seeds=len(records),
        violations=len(bad), z=worst.z, hard=hard, details=extra,
    )


@dataclass
class VerificationReport:
    records: list[CheckRecord] = field(default_factory=list)
    environment: dict = field(default_factory=dict)

    def add(self, record: CheckRecord) -> None:
        self.records.append(record)

    def extend(self, records) -> None:
        self.records.extend(records)

    @property
    def hard_failures(self) -> list[CheckRecord]:
        return [r for r in self.records if r.status == "fail"]

    @property
    def flags(self) -> list[CheckRecord]:
        return [r for r in self.records if r.status == "flag"]

    def exit_code(self) -> int:
        return 1 if self.hard_failures else 0

    def to_dict(self) -> dict:
        return {
            "environment": _clean(self.environment),
            "records": [r.to_dict() for r in self.records],
            "summary": {
                "checks": len(self.records),
                "fail": len(self.hard_failures),
                "flag": len(self.flags),
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def dumps(obj: Any) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"
