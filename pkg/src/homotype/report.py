"""Structured verification results.

A :class:`Report` collects named measurements and pass/fail checks. Every
numeric value is JSON-serialisable so reports can be written byte-stably.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np


def to_jsonable(obj: Any) -> Any:
    """Convert numpy scalars/arrays and nested containers into plain JSON types."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, (set, frozenset)):
        return [to_jsonable(v) for v in sorted(obj)]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if hasattr(obj, "to_dict"):
        return to_jsonable(obj.to_dict())
    return obj


@dataclass
class Check:
    name: str
    passed: bool
    value: Any = None
    bound: Any = None
    witness: Any = None
    anchor: str = ""
    asserted: bool = True

    def to_dict(self) -> dict:
        return to_jsonable(
            {
                "name": self.name,
                "passed": self.passed,
                "value": self.value,
                "bound": self.bound,
                "witness": self.witness,
                "anchor": self.anchor,
                "asserted": self.asserted,
            }
        )


@dataclass
class Report:
    name: str
    values: dict = field(default_factory=dict)
    checks: list[Check] = field(default_factory=list)
    witness: Any = None
    oracle: str = ""
    provenance: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks if c.asserted)

    def check(self, name, passed, value=None, bound=None, witness=None,
              anchor="", asserted=True) -> Check:
        c = Check(name, bool(passed), value, bound, witness, anchor, asserted)
        self.checks.append(c)
        return c

    def get(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def failures(self) -> list[Check]:
        return [c for c in self.checks if c.asserted and not c.passed]

    def __getitem__(self, key):
        return self.values[key]

    def to_dict(self) -> dict:
        return to_jsonable(
            {
                "name": self.name,
                "passed": self.passed,
                "values": self.values,
                "checks": [c.to_dict() for c in self.checks],
                "witness": self.witness,
                "oracle": self.oracle,
                "provenance": self.provenance,
            }
        )
