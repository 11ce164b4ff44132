"""Run reports and CSV emission.

Every command emits exactly one JSON-shaped report plus CSV tables whose
rows always carry their grid coordinates.  Serialisation is deterministic:
fixed column order, sorted JSON keys, shortest round-trip float formatting.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

__all__ = ["Check", "RunReport", "write_csv", "format_float"]


def format_float(x: float) -> str:
    return repr(float(x))


@dataclass(frozen=True)
class Check:
    """One named residual compared against one tolerance."""

    name: str
    value: float
    tolerance: Optional[float] = None
    passed: Optional[bool] = None

    def resolved(self) -> "Check":
        if self.passed is not None or self.tolerance is None:
            return self
        return Check(self.name, self.value, self.tolerance, self.value <= self.tolerance)


@dataclass
class RunReport:
    """Aggregate result of one command invocation."""

    command: str
    checks: list[Check] = field(default_factory=list)
    info: dict = field(default_factory=dict)

    def add(self, name: str, value: float, tolerance: Optional[float] = None,
            passed: Optional[bool] = None) -> None:
        self.checks.append(Check(name, float(value), tolerance, passed).resolved())

    @property
    def passed(self) -> bool:
        return all(c.passed is not False for c in self.checks)

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "passed": self.passed,
            "checks": [
                {
                    "name": c.name,
                    "value": c.value,
                    "tolerance": c.tolerance,
                    "passed": c.passed,
                }
                for c in self.checks
            ],
            "info": self.info,
        }

    def write(self, path: Path) -> None:
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    def summary_lines(self) -> list[str]:
        out = []
        for c in self.checks:
            status = "PASS" if c.passed else ("FAIL" if c.passed is False else "info")
            tol = f" (tol {c.tolerance:g})" if c.tolerance is not None else ""
            out.append(f"[{status}] {c.name} = {c.value:.6e}{tol}")
        return out


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    """Write rows with deterministic float formatting."""
    with path.open("w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            cells = [
                format_float(c) if isinstance(c, (float, np.floating)) else str(c)
                for c in row
            ]
            fh.write(",".join(cells) + "\n")
