"""Shared validation machinery: axiom check reports and structural errors.

Validators never raise on an axiom failure; they collect one Check per
axiom with a witnessing tuple.  Malformed input (unknown labels, shape
mismatches) is a different kind of problem and raises StructuralError
before any axiom is inspected.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class StructuralError(Exception):
    """Tables reference unknown labels or tensors have the wrong shape."""


class PrincipalityError(Exception):
    """A fiber that should contain exactly one solution does not."""


class DegenerateAlgebraError(Exception):
    """The trace form of a would-be C*-algebra is degenerate."""


@dataclass
class Check:
    name: str
    passed: bool
    witness: object = None
    detail: str = ""

    def as_dict(self) -> dict:
        d = {"name": self.name, "passed": self.passed}
        if not self.passed:
            d["witness"] = _jsonable(self.witness)
            if self.detail:
                d["detail"] = self.detail
        return d


@dataclass
class ValidationReport:
    subject: str
    checks: list[Check] = field(default_factory=list)

    def record(self, name: str, passed: bool, witness: object = None, detail: str = "") -> None:
        self.checks.append(Check(name, bool(passed), witness, detail))

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list[Check]:
        return [c for c in self.checks if not c.passed]

    def failed_names(self) -> list[str]:
        return [c.name for c in self.failures()]

    def raise_if_failed(self) -> None:
        if not self.passed:
            bad = ", ".join(f"{c.name} (witness={c.witness!r})" for c in self.failures())
            raise ValueError(f"{self.subject}: validation failed: {bad}")

    def as_dict(self) -> dict:
        return {
            "subject": self.subject,
            "passed": self.passed,
            "checks": [c.as_dict() for c in self.checks],
        }

    def __str__(self) -> str:
        lines = [f"[{'PASS' if self.passed else 'FAIL'}] {self.subject}"]
        for c in self.checks:
            mark = "ok  " if c.passed else "FAIL"
            lines.append(f"  {mark} {c.name}" + ("" if c.passed else f"  witness={c.witness!r}"))
        return "\n".join(lines)


# Default comparison tolerances (relative / absolute), configurable per call.
RTOL = 1e-9
ATOL = 1e-12


def close(a, b, rtol: float = RTOL, atol: float = ATOL) -> bool:
    return bool(np.allclose(np.asarray(a), np.asarray(b), rtol=rtol, atol=atol))


def max_abs(a) -> float:
    a = np.asarray(a)
    return float(np.max(np.abs(a))) if a.size else 0.0


def _jsonable(obj):
    """Best-effort conversion of witnesses to JSON-serializable form."""
    if obj is None or isinstance(obj, (bool, int, float, str)):
        return obj
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, np.generic):
        return _jsonable(obj.item())
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, set, frozenset)):
        return [_jsonable(x) for x in obj]
    return repr(obj)
