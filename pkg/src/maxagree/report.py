from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

from .rational import to_jsonable


@dataclass
class CheckReport:
    """Outcome of one verifier; ``violations`` name every offending item."""

    name: str
    passed: bool
    violations: list[dict[str, Any]] = field(default_factory=list)
    details: dict[str, Any] = field(default_factory=dict)

    def __bool__(self) -> bool:
        return self.passed

    def to_json(self) -> dict[str, Any]:
        return {
            "check": self.name,
            "passed": self.passed,
            "violations": to_jsonable(self.violations),
            "details": to_jsonable(self.details),
        }

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = f" ({len(self.violations)} violations)" if self.violations else ""
        return f"{status} {self.name}{extra}"
