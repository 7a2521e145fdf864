from datetime import datetime
from enum import Enum
from typing import List, Optional

from pydantic import BaseModel, Field, computed_field

from ubmot import __version__
from ubmot.schemas.sweep import SweepTable


class Suite(str, Enum):
    CLOSED_FORMS = "closed-forms"
    CROSS_FORMS = "cross-forms"
    PDF_ORACLE = "pdf-oracle"
    LIMITS = "limits"
    SCALED = "scaled"
    ASYMPTOTICS = "asymptotics"
    DENSITY = "density"
    MONTE_CARLO = "monte-carlo"
    REFMODELS = "refmodels"
    ALL = "all"


class Budget(str, Enum):
    SMALL = "small"
    FULL = "full"


class ValidationCheck(BaseModel):
    suite: Suite
    name: str
    measured: Optional[float] = None
    expected: Optional[float] = None
    error: Optional[float] = None  # absolute, or in standard errors for Monte Carlo rows
    tolerance: float
    passed: bool
    message: str = ""


class ValidationReport(BaseModel):
    tool_version: str = __version__
    budget: Budget = Budget.SMALL
    suites: List[Suite] = Field(default_factory=list)
    checks: List[ValidationCheck] = Field(default_factory=list)
    created_at: datetime = Field(default_factory=datetime.utcnow)

    @computed_field
    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_table(self) -> SweepTable:
        header = ["suite", "name", "measured", "expected", "error", "tolerance", "passed", "message"]
        rows = [(c.suite.value, c.name, c.measured, c.expected, c.error, c.tolerance, c.passed, c.message) for c in self.checks]
        return SweepTable.from_rows(header, rows)

    @computed_field
    @property
    def failures(self) -> int:
        return sum(not c.passed for c in self.checks)
