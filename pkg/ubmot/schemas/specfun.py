import math
from typing import List, NamedTuple

from pydantic import BaseModel, Field, model_validator


class SignedLog(NamedTuple):
    """A real number stored as (log|x|, sign(x)); sign 0 means x == 0."""

    log_abs: float
    sign: int

    def value(self) -> float:
        if self.sign == 0:
            return 0.0
        return self.sign * math.exp(self.log_abs)


class PolyCoeffs(BaseModel):
    degree: int = Field(..., ge=0)
    terms: List[float]

    @model_validator(mode="after")
    def check_length(self):
        if len(self.terms) != self.degree + 1:
            raise ValueError(f"expected {self.degree + 1} terms, got {len(self.terms)}")
        return self

    @property
    def condition(self) -> float:
        """Sum of absolute terms over absolute sum; inf for a vanishing sum."""
        total = math.fsum(self.terms)
        mass = math.fsum(abs(x) for x in self.terms)
        if total == 0.0:
            return math.inf if mass > 0.0 else 1.0
        return mass / abs(total)
