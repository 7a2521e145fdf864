from enum import Enum
from typing import Optional

from pydantic import BaseModel, Field


class MomentForm(str, Enum):
    INTRO_4_0c = "intro"
    A8_FIRST = "a8-first"
    A8_SECOND = "a8-second"
    A8a = "a8a"
    A8b_JACOBI = "a8b"
    M1_SUM = "m1"
    SCHUR_A4 = "schur"
    LIMIT_4_0b = "limit"


class Regime(str, Enum):
    OSCILLATORY = "OSCILLATORY"
    EXPONENTIAL_DECAY = "EXPONENTIAL_DECAY"
    CRITICAL = "CRITICAL"


class MomentValue(BaseModel):
    N: Optional[int] = Field(None, ge=1)  # None for the N -> infinity limit
    t: float = Field(..., ge=0.0)
    k: float
    value: float
    method: str
    err_estimate: float = 0.0


class AsymptoticMoment(BaseModel):
    mu: float = Field(..., gt=0.0)
    t: float = Field(..., ge=0.0)
    N: int = Field(..., ge=1)
    t_star: float
    envelope: float
    phase: float
    regime: Regime
    value: float  # nan in the CRITICAL regime
    decay_exponent: Optional[float] = None
