from enum import Enum
from typing import Optional

from pydantic import BaseModel


class SffRegime(str, Enum):
    FINITE_N = "FINITE_N"
    FIXED_K_LIMIT = "FIXED_K_LIMIT"
    SCALED_LIMIT = "SCALED_LIMIT"


class SffValue(BaseModel):
    k_or_mu: float
    t: float
    regime: SffRegime
    N: Optional[int] = None
    value: float
    method: str
    err_estimate: float = 0.0
