import math
from typing import Dict

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from ubmot.utils.errors import DomainError


class EnsembleParams(BaseModel):
    """One state (N, t) of the Brownian motion; q = exp(-t/2N)."""

    model_config = ConfigDict(frozen=True)

    N: int = Field(..., ge=1)
    t: float = Field(..., ge=0.0)

    @property
    def log_q(self) -> float:
        return -self.t / (2.0 * self.N)

    @property
    def q(self) -> float:
        return math.exp(self.log_q)

    @property
    def center(self) -> float:
        return (self.N - 1) / 2.0

    @classmethod
    def of(cls, N: int, t: float) -> "EnsembleParams":
        try:
            return cls(N=N, t=t)
        except ValidationError as e:
            raise DomainError(f"invalid ensemble parameters N={N}, t={t}: {e.errors()[0]['msg']}") from e


class KernelCoeffs(BaseModel):
    """
    Coefficients of the correlation kernel double sum.

    a[j] for j in 0..N-1; b maps each retained l outside 0..N-1 to its coefficient.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    params: EnsembleParams
    a: np.ndarray
    b: Dict[int, float]
    l_min: int
    l_max: int
    tail_bound: float = 0.0

    @property
    def l_values(self) -> np.ndarray:
        return np.fromiter(self.b.keys(), dtype=np.int64, count=len(self.b))

    @property
    def b_values(self) -> np.ndarray:
        return np.fromiter(self.b.values(), dtype=float, count=len(self.b))
