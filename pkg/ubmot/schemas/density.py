from enum import Enum
from typing import List, Optional

from pydantic import BaseModel, Field, model_validator


class DensityMethod(str, Enum):
    HERGLOTZ = "herglotz"
    FOURIER = "fourier"
    FINITE = "finite"


class DensityProfile(BaseModel):
    t: float = Field(..., gt=0.0)
    grid: List[float]
    values: List[float]
    method: DensityMethod
    support_edge: float
    edge_amplitude: Optional[float] = None
    N: Optional[int] = None

    @model_validator(mode="after")
    def check_shape(self):
        if len(self.grid) != len(self.values):
            raise ValueError("grid and values differ in length")
        if any(v < -1e-10 for v in self.values):
            raise ValueError("density values must be nonnegative")
        return self
