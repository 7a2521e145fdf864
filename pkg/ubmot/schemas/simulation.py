from typing import List

import numpy as np
from pydantic import BaseModel, ConfigDict, Field


class SimConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    N: int = Field(..., ge=1)
    sqrt_dt: float = Field(..., gt=0.0)
    n_steps: int = Field(..., ge=0)
    n_trajectories: int = Field(1, ge=1)
    seed: int = Field(0, ge=0, lt=2**64)
    reunitarize_every: int = Field(50, ge=1)

    @property
    def dt(self) -> float:
        return self.sqrt_dt * self.sqrt_dt

    @property
    def time_per_step(self) -> float:
        """Scaled time advanced by one step, N * dt."""
        return self.N * self.dt

    @property
    def total_time(self) -> float:
        return self.n_steps * self.time_per_step


class Trajectory(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    times: np.ndarray  # shape (n_steps + 1,)
    angles: np.ndarray  # shape (n_steps + 1, N), continuity matched
    max_displacement: float = 0.0
    assignment_fallbacks: int = 0

    @property
    def N(self) -> int:
        return int(self.angles.shape[1])

    def rows(self) -> List[tuple]:
        out = []
        for step, t in enumerate(self.times):
            for i, angle in enumerate(self.angles[step]):
                out.append((step, float(t), i, float(angle)))
        return out
