"""GUE and LUE comparator formulas for the dip-ramp-plateau picture."""
import logging
import math
from typing import Sequence

from ubmot.schemas.sweep import SweepTable
from ubmot.services.sff import dip_location
from ubmot.services.specfun import laguerre_log
from ubmot.utils.errors import DomainError

logger = logging.getLogger(__name__)


def gue_wavenumber(N: int, tau_b: float) -> float:
    """k = 2√(2N)·τ_b."""
    return 2.0 * math.sqrt(2.0 * N) * tau_b


def gue_char_avg(N: int, k: float) -> float:
    """⟨Σ e^{ikλ_j}⟩ = e^{-k²/4} L_{N-1}^(1)(k²/2)."""
    if N < 1:
        raise DomainError(f"N must be positive, got {N}")
    lag = laguerre_log(N - 1, 1.0, k * k / 2.0)
    if lag.sign == 0:
        return 0.0
    return lag.sign * math.exp(lag.log_abs - k * k / 4.0)


def gue_char_envelope(N: int, tau_b: float) -> float:
    """Large-N form (1/(2√(2πN) τ_b^{3/2})) cos(4Nτ_b - 3π/4), valid for 0 < τ_b < 1."""
    if tau_b <= 0:
        raise DomainError(f"tau_b must be positive, got {tau_b}")
    return math.cos(4 * N * tau_b - 0.75 * math.pi) / (2.0 * math.sqrt(2.0 * math.pi * N) * tau_b ** 1.5)


def gue_sff_limit(tau_b: float) -> float:
    if tau_b <= 0:
        raise DomainError(f"tau_b must be positive, got {tau_b}")
    if tau_b >= 1.0:
        return 1.0
    return (2.0 / math.pi) * (tau_b * math.sqrt(1.0 - tau_b * tau_b) + math.asin(tau_b))


def lue_sff_limit(k: float) -> float:
    if k < 0:
        raise DomainError(f"k must be nonnegative, got {k}")
    return math.atan(k)


def gue_drp_curve(N: int, tau_grid: Sequence[float]) -> SweepTable:
    """N·limit(τ_b) + ⟨Σ e^{ikλ}⟩² with k = 2√(2N)τ_b."""
    rows = []
    for tau in tau_grid:
        ramp = gue_sff_limit(tau)
        avg = gue_char_avg(N, gue_wavenumber(N, tau))
        env = gue_char_envelope(N, tau) if tau < 1.0 else 0.0
        rows.append((tau, gue_wavenumber(N, tau), ramp, avg, env, N * ramp + avg * avg))
    table = SweepTable.from_rows(["tau_b", "k", "sff_limit", "char_avg", "envelope", "total"], rows)
    # the slope term oscillates with period π/(4N) in τ_b
    tau_dip, depth = dip_location(table.column("tau_b"), table.column("total"), period=math.pi / (4 * N))
    table.metadata.extra.update({"N": N, "tau_dip": tau_dip, "dip_value": depth})
    return table
