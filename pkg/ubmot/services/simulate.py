"""
Matrix-level Monte Carlo of Brownian motion on U(N) from the identity.

One step multiplies U by exp(i√δt M) with M drawn from the GUE (density
∝ exp(-Tr M²/2)); the exponential comes from the eigendecomposition of M.
Scaled time advances by N·δt per step, so the first moment of the simulated
angles tracks e^{-t/2}.
"""
import logging
import math
from functools import partial
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import ValidationError
from scipy.linalg import LinAlgError, svd
from scipy.optimize import linear_sum_assignment

from ubmot.schemas.simulation import SimConfig, Trajectory
from ubmot.schemas.sweep import SweepTable
from ubmot.services.parallel import run_cells
from ubmot.utils.errors import DomainError, UnitarityDriftError

logger = logging.getLogger(__name__)

MAX_SQRT_DT = 0.05
DRIFT_TOL = 1e-8
MATCH_FALLBACK = math.pi / 4.0
MIN_TRAJECTORIES = 100


def sim_config(**kwargs) -> SimConfig:
    try:
        return SimConfig(**kwargs)
    except ValidationError as e:
        raise DomainError(f"invalid simulation config: {e}") from e


def trajectory_rng(seed: int, index: int) -> np.random.Generator:
    """Counter-based stream for trajectory `index`; independent of how work is split."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(index,))))


def gue_sample(N: int, rng: np.random.Generator) -> np.ndarray:
    """Hermitian M with unit-variance real diagonal and E|M_ij|² = 1 off the diagonal."""
    A = rng.standard_normal((N, N)) + 1j * rng.standard_normal((N, N))
    return (A + A.conj().T) / 2.0


def step(U: np.ndarray, M: np.ndarray, sqrt_dt: float) -> np.ndarray:
    lam, V = np.linalg.eigh(M)
    return U @ ((V * np.exp(1j * sqrt_dt * lam)) @ V.conj().T)


def reunitarize(U: np.ndarray) -> np.ndarray:
    """Nearest unitary in Frobenius norm (polar factor)."""
    # gesdd fails to converge on some near-unitary inputs; gesvd does not
    try:
        W, _, Zh = svd(U, lapack_driver="gesvd", check_finite=False)
    except LinAlgError as exc:
        raise UnitarityDriftError(f"polar correction failed: {exc}", err_estimate=float("inf")) from exc
    U = W @ Zh
    drift = float(np.max(np.abs(U.conj().T @ U - np.eye(U.shape[0]))))
    if drift > DRIFT_TOL:
        raise UnitarityDriftError(f"unitarity drift {drift:.2e} after polar correction", err_estimate=drift)
    return U


def angle_occupancy(angles: np.ndarray, n_bins: int = 32) -> float:
    """Fraction of equal bins of (-π, π] holding at least one angle; unwrapped angles are folded back."""
    wrapped = np.angle(np.exp(1j * np.ravel(angles)))
    counts, _ = np.histogram(wrapped, bins=n_bins, range=(-math.pi, math.pi))
    return float(np.count_nonzero(counts)) / n_bins


def eigen_angles(U: np.ndarray) -> np.ndarray:
    """Eigen-angles in (-π, π]."""
    x = np.angle(np.linalg.eigvals(U))
    return np.where(x <= -math.pi, math.pi, x)


def _cyclic_distance(prev: np.ndarray, cur: np.ndarray) -> np.ndarray:
    d = np.abs(np.subtract.outer(prev, cur)) % (2 * math.pi)
    return np.minimum(d, 2 * math.pi - d)


def match_angles(prev: np.ndarray, cur: np.ndarray) -> Tuple[np.ndarray, float, bool]:
    """
    Reorder cur so that cur[i] continues prev[i].

    Greedy cyclic nearest neighbour; when any matched displacement exceeds π/4
    the optimal assignment is used instead. Returns (matched, max displacement,
    whether the assignment solver was used).
    """
    dist = _cyclic_distance(prev, cur)
    N = len(prev)
    order = np.empty(N, dtype=int)
    free = np.ones(N, dtype=bool)
    for i in range(N):
        j = int(np.argmin(np.where(free, dist[i], np.inf)))
        order[i] = j
        free[j] = False
    max_disp = float(dist[np.arange(N), order].max()) if N else 0.0
    if max_disp <= MATCH_FALLBACK:
        return cur[order], max_disp, False
    _, order = linear_sum_assignment(dist)
    return cur[order], float(dist[np.arange(N), order].max()), True


def evolve(config: SimConfig, index: int = 0) -> Trajectory:
    """One continuity-matched trajectory of N eigen-angles."""
    if config.sqrt_dt > MAX_SQRT_DT:
        raise DomainError(f"sqrt_dt must be <= {MAX_SQRT_DT}, got {config.sqrt_dt}")
    N = config.N
    rng = trajectory_rng(config.seed, index)
    U = np.eye(N, dtype=complex)
    angles = np.zeros((config.n_steps + 1, N))
    max_disp, fallbacks = 0.0, 0
    for n in range(1, config.n_steps + 1):
        U = step(U, gue_sample(N, rng), config.sqrt_dt)
        if n % config.reunitarize_every == 0:
            U = reunitarize(U)
        matched, disp, used_solver = match_angles(angles[n - 1], eigen_angles(U))
        angles[n] = matched
        max_disp = max(max_disp, disp)
        fallbacks += used_solver
    if max_disp >= math.pi / 2:
        logger.warning(f"⚠️ matched displacement reached {max_disp:.3f}; consider a smaller sqrt_dt")
    times = config.time_per_step * np.arange(config.n_steps + 1)
    return Trajectory(times=times, angles=angles, max_displacement=max_disp, assignment_fallbacks=fallbacks)


def evolve_many(config: SimConfig, threads: Optional[int] = None) -> List[Trajectory]:
    return run_cells(partial(evolve, config), range(config.n_trajectories), threads, desc="trajectories")


def trajectory_table(trajectories: Sequence[Trajectory], **meta) -> SweepTable:
    if len(trajectories) == 1:
        return SweepTable.from_rows(["step", "t", "angle_index", "angle"], trajectories[0].rows(), **meta)
    rows = [(i,) + row for i, traj in enumerate(trajectories) for row in traj.rows()]
    return SweepTable.from_rows(["trajectory", "step", "t", "angle_index", "angle"], rows, **meta)


# --- observables ---


class Accumulator:
    """Running sums of X = Σ_l e^{ikx_l} per (checkpoint, k) cell; merge is associative."""

    def __init__(self, shape: Tuple[int, ...]):
        self.n = 0
        self.sum = np.zeros(shape, dtype=complex)
        self.sum_abs2 = np.zeros(shape)
        self.sum_abs4 = np.zeros(shape)
        self.sum_re2 = np.zeros(shape)

    def add(self, X: np.ndarray) -> "Accumulator":
        a2 = np.abs(X) ** 2
        self.n += 1
        self.sum += X
        self.sum_abs2 += a2
        self.sum_abs4 += a2 * a2
        self.sum_re2 += X.real ** 2
        return self

    def merge(self, other: "Accumulator") -> "Accumulator":
        out = Accumulator(self.sum.shape)
        out.n = self.n + other.n
        out.sum = self.sum + other.sum
        out.sum_abs2 = self.sum_abs2 + other.sum_abs2
        out.sum_abs4 = self.sum_abs4 + other.sum_abs4
        out.sum_re2 = self.sum_re2 + other.sum_re2
        return out

    def mean(self) -> np.ndarray:
        return self.sum / self.n

    def covariance(self) -> np.ndarray:
        """Unbiased sample variance of X (divisor n - 1)."""
        return (self.sum_abs2 - np.abs(self.sum) ** 2 / self.n) / (self.n - 1)

    def abs2_mean(self) -> np.ndarray:
        return self.sum_abs2 / self.n

    def re_stderr(self) -> np.ndarray:
        var = (self.sum_re2 - self.sum.real ** 2 / self.n) / (self.n - 1)
        return np.sqrt(np.maximum(var, 0.0) / self.n)

    def abs2_stderr(self) -> np.ndarray:
        var = (self.sum_abs4 - self.sum_abs2 ** 2 / self.n) / (self.n - 1)
        return np.sqrt(np.maximum(var, 0.0) / self.n)


def checkpoint_steps(config: SimConfig, t_checkpoints: Sequence[float]) -> List[int]:
    steps = [int(round(t / config.time_per_step)) for t in t_checkpoints]
    if any(s < 0 or s > config.n_steps for s in steps):
        raise DomainError(f"checkpoints {list(t_checkpoints)} exceed the simulated time {config.total_time}")
    return steps


def _trajectory_sums(config: SimConfig, steps: Sequence[int], ks: Sequence[int], index: int) -> np.ndarray:
    """X[c, j] = Σ_l e^{i k_j x_l} at checkpoint c for one trajectory."""
    N = config.N
    rng = trajectory_rng(config.seed, index)
    ks = np.asarray(ks, dtype=float)
    out = np.empty((len(steps), len(ks)), dtype=complex)
    wanted = {}
    for c, s in enumerate(steps):
        wanted.setdefault(s, []).append(c)
    U = np.eye(N, dtype=complex)
    for n in range(0, max(steps) + 1):
        if n > 0:
            U = step(U, gue_sample(N, rng), config.sqrt_dt)
            if n % config.reunitarize_every == 0:
                U = reunitarize(U)
        if n in wanted:
            x = eigen_angles(U) if n > 0 else np.zeros(N)
            X = np.exp(1j * np.multiply.outer(ks, x)).sum(axis=1)
            for c in wanted[n]:
                out[c] = X
    return out


def mc_observables(
    config: SimConfig,
    k_list: Sequence[int],
    t_checkpoints: Sequence[float],
    threads: Optional[int] = None,
    min_trajectories: int = MIN_TRAJECTORIES,
) -> SweepTable:
    """Monte Carlo estimates of m_k, S_N(k; t) and E|Σe^{ikx}|² with standard errors."""
    if config.n_trajectories < min_trajectories:
        raise DomainError(f"need at least {min_trajectories} trajectories, got {config.n_trajectories}")
    if config.sqrt_dt > MAX_SQRT_DT:
        raise DomainError(f"sqrt_dt must be <= {MAX_SQRT_DT}, got {config.sqrt_dt}")
    steps = checkpoint_steps(config, t_checkpoints)
    worker = partial(_trajectory_sums, config, steps, list(k_list))
    sums = run_cells(worker, range(config.n_trajectories), threads, desc="trajectories")

    acc = Accumulator((len(steps), len(k_list)))
    for X in sums:
        acc.add(X)

    N = config.N
    # m_k averages e^{-ikx}: the conjugate of X / N
    m = np.conj(acc.mean()) / N
    m_err = acc.re_stderr() / N
    sff = acc.covariance()
    sff_err = acc.abs2_stderr()
    abs2 = acc.abs2_mean()
    rows = []
    for j, k in enumerate(k_list):
        for c, s in enumerate(steps):
            t = s * config.time_per_step
            rows.append(
                (k, t, float(m[c, j].real), float(m[c, j].imag), float(m_err[c, j]),
                 float(sff[c, j]), float(sff_err[c, j]), float(abs2[c, j]))
            )
    header = ["k", "t", "m_re", "m_im", "m_stderr", "sff", "sff_stderr", "abs2_mean"]
    return SweepTable.from_rows(header, rows, seed=config.seed, extra={"N": N, "n_trajectories": acc.n})


def decomposition_residuals(table: SweepTable, N: int, n: int) -> List[float]:
    """
    abs2_mean - ((n-1)/n·Ŝ + |N m̂|²) per row.

    Zero up to accumulation rounding; the (n-1)/n factor undoes the unbiased divisor.
    """
    out = []
    for row in zip(table.column("sff"), table.column("m_re"), table.column("m_im"), table.column("abs2_mean")):
        sff, m_re, m_im, abs2 = row
        out.append(abs2 - ((n - 1) / n * sff + N * N * (m_re * m_re + m_im * m_im)))
    return out
