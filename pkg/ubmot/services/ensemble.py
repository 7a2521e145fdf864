"""
Cyclic Pólya ensemble structure of the identity-start Brownian motion.

Sw(s) = q^((s-c)^2) with c = (N-1)/2 is the spherical transform of the weight.
The correlation kernel is a geometric sum plus a bilateral double sum whose
l-range is truncated where q^((l-c)^2) has decayed below the tail tolerance.
"""
import logging
import math
from typing import Callable, List, Optional, Sequence

import numpy as np
from scipy.special import gammaln

from ubmot.schemas.ensemble import EnsembleParams, KernelCoeffs
from ubmot.services.specfun import pochhammer_signed, theta
from ubmot.utils.errors import ConvergenceError, DomainError, WindowTooSmallError

logger = logging.getLogger(__name__)

TAIL_TOL = 1e-16
_MAX_WINDOW = 100_000


def spherical_weight(params: EnsembleParams, s):
    """Fourier coefficient of the weight at index s (scalar or array)."""
    s = np.asarray(s, dtype=float)
    out = np.exp((s - params.center) ** 2 * params.log_q)
    return out if out.ndim else float(out)


def weight_series(params: EnsembleParams, x, tol: float = TAIL_TOL):
    """w(e^{ix}) = Σ_s q^((s-c)^2) e^{-isx}, truncated once the Gaussian factor drops below tol."""
    if params.t <= 0:
        raise DomainError("the weight is a point mass at t = 0")
    half = math.ceil(math.sqrt(-math.log(tol) / -params.log_q)) + 2
    s = np.arange(math.floor(params.center) - half, math.ceil(params.center) + half + 1)
    x = np.asarray(x, dtype=float)
    vals = np.exp(1j * np.multiply.outer(x, -s)) @ spherical_weight(params, s)
    return vals if np.ndim(vals) else complex(vals)


def _certified_window(
    log_term: Callable[[int], float],
    lo_start: int,
    hi_start: int,
    tol: float,
    l_window: Optional[int],
) -> List[int]:
    """
    Indices l <= lo_start and l >= hi_start whose terms exceed tol times the
    largest term. With an explicit window the first shell outside it must
    already be below tol.
    """
    if l_window is not None:
        if l_window < 1:
            raise DomainError(f"l_window must be positive, got {l_window}")
        kept = list(range(lo_start - l_window + 1, lo_start + 1)) + list(range(hi_start, hi_start + l_window))
        logs = [log_term(l) for l in kept]
        peak = max(logs) if logs else -math.inf
        shell = max(log_term(lo_start - l_window), log_term(hi_start + l_window))
        bound = math.exp(shell - peak) if peak > -math.inf else 0.0
        if bound > tol:
            raise WindowTooSmallError(f"window {l_window} leaves a tail of relative size {bound:.2e}", bound)
        return sorted(kept)

    kept = []
    peak = -math.inf
    for direction, start in ((-1, lo_start), (1, hi_start)):
        prev = math.inf
        l = start
        for _ in range(_MAX_WINDOW):
            cur = log_term(l)
            peak = max(peak, cur)
            # stop once terms are decreasing and below tolerance; the last one certifies the tail
            if cur < peak + math.log(tol) and cur <= prev:
                break
            kept.append(l)
            prev = cur
            l += direction
        else:
            raise ConvergenceError(f"l-window did not close within {_MAX_WINDOW} terms")
    return sorted(kept)


def kernel_coeffs(params: EnsembleParams, tol: float = TAIL_TOL, l_window: Optional[int] = None) -> KernelCoeffs:
    """a_j for j in 0..N-1 and the retained b_l for l outside 0..N-1."""
    if params.t <= 0:
        raise DomainError("the kernel is singular at t = 0 (all angles at zero)")
    N, c, log_q = params.N, params.center, params.log_q
    j = np.arange(N)
    log_a = -((j - c) ** 2) * log_q - gammaln(N - j) - gammaln(j + 1)
    a = np.where(j % 2 == 1, -1.0, 1.0) * np.exp(log_a)

    def log_b(l: int) -> float:
        return pochhammer_signed(-l, N).log_abs + (l - c) ** 2 * log_q

    ls = _certified_window(log_b, -1, N, tol, l_window)
    b = {}
    for l in ls:
        p = pochhammer_signed(-l, N)
        b[l] = p.sign * math.exp(p.log_abs + (l - c) ** 2 * log_q)
    logger.debug(f"kernel window for N={N}, t={params.t}: l in [{ls[0]}, {ls[-1]}], {len(ls)} terms")
    return KernelCoeffs(params=params, a=a, b=b, l_min=ls[0], l_max=ls[-1], tail_bound=tol)


def _double_sum(coeffs: KernelCoeffs, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Σ_j Σ_l a_j b_l e^{i(xj - yl)}/(j - l) for paired arrays x, y."""
    N = coeffs.params.N
    j = np.arange(N)
    ls = coeffs.l_values
    inv = 1.0 / np.subtract.outer(j, ls).astype(float)
    left = coeffs.a * np.exp(1j * np.multiply.outer(x, j))  # (P, N)
    right = coeffs.b_values * np.exp(-1j * np.multiply.outer(y, ls))  # (P, L)
    return np.einsum("pj,jl,pl->p", left, inv, right)


def kernel(params: EnsembleParams, x, y, coeffs: Optional[KernelCoeffs] = None):
    """
    Correlation kernel K_N(x, y), normalized so that ∫ K_N(x, x) dx = N.

    The geometric part Σ_{l<N} e^{il(x-y)} is summed directly, which also
    covers the diagonal without a vanishing denominator.
    """
    coeffs = coeffs or kernel_coeffs(params)
    x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    shape = x.shape
    xf, yf = x.ravel(), y.ravel()
    d = xf - yf
    geometric = np.exp(1j * np.multiply.outer(d, np.arange(params.N))).sum(axis=1)
    out = (geometric + _double_sum(coeffs, xf, yf)) / (2.0 * math.pi)
    out = out.reshape(shape)
    return out if out.ndim else complex(out)


def density_finite_N(params: EnsembleParams, x, coeffs: Optional[KernelCoeffs] = None):
    """ρ_N(x; t) = K_N(x, x); integrates to N over (-π, π]."""
    coeffs = coeffs or kernel_coeffs(params)
    x = np.asarray(x, dtype=float)
    xf = x.ravel()
    N = params.N
    j = np.arange(N)
    ls = coeffs.l_values
    diff = np.subtract.outer(j, ls).astype(float)
    coef = coeffs.a[:, None] * coeffs.b_values[None, :] / diff
    # the imaginary parts cancel because the density is even
    vals = N + np.einsum("jl,pjl->p", coef, np.cos(np.multiply.outer(xf, diff)))
    out = (vals / (2.0 * math.pi)).reshape(x.shape)
    return out if out.ndim else float(out)


def biorth_P(params: EnsembleParams, j: int, z):
    """P_j(z) = Σ_{k<=j} (-z)^k / ((j-k)! k! Sw(k))."""
    if not 0 <= j < params.N:
        raise DomainError(f"index j={j} outside 0..{params.N - 1}")
    k = np.arange(j + 1)
    log_c = -gammaln(j - k + 1) - gammaln(k + 1) - ((k - params.center) ** 2) * params.log_q
    coef = np.exp(log_c) * np.where(k % 2 == 1, -1.0, 1.0)
    z = np.asarray(z, dtype=complex)
    out = np.power.outer(z, k) @ coef
    return out if np.ndim(out) else complex(out)


def biorth_Q(params: EnsembleParams, j: int, z, l_window: Optional[int] = None, tol: float = TAIL_TOL):
    """Q_j(z) = Σ_{l not in 0..j-1} (-l)_j Sw(l) z^{-l}, truncated with a certified tail."""
    if not 0 <= j < params.N:
        raise DomainError(f"index j={j} outside 0..{params.N - 1}")
    if params.t <= 0:
        raise DomainError("Q_j diverges at t = 0")
    c, log_q = params.center, params.log_q

    def log_term(l: int) -> float:
        return pochhammer_signed(-l, j).log_abs + (l - c) ** 2 * log_q

    ls = _certified_window(log_term, -1, j, tol, l_window)
    coef = []
    for l in ls:
        p = pochhammer_signed(-l, j)
        coef.append(p.sign * math.exp(p.log_abs + (l - c) ** 2 * log_q) if p.sign else 0.0)
    z = np.asarray(z, dtype=complex)
    out = np.power.outer(z, -np.asarray(ls, dtype=float)) @ np.asarray(coef)
    return out if np.ndim(out) else complex(out)


def biorth_kernel(params: EnsembleParams, x: float, y: float) -> complex:
    """(1/2π) Σ_{j<N} P_j(e^{ix}) Q_j(e^{iy}); equal to kernel(x, y)."""
    z1, z2 = np.exp(1j * x), np.exp(1j * y)
    total = sum(biorth_P(params, j, z1) * biorth_Q(params, j, z2) for j in range(params.N))
    return complex(total) / (2.0 * math.pi)


def circle_mean(values_fn: Callable[[np.ndarray], np.ndarray], n_points: int) -> complex:
    """Uniform trapezoid rule for (1/2π)∮ f(e^{iθ}) dθ."""
    theta_grid = 2.0 * math.pi * np.arange(n_points) / n_points - math.pi
    return complex(np.mean(values_fn(theta_grid)))


def biorth_pairing(params: EnsembleParams, a: int, b: int, l_window: int = 64) -> complex:
    """(1/2π)∮ P_a Q_b dθ; equals δ_ab. The trapezoid is exact for 4(N + l_window) points."""
    n_points = 4 * (params.N + l_window)
    return circle_mean(
        lambda th: biorth_P(params, a, np.exp(1j * th)) * biorth_Q(params, b, np.exp(1j * th), l_window=l_window),
        n_points,
    )


def pdf_identity_start(params: EnsembleParams, x: Sequence[float]) -> float:
    """
    Joint eigen-angle density for N <= 3, normalized to 1 on [-π, π]^N.

    p = q^(-N(N²-1)/12) / ((2π)^N Π_{l<=N} l!) Π_{j<k} sin((x_k - x_j)/2)
        × det[(-1)^(k-1) θ_κ^(k-1)(x_j/2; q)], κ = 2 for even N, 3 for odd N.
    """
    N = params.N
    if N > 3:
        raise DomainError(f"the closed-form PDF is only used for N <= 3, got {N}")
    if params.t <= 0:
        raise DomainError("the PDF is a point mass at t = 0")
    x = np.asarray(x, dtype=float)
    if x.shape != (N,):
        raise DomainError(f"expected {N} angles, got shape {x.shape}")
    q = params.q
    kind = 2 if N % 2 == 0 else 3
    mat = np.empty((N, N))
    for col in range(N):
        mat[:, col] = (-1) ** col * np.asarray(theta(kind, x / 2.0, q, deriv_order=col))
    vandermonde = 1.0
    for j in range(N):
        for k in range(j + 1, N):
            vandermonde *= math.sin((x[k] - x[j]) / 2.0)
    log_pref = -N * (N * N - 1) / 12.0 * params.log_q - N * math.log(2 * math.pi)
    log_pref -= sum(math.lgamma(l + 1) for l in range(1, N + 1))
    return math.exp(log_pref) * vandermonde * float(np.linalg.det(mat))
