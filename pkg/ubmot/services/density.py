"""
Limiting spectral density ρ(x; t), normalized so that (1/2π)∫ρ dx = 1.

The Herglotz transform H solves ((H-1)/(H+1)) e^{tH/2} = w and ρ = Re H on
|w| = 1. Roots are traced by Newton continuation in x from exactly known
anchors: H = μ_p at x = 0, and at x = π either H = 0 (t <= 4) or H = μ_r (t > 4).
"""
import logging
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import bisect
from tenacity import Retrying, retry_if_exception_type, stop_after_attempt

from ubmot.schemas.density import DensityMethod, DensityProfile
from ubmot.schemas.ensemble import EnsembleParams
from ubmot.services.ensemble import density_finite_N
from ubmot.services.specfun import decay_exponent, laguerre_log
from ubmot.utils.errors import ConvergenceError, DomainError

logger = logging.getLogger(__name__)

NEWTON_TOL = 1e-13
NEWTON_MAX_ITER = 80
CLAMP_TOL = 1e-8
X_STEP = 0.02
CUSP_EXPONENT = 1.0 / 3.0
DIP_EXPONENT_AT_4 = 6.0 / 11.0


def support_edge(t: float) -> float:
    """L₀(t) = ½√(t(4-t)) + arccos(1 - t/2) for 0 < t < 4."""
    if not 0.0 < t < 4.0:
        raise DomainError(f"the support edge is defined for 0 < t < 4, got {t}")
    return 0.5 * math.sqrt(t * (4.0 - t)) + math.acos(1.0 - t / 2.0)


def edge_amplitude(t: float) -> float:
    """A(t) = (1/π)√(2/(t^{3/2}(4-t)^{1/2})); near the edge ρ(L₀ - x) ≈ 2πA(t)√x."""
    if not 0.0 < t < 4.0:
        raise DomainError(f"the edge amplitude is defined for 0 < t < 4, got {t}")
    return math.sqrt(2.0 / (t ** 1.5 * math.sqrt(4.0 - t))) / math.pi


def _rate(mu: float) -> float:
    """(2/μ) log|(1+μ)/(1-μ)|."""
    return (2.0 / mu) * math.log(abs((1.0 + mu) / (1.0 - mu)))


def critical_mus(t: float) -> Tuple[Optional[float], float]:
    """
    (μ_r, μ_p): the density at x = π (only for t > 4) and at x = 0.

    Both solve t = (2/μ) log|(1+μ)/(1-μ)|, μ_r on (0, 1) and μ_p on (1, ∞).
    """
    if t <= 0:
        raise DomainError(f"t must be positive, got {t}")
    mu_r = None
    if t > 4.0:
        lo, hi = 1e-12, 1.0 - 1e-16
        if _rate(hi) <= t:
            # closer to 1 than double precision resolves
            mu_r = hi
        else:
            mu_r = bisect(lambda m: _rate(m) - t, lo, hi, xtol=1e-16, rtol=4 * np.finfo(float).eps, maxiter=400)
    lo = 1.0 + 1e-15
    if _rate(lo) <= t:
        return mu_r, lo
    hi = 2.0 + 4.0 / math.sqrt(t)
    while _rate(hi) > t:
        hi *= 2.0
    mu_p = bisect(lambda m: _rate(m) - t, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=400)
    return mu_r, mu_p


def _residual(H: complex, t: float, w: complex) -> complex:
    # e^{tH/2} is divided out so large t stays finite on Re H >= 0
    return (H - 1.0) - w * (H + 1.0) * np.exp(-t * H / 2.0)


def _residual_prime(H: complex, t: float, w: complex) -> complex:
    return 1.0 - w * np.exp(-t * H / 2.0) * (1.0 - t * (H + 1.0) / 2.0)


def _newton(H: complex, t: float, w: complex) -> complex:
    res = _residual(H, t, w)
    for _ in range(NEWTON_MAX_ITER):
        if abs(res) < NEWTON_TOL * max(1.0, abs(H)):
            return H
        d = _residual_prime(H, t, w)
        if d == 0:
            break
        H = H - res / d
        if H.real < 0:
            H = complex(-H.real, H.imag)
        res = _residual(H, t, w)
    if abs(res) < NEWTON_TOL * max(1.0, abs(H)):
        return H
    raise ConvergenceError(f"Newton did not converge at t={t}, w={w}", last_residual=float(abs(res)))


def _trace(t: float, start_x: float, start_H: complex, targets: Sequence[float], steps_per_unit: float) -> List[complex]:
    """Continue the root from start_x through the (monotone) target angles."""
    out = []
    x, H = start_x, complex(start_H)
    for target in targets:
        n = max(1, int(math.ceil(abs(target - x) * steps_per_unit)))
        for xi in np.linspace(x, target, n + 1)[1:]:
            H = _newton(H, t, complex(math.cos(xi), math.sin(xi)))
        x = target
        out.append(H)
    return out


def _finalize(H: complex) -> complex:
    if H.real < 0:
        H = complex(-H.real, H.imag)
    if abs(H.real) < CLAMP_TOL:
        H = complex(0.0, H.imag)
    return H


def herglotz_curve(t: float, xs: Sequence[float]) -> np.ndarray:
    """H_t(e^{ix}) on a set of angles, using one continuation pass per side of the support."""
    if t <= 0:
        raise DomainError(f"t must be positive, got {t}")
    xs = np.asarray(xs, dtype=float)
    ax = np.abs(np.mod(xs + math.pi, 2 * math.pi) - math.pi)
    order = np.argsort(ax)
    sorted_x = ax[order]
    mu_r, mu_p = critical_mus(t)
    edge = support_edge(t) if t < 4.0 else math.pi
    inner = [x for x in sorted_x if x < edge]
    outer = [x for x in sorted_x if x >= edge][::-1]

    result = {}
    for attempt in Retrying(
        stop=stop_after_attempt(3), retry=retry_if_exception_type(ConvergenceError), reraise=True
    ):
        with attempt:
            density = (1.0 / X_STEP) * 2 ** (attempt.retry_state.attempt_number - 1)
            if attempt.retry_state.attempt_number > 1:
                logger.warning(f"⚠️ retrying Herglotz continuation at t={t} with {density:.0f} steps per radian")
            for x, H in zip(inner, _trace(t, 0.0, complex(mu_p), inner, density)):
                result[x] = _finalize(H)
            anchor = complex(mu_r) if mu_r is not None else 0j
            for x, H in zip(outer, _trace(t, math.pi, anchor, outer, density)):
                result[x] = _finalize(H)

    values = np.array([result[x] for x in sorted_x], dtype=complex)
    out = np.empty_like(values)
    out[order] = values
    # H(conj w) = conj H(w)
    neg = np.sin(xs) < 0
    out[neg] = np.conj(out[neg])
    return out


def herglotz_solve(t: float, x: float) -> complex:
    """The root of ((H-1)/(H+1)) e^{tH/2} = e^{ix} with Re H >= 0."""
    return complex(herglotz_curve(t, [x])[0])


def herglotz_disk(t: float, w: complex, steps: int = 200) -> complex:
    """H_t(w) inside the unit disk by radial continuation from H(0) = 1."""
    if abs(w) >= 1.0:
        raise DomainError(f"|w| must be < 1, got {abs(w)}")
    H = 1.0 + 0j
    for s in np.linspace(0.0, 1.0, steps + 1)[1:]:
        H = _newton(H, t, s * w)
    return H


def burgers_residual(t: float, w: complex, h: float = 1e-4) -> float:
    """|∂_t G + w G ∂_w G| for G(t, w) = H_{2t}(w), by central differences."""
    G = herglotz_disk(2 * t, w)
    dt = (herglotz_disk(2 * (t + h), w) - herglotz_disk(2 * (t - h), w)) / (2 * h)
    dw = (herglotz_disk(2 * t, w + h) - herglotz_disk(2 * t, w - h)) / (2 * h)
    return float(abs(dt + w * G * dw))


def fourier_cutoff(t: float, tol: float = 1e-14) -> int:
    return int(math.ceil(2.0 * math.log(1.0 / tol) / decay_exponent(t)))


def _limit_moments(t: float, K: int) -> np.ndarray:
    out = np.zeros(K)
    for k in range(1, K + 1):
        lag = laguerre_log(k - 1, 1.0, k * t)
        if lag.sign:
            out[k - 1] = lag.sign * math.exp(lag.log_abs - k * t / 2.0 - math.log(k))
    return out


def density_limit(t: float, x, method: DensityMethod = DensityMethod.HERGLOTZ, tol: float = 1e-14):
    """ρ(x; t) by the Herglotz equation or, for t > 4, by its Fourier series."""
    method = DensityMethod(method)
    x_arr = np.asarray(x, dtype=float)
    if method is DensityMethod.HERGLOTZ:
        out = herglotz_curve(t, x_arr.ravel()).real.reshape(x_arr.shape)
    elif method is DensityMethod.FOURIER:
        if t <= 4.0:
            raise DomainError(f"the Fourier series converges exponentially only for t > 4, got {t}")
        K = fourier_cutoff(t, tol)
        m = _limit_moments(t, K)
        ks = np.arange(1, K + 1)
        out = 1.0 + 2.0 * (np.cos(np.multiply.outer(x_arr, ks)) @ m)
    else:
        raise DomainError("the finite-N density needs N; use density_profile")
    return out if out.ndim else float(out)


def density_profile(
    t: float,
    grid: Sequence[float],
    method: DensityMethod = DensityMethod.HERGLOTZ,
    N: Optional[int] = None,
    tol: float = 1e-14,
) -> DensityProfile:
    method = DensityMethod(method)
    grid = [float(x) for x in grid]
    if method is DensityMethod.FINITE:
        if N is None:
            raise DomainError("the finite-N density needs N")
        # rescaled to the same normalization as the limit
        values = (2 * math.pi / N) * np.asarray(density_finite_N(EnsembleParams.of(N, t), grid))
    else:
        values = np.asarray(density_limit(t, grid, method, tol))
    values = np.where(np.abs(values) < 1e-10, 0.0, values)
    return DensityProfile(
        t=t,
        grid=grid,
        values=values.tolist(),
        method=method,
        support_edge=support_edge(t) if t < 4.0 else math.pi,
        edge_amplitude=edge_amplitude(t) if t < 4.0 else None,
        N=N,
    )


def edge_profile_ratios(t: float, offsets: Sequence[float]) -> np.ndarray:
    """ρ(L₀ - x) / (2π√x); tends to A(t) as x -> 0."""
    L0 = support_edge(t)
    offsets = np.asarray(offsets, dtype=float)
    rho = density_limit(t, L0 - offsets)
    return np.asarray(rho) / (2 * math.pi * np.sqrt(offsets))


def cusp_exponent_fit(offsets: Sequence[float]) -> float:
    """Slope of log ρ(π - x; 4) against log x; close to 1/3."""
    offsets = np.asarray(offsets, dtype=float)
    rho = np.asarray(density_limit(4.0, math.pi - offsets))
    return float(np.polyfit(np.log(offsets), np.log(rho), 1)[0])


def dip_wavenumber(t: float, N: int) -> float:
    """Wavenumber where the slope and ramp terms balance."""
    if t <= 0 or N < 1:
        raise DomainError(f"invalid arguments t={t}, N={N}")
    if t < 4.0:
        return math.sqrt(edge_amplitude(t) * N)
    if t == 4.0:
        return N ** DIP_EXPONENT_AT_4
    return math.log(N) / decay_exponent(t)
