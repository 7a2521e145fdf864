"""
Moments m_k^(N)(t) of the mean eigen-angle density.

Several algebraically equivalent closed forms are implemented so they can be
checked against one another. The canonical prefactor is q^(k² + k(N-1)); the
INTRO form carries q^(k(N+k+1)) and is kept only as a discrepancy check.
"""
import logging
import math
from typing import Iterable, List, Sequence, Tuple

import numpy as np
from scipy.special import gammaln

from ubmot.schemas.ensemble import EnsembleParams
from ubmot.schemas.moments import AsymptoticMoment, MomentForm, MomentValue, Regime
from ubmot.services import oracles
from ubmot.services.density import edge_amplitude, support_edge
from ubmot.services.specfun import (
    decay_exponent,
    hyp2f1_coeffs,
    hyp2f1_recurrence,
    laguerre_log,
    pochhammer_signed,
)
from ubmot.utils.errors import DegeneratePointsError, DomainError, StabilityError

logger = logging.getLogger(__name__)

# series forms are rejected above this condition estimate (about 6 digits lost)
MAX_CONDITION = 1e6
MAX_REL_ERR = 1e-10
CRITICAL_TOL = 1e-6
CRITICAL_EXPONENT = -4.0 / 3.0
A8_FIRST_MAX_N = 30
# relative error reported for sums redone in extended precision
EXTENDED_REL_ERR = 1e-15
_EPS = np.finfo(float).eps


def _check_k(k: float, integer: bool = True):
    if integer and (k < 1 or not float(k).is_integer()):
        raise DomainError(f"moment index must be a positive integer, got {k}")
    if k <= 0:
        raise DomainError(f"moment index must be positive, got {k}")


def _digits_lost(cond: float) -> float:
    return math.log10(cond) if cond > 1.0 else 0.0


def _series(
    a: int, b: float, c: float, z: float, log_pref: float, label: str, extended: bool
) -> Tuple[float, float, bool]:
    """(value, relative error, resummed) for e^log_pref · 2F1(a, b; c; z)."""
    coeffs = hyp2f1_coeffs(a, b, c, z)
    cond = coeffs.condition
    if cond <= MAX_CONDITION:
        return math.exp(log_pref) * math.fsum(coeffs.terms), cond * _EPS, False
    if not extended:
        raise StabilityError(f"{label}: series condition {cond:.2e} exceeds {MAX_CONDITION:.0e}", err_estimate=cond * _EPS)
    logger.debug(f"{label}: condition {cond:.2e}, resumming in extended precision")
    value = oracles.hyp2f1_extended(a, b, c, z, log_pref=log_pref, digits_lost=_digits_lost(cond))
    return value, EXTENDED_REL_ERR, True


def _a8_first(p: EnsembleParams, k: int, extended: bool) -> Tuple[float, float, bool]:
    N = p.N
    if N > A8_FIRST_MAX_N:
        raise DomainError(f"the first A8 form cancels catastrophically; restricted to N <= {A8_FIRST_MAX_N}")
    log_pref = (k * k + k * (N - 1)) * p.log_q + math.lgamma(N + k) - math.lgamma(k + 1) - math.lgamma(N + 1)
    z = math.exp(-2 * k * p.log_q)
    return _series(1 - N, 1 - k, -(k - 1 + N), z, log_pref, "A8 first form", extended)


def _a8_second(p: EnsembleParams, k: int, extended: bool, intro: bool = False) -> Tuple[float, float, bool]:
    N = p.N
    exponent = k * (N + k + 1) if intro else k * k + k * (N - 1)
    z = -math.expm1(-2 * k * p.log_q)
    return _series(1 - N, 1 - k, 2, z, exponent * p.log_q, "A8 second form", extended)


def _a8a(p: EnsembleParams, k: int, extended: bool) -> Tuple[float, float, bool]:
    N = p.N
    z = -math.expm1(2 * k * p.log_q)
    return _series(1 - N, 1 + k, 2, z, (k * k - k * (N - 1)) * p.log_q, "A8a form", extended)


def moment_jacobi_signed(p: EnsembleParams, k: float):
    """
    (1/N) q^(k²-k(N-1)) P_{N-1}^(1, k-N)(2q^(2k) - 1) for real k > 0.

    The Jacobi polynomial with first parameter 1 equals N 2F1(1-N, k+1; 2; 1-q^(2k)),
    which is what the recurrence evaluates. Returns (log|m|, sign, err_estimate).
    """
    N = p.N
    z = -math.expm1(2 * k * p.log_q)
    hyp, err = hyp2f1_recurrence(N - 1, k + 1, 2.0, z)
    log_abs = (k * k - k * (N - 1)) * p.log_q + hyp.log_abs
    return log_abs, hyp.sign, err


def _a8b(p: EnsembleParams, k: float, extended: bool) -> Tuple[float, float, bool]:
    log_abs, sign, err = moment_jacobi_signed(p, k)
    if err <= MAX_REL_ERR:
        return (sign * math.exp(log_abs) if sign else 0.0), err, False
    if not extended:
        raise StabilityError(
            f"Jacobi recurrence unstable at N={p.N}, k={k}, t={p.t} (rel err≈{err:.2e})", err_estimate=err
        )
    logger.debug(f"Jacobi recurrence unstable at N={p.N}, k={k}, t={p.t}; using extended precision")
    return oracles.moment_extended(p.N, k, p.t), EXTENDED_REL_ERR, True


def _m1_sum(p: EnsembleParams, k: int, extended: bool) -> Tuple[float, float, bool]:
    N = p.N
    upper = min(k, N)
    r = np.arange(upper)
    log_terms = gammaln(N + k - r) - gammaln(k - r) - gammaln(N - r) - gammaln(r + 1) - 2 * k * r * p.log_q
    signs = np.where(r % 2 == 1, -1.0, 1.0)
    peak = float(log_terms.max())
    scaled = (signs * np.exp(log_terms - peak)).tolist()
    total = math.fsum(scaled)
    mass = math.fsum(abs(x) for x in scaled)
    cond = mass / abs(total) if total else math.inf
    if cond > MAX_CONDITION:
        if not extended:
            raise StabilityError(f"m1 sum condition {cond:.2e} exceeds {MAX_CONDITION:.0e}", err_estimate=cond * _EPS)
        return oracles.m1_sum_extended(N, k, p.t, digits_lost=_digits_lost(cond)), EXTENDED_REL_ERR, True
    log_pref = (k * k + (N - 1) * k) * p.log_q - math.log(k * N) + peak
    return math.exp(log_pref) * total, cond * _EPS, False


def hook_average(p: EnsembleParams, k: int, r: int) -> float:
    """Average of the Schur polynomial for the hook (k-r, 1^r); requires r < min(k, N)."""
    N = p.N
    if not 0 <= r < k or r + 1 > N:
        raise DomainError(f"hook (k-r, 1^r) needs 0 <= r < k and r+1 <= N (k={k}, r={r}, N={N})")
    log_val = (k * k + k * (N - 1) - 2 * k * r) * p.log_q
    log_val += math.lgamma(N + k) - math.lgamma(N) - math.lgamma(k + 1) - math.lgamma(r + 1)
    sign = -1 if r % 2 else 1
    for part in (pochhammer_signed(1 - k, r), pochhammer_signed(1 - N, r)):
        log_val += part.log_abs
        sign *= part.sign
    denom = pochhammer_signed(-(k - 1 + N), r)
    log_val -= denom.log_abs
    sign *= denom.sign
    return sign * math.exp(log_val)


def _schur_a4(p: EnsembleParams, k: int, extended: bool) -> Tuple[float, float, bool]:
    terms = [(-1) ** r * hook_average(p, k, r) for r in range(min(k, p.N))]
    total = math.fsum(terms)
    cond = math.fsum(abs(x) for x in terms) / abs(total) if total else math.inf
    if cond > MAX_CONDITION:
        if not extended:
            raise StabilityError(f"hook sum condition {cond:.2e} exceeds {MAX_CONDITION:.0e}", err_estimate=cond * _EPS)
        return oracles.hook_sum_extended(p.N, k, p.t, digits_lost=_digits_lost(cond)), EXTENDED_REL_ERR, True
    return total / p.N, cond * _EPS, False


def moment_limit(k: int, t: float) -> float:
    """m_k^(∞)(t) = e^(-kt/2) L_{k-1}^(1)(kt) / k."""
    _check_k(k)
    if t < 0:
        raise DomainError(f"time must be nonnegative, got {t}")
    k = int(k)
    lag = laguerre_log(k - 1, 1.0, k * t)
    if lag.sign == 0:
        return 0.0
    return lag.sign * math.exp(lag.log_abs - k * t / 2.0 - math.log(k))


def moment_finite_detail(
    params: EnsembleParams, k: float, form: MomentForm = MomentForm.A8b_JACOBI, extended: bool = False
) -> MomentValue:
    """
    m_k^(N)(t) in one closed form, with its relative error estimate.

    A form whose float evaluation would lose more than six digits raises
    StabilityError, unless extended is set, in which case the same sum is
    redone in extended precision and the method gains an "-extended" suffix.
    """
    form = MomentForm(form)
    _check_k(k, integer=form is not MomentForm.A8b_JACOBI)
    if form is not MomentForm.A8b_JACOBI:
        k = int(k)
    if params.t == 0 and form is not MomentForm.LIMIT_4_0b:
        return MomentValue(N=params.N, t=0.0, k=k, value=1.0, method=form.value)

    if form is MomentForm.A8_FIRST:
        value, err, resummed = _a8_first(params, k, extended)
    elif form is MomentForm.A8_SECOND:
        value, err, resummed = _a8_second(params, k, extended)
    elif form is MomentForm.INTRO_4_0c:
        value, err, resummed = _a8_second(params, k, extended, intro=True)
    elif form is MomentForm.A8a:
        value, err, resummed = _a8a(params, k, extended)
    elif form is MomentForm.A8b_JACOBI:
        value, err, resummed = _a8b(params, k, extended)
    elif form is MomentForm.M1_SUM:
        value, err, resummed = _m1_sum(params, k, extended)
    elif form is MomentForm.SCHUR_A4:
        value, err, resummed = _schur_a4(params, k, extended)
    else:
        return MomentValue(N=None, t=params.t, k=k, value=moment_limit(k, params.t), method=form.value)
    method = f"{form.value}-extended" if resummed else form.value
    return MomentValue(N=params.N, t=params.t, k=k, value=value, method=method, err_estimate=err)


def moment_finite(
    params: EnsembleParams, k: float, form: MomentForm = MomentForm.A8b_JACOBI, extended: bool = False
) -> float:
    """m_k^(N)(t) in the requested closed form."""
    return moment_finite_detail(params, k, form, extended).value


def moment_robust(params: EnsembleParams, k: float) -> MomentValue:
    """Jacobi form, falling back to extended precision when the recurrence is unstable."""
    return moment_finite_detail(params, k, MomentForm.A8b_JACOBI, extended=True)


# --- Schur functions ---


def _padded(kappa: Sequence[int], N: int) -> List[int]:
    kappa = [int(x) for x in kappa]
    if any(kappa[i] < kappa[i + 1] for i in range(len(kappa) - 1)) or (kappa and kappa[-1] < 0):
        raise DomainError(f"{kappa} is not a partition")
    if len(kappa) > N:
        raise DomainError(f"partition {kappa} has more than N={N} parts")
    return kappa + [0] * (N - len(kappa))


def hook(k: int, r: int) -> List[int]:
    return [k - r] + [1] * r


def schur_average(params: EnsembleParams, kappa: Sequence[int]) -> float:
    """
    ⟨S_κ⟩ = Π_{j<l} (l - j + κ_j - κ_l)/(l - j) · Π_j q^(κ_j² + (N - 2j + 1)κ_j), j from 1.
    """
    N = params.N
    kap = _padded(kappa, N)
    log_val = 0.0
    for j in range(N):
        for l in range(j + 1, N):
            log_val += math.log((l - j + kap[j] - kap[l]) / (l - j))
        log_val += (kap[j] ** 2 + (N - 2 * (j + 1) + 1) * kap[j]) * params.log_q
    return math.exp(log_val)


def schur_eval(z: Sequence[complex], kappa: Sequence[int]) -> complex:
    """S_κ(z) = det[z_i^(N-j+κ_j)] / det[z_i^(N-j)]."""
    z = np.asarray(z, dtype=complex)
    N = len(z)
    kap = _padded(kappa, N)
    gaps = np.abs(np.subtract.outer(z, z))[np.triu_indices(N, 1)]
    if gaps.size and gaps.min() < 1e-10:
        raise DegeneratePointsError(f"points coincide within {gaps.min():.1e}")
    base = np.array([N - 1 - j for j in range(N)])
    num = np.linalg.det(np.power.outer(z, base + np.array(kap)))
    den = np.linalg.det(np.power.outer(z, base))
    return complex(num / den)


def power_sum_via_hooks(z: Sequence[complex], k: int) -> complex:
    """Σ_r (-1)^r S_(k-r, 1^r)(z); equals Σ z_j^k."""
    N = len(z)
    return sum((-1) ** r * schur_eval(z, hook(k, r)) for r in range(min(k, N)))


# --- large-N asymptotics ---


def t_star(mu: float) -> float:
    """(2/μ) log|(1+μ)/(1-μ)|; +inf at μ = 1."""
    if mu <= 0:
        raise DomainError(f"mu must be positive, got {mu}")
    if mu == 1.0:
        return math.inf
    return (2.0 / mu) * math.log(abs((1.0 + mu) / (1.0 - mu)))


def phase_function(mu: float, t: float) -> Tuple[float, float, float]:
    """
    h(μ, λ) = μφ₊ + π + Arg((λe^{iφ₊} - 1)/(e^{iφ₊} - λ)), λ = e^{-μt/2}.

    The Arg term lies in [0, π] on the oscillatory region, which keeps h
    continuous and gives h ≈ π + μL₀(t) as μ -> 0. Returns (h, φ₊, u).
    """
    lam = math.exp(-mu * t / 2.0)
    u = ((mu - 1.0) * (1.0 + lam * lam) + 2.0 * lam * lam) / (2.0 * lam * mu)
    if abs(u) > 1.0:
        raise DomainError(f"|u| = {abs(u):.6f} > 1: (mu={mu}, t={t}) is outside the oscillatory region")
    phi = math.acos(u)
    e = complex(math.cos(phi), math.sin(phi))
    ratio = (lam * e - 1.0) / (e - lam)
    arg = math.atan2(ratio.imag, ratio.real)
    if arg < 0:
        arg += 2.0 * math.pi
    return mu * phi + math.pi + arg, phi, u


def moment_asymptotic(mu: float, t: float, N: int) -> AsymptoticMoment:
    """Leading large-N behavior of m_k^(N)(t) at k = μN."""
    if mu <= 0 or N < 1 or t < 0:
        raise DomainError(f"invalid asymptotic arguments mu={mu}, t={t}, N={N}")
    ts = t_star(mu)
    lam = math.exp(-mu * t / 2.0)

    if math.isfinite(ts) and abs(t - ts) < CRITICAL_TOL:
        return AsymptoticMoment(
            mu=mu, t=t, N=N, t_star=ts, envelope=math.nan, phase=math.nan,
            regime=Regime.CRITICAL, value=math.nan, decay_exponent=CRITICAL_EXPONENT,
        )
    if t > ts:
        if t <= 4.0:
            raise DomainError(f"no decay rate is known for t* < t <= 4 (mu={mu}, t={t}, t*={ts:.4f})")
        envelope = math.exp(-mu * N * decay_exponent(t) / 2.0)
        return AsymptoticMoment(
            mu=mu, t=t, N=N, t_star=ts, envelope=envelope, phase=math.nan,
            regime=Regime.EXPONENTIAL_DECAY, value=0.0,
        )

    h, _, _ = phase_function(mu, t)
    l2 = lam * lam
    disc = (1.0 - l2) * ((mu + 1.0) ** 2 * l2 - (mu - 1.0) ** 2)
    envelope = lam * math.sqrt(2.0 / (N * math.pi)) / (N * math.sqrt((1.0 - l2) * mu) * disc ** 0.25)
    phase = N * h + math.pi / 4.0
    sign = -1.0 if N % 2 == 0 else 1.0
    return AsymptoticMoment(
        mu=mu, t=t, N=N, t_star=ts, envelope=envelope, phase=phase,
        regime=Regime.OSCILLATORY, value=sign * envelope * math.cos(phase),
    )


def moment_slope_regime(k: int, N: int, t: float) -> float:
    """√π A(t) k^(-3/2) cos(k L₀(t) - 3π/4), valid for 10 <= k <= N/10 and t < 4."""
    if t >= 4.0 or t <= 0.0:
        raise DomainError(f"the slope regime needs 0 < t < 4, got {t}")
    if k < 10 or k > N / 10:
        raise DomainError(f"the slope regime needs 10 <= k <= N/10 (k={k}, N={N})")
    return math.sqrt(math.pi) * edge_amplitude(t) * k ** -1.5 * math.cos(k * support_edge(t) - 0.75 * math.pi)


def moment_critical_exponent(mu: float, N_values: Iterable[int]) -> Tuple[float, List[float]]:
    """Least-squares slope of log|m_{μN}^(N)(t*)| against log N."""
    ts = t_star(mu)
    Ns = list(N_values)
    mags = []
    for N in Ns:
        mags.append(abs(moment_robust(EnsembleParams.of(N, ts), mu * N).value))
    slope = float(np.polyfit(np.log(Ns), np.log(mags), 1)[0])
    logger.info(f"critical decay at mu={mu}: fitted exponent {slope:.3f}")
    return slope, mags
