"""
Spectral form factor S_N(k; t) = Cov(Σ e^{ikx_l}, Σ e^{-ikx_l}).

sff_exact evaluates the closed double sum in log space and falls back to an
extended-precision sum or to the integral representation
S = min(k, N) - k⁴ ∫₀^∞ τ m_k(t + τ)² dτ when cancellation is too strong.
"""
import logging
import math
import warnings
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import IntegrationWarning, quad
from scipy.optimize import bisect
from scipy.special import gammaln, logsumexp, roots_legendre

from ubmot.schemas.ensemble import EnsembleParams
from ubmot.schemas.moments import MomentForm
from ubmot.schemas.sff import SffRegime, SffValue
from ubmot.schemas.sweep import SweepTable
from ubmot.services import oracles
from ubmot.services.density import critical_mus, herglotz_curve, herglotz_solve, support_edge
from ubmot.services.ensemble import kernel, kernel_coeffs
from ubmot.services.moments import moment_finite_detail, moment_robust, t_star
from ubmot.services.specfun import laguerre_log
from ubmot.utils.errors import DomainError, QuadratureError, StabilityError

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10
EXTENDED_MAX_TERMS = 1024
SERIES_MOMENT_MAX_K = 30
_EPS = np.finfo(float).eps


def _leading(N: int, k: int) -> int:
    return min(k, N)


def _double_sum(params: EnsembleParams, k: int) -> Tuple[float, float]:
    """Closed double sum; returns (value, absolute error estimate)."""
    N, log_q = params.N, params.log_q
    upper = _leading(N, k)
    i = np.arange(upper)
    g = gammaln(N + k - i) - gammaln(N - i) - gammaln(i + 1) - gammaln(k - i) - 2 * k * i * log_q
    sign = np.where(i % 2 == 1, -1.0, 1.0)
    log_pref = (2 * k * k + 2 * k * (N - 1)) * log_q
    jj, ll = np.triu_indices(upper)
    logs = log_pref + g[jj] + g[ll] - 2.0 * np.log(np.abs(jj + ll - N - k + 1.0))
    # symmetric in (j, l): off-diagonal entries count twice
    weight = np.where(jj == ll, 1.0, 2.0)
    log_err = math.log(_EPS) + float(logsumexp(logs + np.log(weight) + np.log1p(np.abs(logs))))
    if log_err > 0.0:
        # terms this large would overflow or cancel completely
        return math.nan, math.exp(min(log_err, 700.0))
    terms = -sign[jj] * sign[ll] * weight * np.exp(logs)
    return upper + math.fsum(terms.tolist()), math.exp(log_err)


def _moment_for_integral(N: int, k: int, t: float) -> float:
    params = EnsembleParams.of(N, t)
    if k <= SERIES_MOMENT_MAX_K:
        try:
            return moment_finite_detail(params, k, MomentForm.A8_SECOND).value
        except StabilityError:
            pass
    return moment_robust(params, k).value


def _integral(params: EnsembleParams, k: int, tol: float) -> Tuple[float, float]:
    N, t = params.N, params.t
    rate = k * (abs(N - k) + 1) / N

    def integrand(u: float) -> float:
        if u <= 0.0:
            return 0.0
        tau = -math.log(u) / rate
        m = _moment_for_integral(N, k, t + tau)
        return tau * m * m / (rate * u)

    with warnings.catch_warnings():
        warnings.simplefilter("error", IntegrationWarning)
        try:
            value, abserr = quad(integrand, 0.0, 1.0, epsabs=tol / k ** 4, epsrel=tol, limit=1000)
        except IntegrationWarning as w:
            raise QuadratureError(f"quadrature for S_N(k={k}; t={t}) with N={N} did not converge: {w}") from w
    return _leading(N, k) - k ** 4 * value, k ** 4 * abserr


def sff_integral_form(params: EnsembleParams, k: int, tol: float = DEFAULT_TOL) -> float:
    """min(k, N) - k⁴ ∫₀^∞ τ m_k(t + τ)² dτ."""
    k = abs(int(k))
    if k == 0:
        return 0.0
    return _integral(params, k, tol)[0]


def sff_exact_detail(params: EnsembleParams, k: int, tol: float = DEFAULT_TOL) -> SffValue:
    k = abs(int(k))
    common = dict(k_or_mu=k, t=params.t, regime=SffRegime.FINITE_N, N=params.N)
    if k == 0:
        return SffValue(value=0.0, method="trivial", **common)
    value, err = _double_sum(params, k)
    if err <= tol:
        return SffValue(value=value, method="double-sum", err_estimate=err, **common)
    logger.debug(f"double sum too cancellative for N={params.N}, k={k}, t={params.t} (err≈{err:.1e})")
    if _leading(params.N, k) <= EXTENDED_MAX_TERMS:
        value = oracles.sff_double_sum_extended(params.N, k, params.t)
        return SffValue(value=value, method="double-sum-extended", err_estimate=1e-14 * max(1.0, k), **common)
    value, err = _integral(params, k, tol)
    return SffValue(value=value, method="integral", err_estimate=err, **common)


def sff_exact(params: EnsembleParams, k: int, tol: float = DEFAULT_TOL) -> float:
    """S_N(k; t) for integer k; even in k."""
    return sff_exact_detail(params, k, tol).value


def sff_k2_closed_form(N: int, t: float) -> float:
    """S_N(2; t) = 2 - e^{-2t}(N² e^{-2t/N} - 2(N² - 1) + N² e^{2t/N})."""
    n2 = N * N
    return 2.0 - math.exp(-2 * t) * (n2 * math.exp(-2 * t / N) - 2 * (n2 - 1) + n2 * math.exp(2 * t / N))


# --- fixed-k limit ---


def sff_fixed_k_limit(k: int, t: float) -> float:
    """k - e^{-kt} Σ_{s<k} (k - s) (L_s^(-1)(kt))²."""
    if k < 1 or t < 0:
        raise DomainError(f"invalid arguments k={k}, t={t}")
    terms = []
    for s in range(k):
        lag = laguerre_log(s, -1.0, k * t)
        if lag.sign:
            terms.append((k - s) * math.exp(2 * lag.log_abs - k * t))
    return k - math.fsum(terms)


def sff_fixed_k_quadrature(k: int, t: float, tol: float = DEFAULT_TOL) -> float:
    """
    k - e^{-kt} ∫₀^∞ s e^{-s} (L_{k-1}^(1)(kt + s))² ds by adaptive quadrature.

    Independent of the finite Laguerre sum in sff_fixed_k_limit, so the two
    check each other.
    """
    if k < 1 or t < 0:
        raise DomainError(f"invalid arguments k={k}, t={t}")

    def integrand(s: float) -> float:
        if s <= 0.0:
            return 0.0
        lag = laguerre_log(k - 1, 1.0, k * t + s)
        if not lag.sign:
            return 0.0
        return math.exp(math.log(s) - s - k * t + 2.0 * lag.log_abs)

    # mass sits near s = 2k
    split = 2.0 * k + 1.0
    with warnings.catch_warnings():
        warnings.simplefilter("error", IntegrationWarning)
        try:
            head, _ = quad(integrand, 0.0, split, epsabs=tol, epsrel=tol, limit=500)
            tail, _ = quad(integrand, split, math.inf, epsabs=tol, epsrel=tol, limit=500)
        except IntegrationWarning as w:
            raise QuadratureError(f"fixed-k quadrature for k={k}, t={t} did not converge: {w}") from w
    return k - (head + tail)


# --- scaled limit ---


def _gauss_legendre(f, a: float, b: float, tol: float, n0: int = 32, n_max: int = 4096) -> Tuple[float, float]:
    """Fixed-order Gauss-Legendre with the error estimated by doubling the order."""

    def rule(n: int) -> float:
        x, w = roots_legendre(n)
        mid, half = (a + b) / 2.0, (b - a) / 2.0
        return half * float(np.dot(w, f(mid + half * x)))

    n = n0
    prev = rule(n)
    while n < n_max:
        n *= 2
        cur = rule(n)
        err = abs(cur - prev)
        if err <= tol * max(1.0, abs(cur)):
            return cur, err
        prev = cur
    raise QuadratureError(f"Gauss-Legendre did not reach {tol:.1e} by order {n_max}", last_residual=err)


def _singular_integral(mu: float, t: float, D: float, log_e_star: float, tol: float) -> Tuple[float, float]:
    """
    ∫₀^D s e^{-μs} / (1 - e^{-μ(s+t)})^{3/2} / √(e^{-μ(s+t)} - e^{-μt*}) ds with D = t* - t.

    s = D sin²θ removes both the inverse square root at s = D and the s^{-1/2}
    behavior at s = 0 that appears as t -> 0.
    """

    def f(theta: np.ndarray) -> np.ndarray:
        sn, cs = np.sin(theta), np.cos(theta)
        s = D * sn * sn
        body = s * np.exp(-mu * s) / (-np.expm1(-mu * (s + t))) ** 1.5
        root = np.sqrt(np.exp(log_e_star) * np.expm1(mu * D * cs * cs))
        return body * 2.0 * D * sn * cs / root

    return _gauss_legendre(f, 0.0, math.pi / 2.0, tol)


def sum_rule_integral(T: float, tol: float = 1e-13) -> Tuple[float, float]:
    """(quadrature, closed form π(1 + tanh(T/4))) for the t -> 0 sum rule."""
    if T <= 0:
        raise DomainError(f"T must be positive, got {T}")
    value, _ = _singular_integral(1.0, 0.0, T, -T, tol)
    return value, math.pi * (1.0 + math.tanh(T / 4.0))


def sff_scaled_limit_detail(mu: float, t: float, tol: float = 1e-12) -> SffValue:
    if mu <= 0 or t <= 0:
        raise DomainError(f"the scaled limit needs mu > 0 and t > 0 (mu={mu}, t={t})")
    base = min(mu, 1.0)
    ts = t_star(mu)
    common = dict(k_or_mu=mu, t=t, regime=SffRegime.SCALED_LIMIT)
    if t >= ts:
        return SffValue(value=base, method="ramp-plateau", **common)

    pref = mu ** 3 / (math.pi * (mu + 1.0)) * math.exp(-mu * t)
    if math.isinf(ts):
        def integrand(s: float) -> float:
            return s * math.exp(-mu * s) / (-math.expm1(-mu * (s + t))) ** 1.5 / math.exp(-mu * (s + t) / 2.0)

        value, err = quad(integrand, 0.0, math.inf, epsabs=tol, epsrel=tol, limit=500)
    else:
        value, err = _singular_integral(mu, t, ts - t, -mu * ts, tol)
    result, err = base - pref * value, pref * err
    band = max(10.0 * err, 1e-9)
    if not -band <= result <= base + band:
        raise StabilityError(
            f"scaled form factor {result:.3e} left [0, {base}] beyond its error band at mu={mu}, t={t}",
            err_estimate=err,
        )
    return SffValue(value=min(max(result, 0.0), base), method="singular-quadrature", err_estimate=err, **common)


def sff_scaled_limit(mu: float, t: float, tol: float = 1e-12) -> float:
    """lim S_N(μN; t)/N as N -> ∞."""
    return sff_scaled_limit_detail(mu, t, tol).value


def sff_transition_exponent(mu: float, offsets: Sequence[float] = (1e-1, 3e-2, 1e-2, 3e-3), tol: float = 1e-13) -> float:
    """
    Local exponent of min(μ, 1) - S̃(μ; t) against t* - t as t -> t*⁻.

    Least-squares slope on log-log axes; the deviation vanishes like (t* - t)^{3/2}.
    """
    ts = t_star(mu)
    if not math.isfinite(ts):
        raise DomainError(f"no finite t* for mu={mu}")
    if any(d <= 0 or d >= ts for d in offsets):
        raise DomainError(f"offsets must lie in (0, t*={ts:.4f}), got {list(offsets)}")
    base = min(mu, 1.0)
    devs = [base - sff_scaled_limit(mu, ts - d, tol) for d in offsets]
    if min(devs) <= 0.0:
        raise StabilityError(f"deviation from the ramp underflowed for mu={mu}", err_estimate=tol)
    slope = float(np.polyfit(np.log(offsets), np.log(devs), 1)[0])
    logger.debug(f"transition exponent at mu={mu}: {slope:.4f}")
    return slope


def sff_heuristic(mu: float, t: float, n_nodes: int = 400) -> float:
    """
    1 - (1/π)∫₀^{u*} (ρ(u; t) - μ) du with ρ(u*; t) = μ.

    Gives μ when the density never drops below μ on [0, π] and 1 when it starts below μ.
    """
    if mu <= 0 or t <= 0:
        raise DomainError(f"invalid arguments mu={mu}, t={t}")
    mu_r, mu_p = critical_mus(t)
    if mu >= mu_p:
        return 1.0
    if mu_r is not None and mu <= mu_r:
        return mu
    u_star = bisect(lambda u: herglotz_solve(t, u).real - mu, 0.0, math.pi, xtol=1e-10)
    x, w = roots_legendre(n_nodes)
    nodes = u_star / 2.0 * (x + 1.0)
    rho = herglotz_curve(t, nodes).real
    integral = u_star / 2.0 * float(np.dot(w, rho - mu))
    return 1.0 - integral / math.pi


# --- kernel oracle ---


def sff_kernel_oracle(params: EnsembleParams, k: int, n_grid: Optional[int] = None) -> float:
    """N - ∫∫ e^{ik(x-y)} K(x, y) K(y, x) dx dy by a periodic trapezoid rule (small N only)."""
    if params.N > 8:
        raise DomainError(f"the kernel oracle is meant for N <= 8, got {params.N}")
    coeffs = kernel_coeffs(params)
    width = max(abs(coeffs.l_min), abs(coeffs.l_max)) + params.N + abs(k)
    n = n_grid or max(64, 4 * width)
    x = 2.0 * math.pi * np.arange(n) / n - math.pi
    X, Y = np.meshgrid(x, x, indexing="ij")
    K = kernel(params, X, Y, coeffs=coeffs)
    phase = np.exp(1j * k * (X - Y))
    integral = (2.0 * math.pi / n) ** 2 * np.sum(phase * K * K.T)
    return float(params.N - integral.real)


# --- dip-ramp-plateau assembly ---


def dip_location(grid: Sequence[float], values: Sequence[float], period: Optional[float] = None) -> Tuple[float, float]:
    """
    Location and value of the minimum of a dip-ramp-plateau curve.

    With a period the minimum is taken over the sliding-window maximum, so
    isolated zeros of an oscillating slope term do not register as the dip.
    """
    grid = np.asarray(grid, dtype=float)
    values = np.asarray(values, dtype=float)
    if period is None:
        i = int(np.argmin(values))
        return float(grid[i]), float(values[i])
    lo = np.searchsorted(grid, grid - period / 2.0, side="left")
    hi = np.searchsorted(grid, grid + period / 2.0, side="right")
    envelope = np.array([values[a:b].max() for a, b in zip(lo, hi)])
    i = int(np.argmin(envelope))
    return float(grid[i]), float(envelope[i])


def drp_curve(N: int, t: float, mu_grid: Sequence[float], tol: float = 1e-12) -> SweepTable:
    """N·S̃(μ; t) + N²·m_{μN}^(N)(t)² on a μ grid, k = μN continuous."""
    if N < 20:
        raise DomainError(f"the dip-ramp-plateau curve is meant for N >= 20, got {N}")
    params = EnsembleParams.of(N, t)
    rows: List[tuple] = []
    for mu in mu_grid:
        if mu <= 0:
            raise DomainError(f"mu must be positive, got {mu}")
        ramp = sff_scaled_limit(mu, t, tol)
        try:
            m = moment_finite_detail(params, mu * N, MomentForm.A8b_JACOBI)
            moment, method = m.value, m.method
        except StabilityError:
            if t > t_star(mu):
                # exponentially small against the ramp
                moment, method = 0.0, "decayed"
            else:
                moment, method = moment_robust(params, mu * N).value, "a8b-extended"
        rows.append((mu, mu * N, ramp, moment, N * ramp + N * N * moment * moment, method))
    header = ["mu", "k", "sff_scaled", "moment", "total", "method"]
    table = SweepTable.from_rows(header, rows)
    mu_dip, depth = dip_location(table.column("mu"), table.column("total"))
    table.metadata.extra.update({"N": N, "t": t, "mu_dip": mu_dip, "dip_depth": depth / (N * N)})
    return table


def dip_sharpness(table: SweepTable) -> float:
    """
    log(total(μ_dip/2) / total(μ_dip)) on the oscillation envelope of a drp_curve table.

    The envelope is the sliding-window maximum over one period 2π/(N L₀(t)) of
    the slope term, with L₀ = π from t = 4 on, so zeros of the moment do not
    count as the dip. An exponentially decaying slope scores far above an
    algebraic one.
    """
    N, t = table.metadata.extra["N"], table.metadata.extra["t"]
    mu = np.asarray(table.column("mu"), dtype=float)
    total = np.asarray(table.column("total"), dtype=float)
    edge = support_edge(t) if t < 4.0 else math.pi
    period = 2.0 * math.pi / (N * edge)
    lo = np.searchsorted(mu, mu - period / 2.0, side="left")
    hi = np.searchsorted(mu, mu + period / 2.0, side="right")
    envelope = np.array([total[a:b].max() for a, b in zip(lo, hi)])
    i = int(np.argmin(envelope))
    if mu[i] / 2.0 < mu[0]:
        raise DomainError(f"the mu grid must reach below half the dip location {mu[i]:.4g}")
    left = float(np.interp(np.log(mu[i] / 2.0), np.log(mu), np.log(envelope)))
    return left - float(np.log(envelope[i]))
