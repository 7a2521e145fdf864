"""
Scalar special functions used throughout the package.

Gamma ratios are handled in log space with separate sign tracking. Terminating
hypergeometric series, Laguerre and Jacobi polynomials are evaluated by
recurrences; the Jacobi recurrence carries a shadow run that estimates how many
digits were lost.
"""
import logging
import math
from typing import Tuple, Union

import numpy as np
from scipy.special import binom, gammaln, gammasgn

from ubmot.schemas.specfun import PolyCoeffs, SignedLog
from ubmot.utils.errors import DomainError, StabilityError

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

# Estimated relative error above which a Jacobi evaluation is rejected
JACOBI_MAX_REL_ERR = 1e-10
THETA_TAIL_TOL = 1e-16

_EPS64 = np.finfo(np.float64).eps
_EPS_LD = np.finfo(np.longdouble).eps
_HAS_EXTENDED = _EPS_LD < _EPS64
_RESCALE_HI = 2.0 ** 400
_RESCALE_LO = 2.0 ** -400


def _is_nonpositive_int(x: float) -> bool:
    return x <= 0 and float(x).is_integer()


def log_gamma_ratio(a: float, b: float) -> SignedLog:
    """
    log(Γ(a)/Γ(b)) with the sign kept separately.

    When both arguments are poles the ratio is the finite limit
    Γ(-m)/Γ(-n) = (-1)^(m-n) n!/m!. A pole in the numerator alone is a
    genuine infinity; a pole in the denominator alone gives zero.
    """
    a_pole = _is_nonpositive_int(a)
    b_pole = _is_nonpositive_int(b)
    if a_pole and b_pole:
        m, n = -int(a), -int(b)
        sign = -1 if (m - n) % 2 else 1
        return SignedLog(math.lgamma(n + 1) - math.lgamma(m + 1), sign)
    if a_pole:
        raise DomainError(f"Γ({a})/Γ({b}) is infinite")
    if b_pole:
        return SignedLog(-math.inf, 0)
    sign = int(gammasgn(a) * gammasgn(b))
    return SignedLog(float(gammaln(a) - gammaln(b)), sign)


def pochhammer_signed(x: float, n: int) -> SignedLog:
    """Rising factorial (x)_n in signed-log form."""
    if n < 0:
        raise DomainError(f"Pochhammer length must be nonnegative, got {n}")
    if n == 0:
        return SignedLog(0.0, 1)
    if _is_nonpositive_int(x):
        m = -int(x)
        if n > m:
            return SignedLog(-math.inf, 0)
        return SignedLog(math.lgamma(m + 1) - math.lgamma(m - n + 1), -1 if n % 2 else 1)
    return log_gamma_ratio(x + n, x)


def hyp2f1_coeffs(a: int, b: float, c: float, z: float) -> PolyCoeffs:
    """Terms of the terminating series 2F1(-m, b; c; z), a = -m."""
    if not _is_nonpositive_int(a):
        raise DomainError(f"series does not terminate: a={a}")
    m = -int(a)
    terms = [1.0]
    term = 1.0
    for n in range(m):
        if c + n == 0:
            raise DomainError(f"c={c} hits a nonpositive integer before termination (n={n})")
        term = term * (a + n) * (b + n) * z / ((n + 1) * (c + n))
        terms.append(term)
    return PolyCoeffs(degree=m, terms=terms)


def hyp2f1_terminating(a: int, b: float, c: float, z: float) -> float:
    """
    Sum of the terminating 2F1 series.

    Terms come from the Pochhammer ratio recurrence and are accumulated with
    math.fsum, which is correctly rounded.
    """
    return math.fsum(hyp2f1_coeffs(a, b, c, z).terms)


def laguerre(n: int, alpha: float, x: ArrayLike) -> ArrayLike:
    """Generalized Laguerre polynomial L_n^(alpha)(x) by the degree recurrence."""
    if n < 0:
        raise DomainError(f"degree must be nonnegative, got {n}")
    x = np.asarray(x, dtype=float)
    prev = np.ones_like(x)
    if n == 0:
        return prev if prev.ndim else float(prev)
    cur = 1.0 + alpha - x
    for k in range(1, n):
        prev, cur = cur, ((2 * k + 1 + alpha - x) * cur - (k + alpha) * prev) / (k + 1)
    return cur if cur.ndim else float(cur)


def laguerre_log(n: int, alpha: float, x: float) -> SignedLog:
    """L_n^(alpha)(x) in signed-log form; rescales by powers of two to avoid overflow."""
    if n < 0:
        raise DomainError(f"degree must be nonnegative, got {n}")
    prev, cur = 1.0, 1.0 + alpha - x
    if n == 0:
        cur = 1.0
    shift = 0
    for k in range(1, n):
        prev, cur = cur, ((2 * k + 1 + alpha - x) * cur - (k + alpha) * prev) / (k + 1)
        mag = max(abs(cur), abs(prev))
        if mag > _RESCALE_HI:
            e = math.frexp(mag)[1]
            prev, cur = math.ldexp(prev, -e), math.ldexp(cur, -e)
            shift += e
    if cur == 0.0:
        return SignedLog(-math.inf, 0)
    return SignedLog(math.log(abs(cur)) + shift * math.log(2.0), 1 if cur > 0 else -1)


def _contiguous_run(n: int, B: float, C: float, z: float, dtype) -> Tuple[float, float, int]:
    """
    F_j = 2F1(-j, B; C; z) for j up to n by the contiguous relation in the
    first parameter. Returns (F_n, F_{n-1}, exponent) with values scaled by 2**-exponent.
    """
    one = dtype(1)
    B, C, z = dtype(B), dtype(C), dtype(z)
    f_prev = one
    f = one - B * z / C
    shift = 0
    for j in range(1, n):
        f_next = ((2 * j + C - (B + j) * z) * f + j * (z - one) * f_prev) / (C + j)
        f_prev, f = f, f_next
        mag = max(abs(float(f)), abs(float(f_prev)))
        if mag > _RESCALE_HI or (0.0 < mag < _RESCALE_LO):
            e = math.frexp(mag)[1]
            f = np.ldexp(f, -e)
            f_prev = np.ldexp(f_prev, -e)
            shift += e
    return f, f_prev, shift


def _contiguous_shadow_float64(n: int, B: float, C: float, z: float) -> Tuple[float, float, int]:
    """Same recurrence with the coefficients distributed differently, for platforms without long double."""
    f_prev = 1.0
    f = 1.0 - B * z / C
    shift = 0
    for j in range(1, n):
        f_next = (2 * j + C - (B + j) * z) / (C + j) * f + (j * (z - 1.0) / (C + j)) * f_prev
        f_prev, f = f, f_next
        mag = max(abs(f), abs(f_prev))
        if mag > _RESCALE_HI or (0.0 < mag < _RESCALE_LO):
            e = math.frexp(mag)[1]
            f, f_prev = math.ldexp(f, -e), math.ldexp(f_prev, -e)
            shift += e
    return f, f_prev, shift


def hyp2f1_recurrence(n: int, B: float, C: float, z: float) -> Tuple[SignedLog, float]:
    """
    2F1(-n, B; C; z) by forward recurrence, with an estimated relative error.

    The estimate compares the float64 run against a shadow run. It is measured
    against max(|F_n|, sqrt|1-z| |F_{n-1}|) so that isolated zeros of F_n are
    not reported as instability.
    """
    if n == 0:
        return SignedLog(0.0, 1), 0.0
    if _is_nonpositive_int(C) and -C <= n - 1:
        raise DomainError(f"contiguous recurrence undefined for C={C}, n={n}")

    f64, p64, s64 = _contiguous_run(n, B, C, z, np.float64)
    if _HAS_EXTENDED:
        fsh, psh, ssh = _contiguous_run(n, B, C, z, np.longdouble)
        gain = float(_EPS_LD / _EPS64)
    else:
        fsh, psh, ssh = _contiguous_shadow_float64(n, B, C, z)
        gain = 1.0

    # bring the shadow onto the float64 scale
    fsh_s = float(np.ldexp(np.longdouble(fsh), ssh - s64)) if _HAS_EXTENDED else math.ldexp(fsh, ssh - s64)
    psh_s = float(np.ldexp(np.longdouble(psh), ssh - s64)) if _HAS_EXTENDED else math.ldexp(psh, ssh - s64)
    scale = max(abs(float(f64)), math.sqrt(abs(1.0 - z)) * abs(float(p64)), abs(fsh_s))
    if scale == 0.0 or not math.isfinite(scale):
        raise StabilityError(f"recurrence degenerated (n={n}, B={B}, C={C}, z={z})")
    diff = max(abs(float(f64) - fsh_s), abs(float(p64) - psh_s)) / scale
    err = diff * gain + _EPS64 * n

    best = fsh if _HAS_EXTENDED else f64
    best_shift = ssh if _HAS_EXTENDED else s64
    value = float(best)
    if value == 0.0:
        return SignedLog(-math.inf, 0), err
    log_abs = math.log(abs(value)) + best_shift * math.log(2.0)
    return SignedLog(log_abs, 1 if value > 0 else -1), err


def _jacobi_explicit(n: int, a: float, b: float, x: float) -> float:
    s = np.arange(n + 1)
    terms = binom(n + a, n - s) * binom(n + b, s) * ((x - 1) / 2.0) ** s * ((x + 1) / 2.0) ** (n - s)
    return math.fsum(terms.tolist())


def jacobi_signed(n: int, a: float, b: float, x: float) -> Tuple[SignedLog, float]:
    """
    Jacobi polynomial P_n^(a,b)(x) in signed-log form plus a relative error estimate.

    Uses P_n = ((a+1)_n / n!) 2F1(-n, n+a+b+1; a+1; (1-x)/2) with the
    hypergeometric factor from the contiguous recurrence. If a+1 is a
    nonpositive integer within reach, the reflection P_n^(a,b)(x) = (-1)^n P_n^(b,a)(-x)
    is used instead; if both parameters are degenerate the explicit binomial sum is used.
    """
    if n < 0:
        raise DomainError(f"degree must be nonnegative, got {n}")
    if n == 0:
        return SignedLog(0.0, 1), 0.0

    if _is_nonpositive_int(a + 1) and -(a + 1) <= n - 1:
        if _is_nonpositive_int(b + 1) and -(b + 1) <= n - 1:
            value = _jacobi_explicit(n, a, b, x)
            if value == 0.0:
                return SignedLog(-math.inf, 0), 0.0
            return SignedLog(math.log(abs(value)), 1 if value > 0 else -1), _EPS64 * (n + 1)
        reflected, err = jacobi_signed(n, b, a, -x)
        sign = -reflected.sign if n % 2 else reflected.sign
        return SignedLog(reflected.log_abs, sign), err

    pref = pochhammer_signed(a + 1, n)
    if pref.sign == 0:
        return SignedLog(-math.inf, 0), 0.0
    hyp, err = hyp2f1_recurrence(n, n + a + b + 1, a + 1, (1.0 - x) / 2.0)
    if hyp.sign == 0:
        return SignedLog(-math.inf, 0), err
    return SignedLog(pref.log_abs - math.lgamma(n + 1) + hyp.log_abs, pref.sign * hyp.sign), err


def jacobi(n: int, a: float, b: float, x: float, check: bool = True) -> float:
    """P_n^(a,b)(x) for general real parameters."""
    result, err = jacobi_signed(n, a, b, x)
    if check and err > JACOBI_MAX_REL_ERR:
        raise StabilityError(
            f"Jacobi recurrence lost too many digits (n={n}, a={a}, b={b}, x={x}, rel err≈{err:.2e})",
            err_estimate=err,
        )
    return result.value()


def theta_terms(kind: int, q: float, tol: float = THETA_TAIL_TOL) -> np.ndarray:
    """Half-integer (kind 2) or integer (kind 3) frequencies kept by the tail tolerance."""
    if kind not in (2, 3):
        raise DomainError(f"theta kind must be 2 or 3, got {kind}")
    if not 0.0 < q < 1.0:
        raise DomainError(f"theta nome must lie in (0, 1), got {q}")
    n_max = math.ceil(math.sqrt(-math.log(tol) / -math.log(q))) + 2
    n = np.arange(-n_max, n_max + 1, dtype=float)
    if kind == 2:
        n = np.arange(-n_max + 1, n_max + 1, dtype=float) - 0.5
    return n


def theta(kind: int, z: ArrayLike, q: float, deriv_order: int = 0, tol: float = THETA_TAIL_TOL) -> ArrayLike:
    """
    deriv_order-th z-derivative of θ₂ or θ₃, θ(z;q) = Σ q^(α²) e^(2izα).

    The frequency set is symmetric under α -> -α, so the imaginary parts cancel.
    """
    if deriv_order < 0:
        raise DomainError(f"derivative order must be nonnegative, got {deriv_order}")
    if q == 0.0:
        z = np.asarray(z, dtype=float)
        base = 1.0 if (kind == 3 and deriv_order == 0) else 0.0
        out = np.full_like(z, base)
        return out if out.ndim else float(out)
    alpha = theta_terms(kind, q, tol)
    z = np.asarray(z, dtype=float)
    weights = np.exp(alpha ** 2 * math.log(q)) * (2.0 * alpha) ** deriv_order
    phase = 2.0 * np.multiply.outer(z, alpha) + deriv_order * math.pi / 2.0
    out = np.cos(phase) @ weights
    return out if np.ndim(out) else float(out)


def gamma_rate(x: float) -> float:
    """γ(x) = √(1-x) - (x/2) log((1+√(1-x))/(1-√(1-x))) on (0, 1]."""
    if not 0.0 < x <= 1.0:
        raise DomainError(f"gamma_rate needs 0 < x <= 1, got {x}")
    s = math.sqrt(1.0 - x)
    return s - x * math.atanh(s)


def decay_exponent(t: float) -> float:
    """c(t) = t γ(4/t): exponential decay rate of the limiting moments for t >= 4."""
    if t < 4.0:
        raise DomainError(f"decay exponent is defined for t >= 4, got {t}")
    return t * gamma_rate(4.0 / t)
