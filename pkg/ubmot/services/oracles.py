"""
Extended-precision reference evaluations built on mpmath.

These are slow but immune to cancellation: the working precision is raised
until two successive evaluations agree. They back the float evaluators where
those report instability, and serve as oracles in the validation suites.
"""
import logging
import math
from typing import List

import mpmath

from ubmot.utils.errors import ConvergenceError, DomainError

logger = logging.getLogger(__name__)

_START_DPS = 30
_MAX_DPS = 4000


def _stable_eval(fn, rel_tol: float = 1e-15, start_dps: int = _START_DPS, max_dps: int = _MAX_DPS) -> mpmath.mpf:
    """Evaluate fn() at increasing precision until two runs agree to rel_tol."""
    dps = start_dps
    with mpmath.workdps(dps):
        prev = fn()
    while dps < max_dps:
        dps *= 2
        with mpmath.workdps(dps):
            cur = fn()
            if cur == prev or abs(cur - prev) <= rel_tol * abs(cur):
                return +cur
        prev = cur
    raise ConvergenceError(f"extended precision evaluation did not settle by {max_dps} digits")


def _cancellation_digits(N: int, k: float, t: float) -> int:
    """Rough count of digits lost in the alternating A8a-type series."""
    # terms are bounded by the same series with |z| and positive signs
    z = 1.0 - math.exp(-k * t / N)
    log_mass = 0.0
    log_term = 0.0
    for n in range(N - 1):
        log_term += math.log((N - 1 - n) * (1 + k + n) * z / ((n + 1) * (2 + n)))
        log_mass = max(log_mass, log_term)
    return int(log_mass / math.log(10)) + 1


def moment_extended(N: int, k: float, t: float) -> float:
    """m_k^(N)(t) = q^(k²-k(N-1)) 2F1(1-N, 1+k; 2; 1-q^(2k)) in extended precision."""
    if N < 1 or k <= 0 or t < 0:
        raise DomainError(f"invalid moment arguments N={N}, k={k}, t={t}")
    if t == 0:
        return 1.0

    def evaluate():
        log_q = -mpmath.mpf(t) / (2 * N)
        kk = mpmath.mpf(k)
        z = -mpmath.expm1(2 * kk * log_q)
        term = mpmath.mpf(1)
        total = mpmath.mpf(1)
        for n in range(N - 1):
            term = term * (1 - N + n) * (1 + kk + n) * z / ((n + 1) * (2 + n))
            total += term
        return mpmath.exp((kk * kk - kk * (N - 1)) * log_q) * total

    start = _START_DPS + _cancellation_digits(N, k, t)
    value = _stable_eval(evaluate, start_dps=start)
    logger.debug(f"extended moment N={N}, k={k}, t={t}: {mpmath.nstr(value, 12)}")
    return float(value)


def _start_dps(digits_lost: float) -> int:
    if not math.isfinite(digits_lost):
        return 2 * _START_DPS
    return _START_DPS + max(0, int(digits_lost))


def hyp2f1_extended(a: int, b: float, c: float, z: float, log_pref: float = 0.0, digits_lost: float = 0.0) -> float:
    """e^log_pref · 2F1(a, b; c; z) for terminating a, summed by mpmath at rising precision."""
    if not (float(a).is_integer() and a <= 0):
        raise DomainError(f"hyp2f1_extended needs a nonpositive integer a, got {a}")

    def evaluate():
        return mpmath.exp(mpmath.mpf(log_pref)) * mpmath.hyp2f1(int(a), b, c, z)

    return float(_stable_eval(evaluate, start_dps=_start_dps(digits_lost)))


def _alternating_weights(N: int, k: int) -> List[int]:
    """c_i = Γ(N+k-i) / (Γ(k-i) Γ(N-i) Γ(i+1)) = k·C(N+k-i-1, N-i-1)·C(k-1, i), exact, for i < min(k, N)."""
    return [k * math.comb(N + k - i - 1, N - i - 1) * math.comb(k - 1, i) for i in range(min(k, N))]


def m1_sum_extended(N: int, k: int, t: float, digits_lost: float = 0.0) -> float:
    """q^(k²+(N-1)k) / (kN) · Σ_r (-1)^r c_r q^(-2kr) with exact integer weights."""
    if N < 1 or k < 1 or t < 0:
        raise DomainError(f"invalid moment arguments N={N}, k={k}, t={t}")
    weights = _alternating_weights(N, k)

    def evaluate():
        x = mpmath.exp(mpmath.mpf(k) * t / N)
        total, power = mpmath.mpf(0), mpmath.mpf(1)
        for r, w in enumerate(weights):
            total += (-w if r % 2 else w) * power
            power *= x
        pref = mpmath.exp(-mpmath.mpf(k * k + (N - 1) * k) * t / (2 * N))
        return pref * total / (k * N)

    return float(_stable_eval(evaluate, start_dps=_start_dps(digits_lost)))


def _rising(x: int, r: int) -> int:
    return math.prod(range(x, x + r))


def hook_sum_extended(N: int, k: int, t: float, digits_lost: float = 0.0) -> float:
    """(1/N) Σ_r (-1)^r ⟨s_(k-r, 1^r)⟩ with every hook average carried in extended precision."""
    if N < 1 or k < 1 or t < 0:
        raise DomainError(f"invalid moment arguments N={N}, k={k}, t={t}")
    base = math.comb(N + k - 1, k)

    def evaluate():
        log_q = -mpmath.mpf(t) / (2 * N)
        total = mpmath.mpf(0)
        for r in range(min(k, N)):
            ratio = mpmath.mpf(_rising(1 - k, r) * _rising(1 - N, r)) / _rising(-(k - 1 + N), r)
            # the hook sign (-1)^r cancels against the alternating sum
            hook = mpmath.exp((k * k + k * (N - 1) - 2 * k * r) * log_q) * mpmath.mpf(base) * ratio / math.factorial(r)
            total += hook
        return total / N

    return float(_stable_eval(evaluate, start_dps=_start_dps(digits_lost)))


def _sff_coefficients(N: int, k: int) -> List[int]:
    """
    Exact integer coefficients C_m of the double sum regrouped by m = j + l.

    With the weights c_i of _alternating_weights the double sum becomes
    Σ_m (-1)^m C_m x^m / (m - N - k + 1)² where C_m = Σ_{j+l=m} c_j c_l and x = e^{kt/N}.
    """
    c = _alternating_weights(N, k)
    conv = [0] * (2 * len(c) - 1)
    for j, cj in enumerate(c):
        for l, cl in enumerate(c):
            conv[j + l] += cj * cl
    return conv


def sff_double_sum_extended(N: int, k: int, t: float) -> float:
    """Finite-N form factor from the double sum, summed exactly in extended precision."""
    if N < 1 or k < 1 or t < 0:
        raise DomainError(f"invalid form factor arguments N={N}, k={k}, t={t}")
    if t == 0:
        return 0.0
    upper = min(k, N)
    shift = N + k - 1
    coeffs = _sff_coefficients(N, k)
    rate = k * t / N
    log_pref = -(2 * k * k + 2 * k * (N - 1)) * t / (2 * N)
    log_peak = max(
        math.log(cm) + m * rate - 2 * math.log(shift - m) for m, cm in enumerate(coeffs) if cm
    )
    lost = max(0, int((log_pref + log_peak) / math.log(10)) + 1)

    def evaluate():
        x = mpmath.exp(mpmath.mpf(k) * t / N)
        total = mpmath.mpf(0)
        power = mpmath.mpf(1)
        for m, cm in enumerate(coeffs):
            term = mpmath.mpf(cm) * power / mpmath.mpf(m - shift) ** 2
            total += -term if m % 2 else term
            power *= x
        pref = mpmath.exp(-mpmath.mpf(2 * k * k + 2 * k * (N - 1)) * t / (2 * N))
        return upper - pref * total

    start = _START_DPS + lost
    value = _stable_eval(evaluate, rel_tol=1e-14, start_dps=start, max_dps=max(_MAX_DPS, 4 * start))
    logger.debug(f"extended form factor N={N}, k={k}, t={t}: {lost} digits cancelled")
    return float(value)
