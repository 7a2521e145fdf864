import math

import numpy as np
import pytest

from ubmot.services.ensemble import (
    biorth_kernel,
    biorth_pairing,
    density_finite_N,
    kernel,
    kernel_coeffs,
    pdf_identity_start,
    spherical_weight,
    weight_series,
)
from ubmot.services.moments import moment_finite, moment_robust
from ubmot.services.sff import sff_exact
from ubmot.utils.errors import DomainError, WindowTooSmallError


def _grid(n):
    return 2 * math.pi * np.arange(n) / n - math.pi


def test_spherical_weight_peaks_at_center(params):
    p = params(5, 1.0)
    assert spherical_weight(p, p.center) == 1.0
    assert spherical_weight(p, p.center + 1) == pytest.approx(p.q)


def test_weight_series_is_the_single_angle_density(params):
    p = params(1, 1.0)
    for x in (-2.0, 0.0, 0.7, 3.0):
        assert weight_series(p, x).real == pytest.approx(2 * math.pi * pdf_identity_start(p, [x]), rel=1e-12)


def test_kernel_coeffs_rejects_t_zero(params):
    with pytest.raises(DomainError):
        kernel_coeffs(params(3, 0.0))


def test_explicit_window_too_small_raises(params):
    with pytest.raises(WindowTooSmallError) as err:
        kernel_coeffs(params(4, 0.5), l_window=1)
    assert err.value.tail_bound > 1e-16


@pytest.mark.parametrize("N,t", [(1, 0.8), (3, 1.0), (6, 2.5), (8, 5.0)])
def test_density_integrates_to_N(params, N, t):
    x = _grid(512)
    rho = np.asarray(density_finite_N(params(N, t), x))
    assert rho.mean() * 2 * math.pi == pytest.approx(N, rel=1e-10)
    assert rho.min() > -1e-10


def test_density_is_even(params):
    p = params(5, 1.7)
    x = np.linspace(0.1, 3.0, 7)
    assert np.allclose(density_finite_N(p, x), density_finite_N(p, -x), atol=1e-12)


def test_density_N1_matches_pdf(params):
    p = params(1, 1.3)
    for x in (-1.0, 0.2, 2.9):
        assert density_finite_N(p, x) == pytest.approx(pdf_identity_start(p, [x]), rel=1e-10)


def test_density_N2_is_the_pdf_marginal(params):
    p = params(2, 1.0)
    ys = _grid(64)
    for x in (0.0, 0.9, 2.2):
        marginal = 2 * sum(pdf_identity_start(p, [x, y]) for y in ys) * 2 * math.pi / len(ys)
        assert density_finite_N(p, x) == pytest.approx(marginal, rel=1e-8)


def test_kernel_diagonal_is_density(params):
    p = params(4, 1.2)
    x = np.array([-2.0, 0.3, 1.1])
    assert np.allclose(np.asarray(kernel(p, x, x)).real, density_finite_N(p, x), atol=1e-12)


def test_kernel_is_reproducing(params):
    # ∫ K(x, y) K(y, x) dy = K(x, x) for a projection kernel
    p = params(3, 1.5)
    ys = _grid(256)
    x = 0.6
    lhs = np.sum(np.asarray(kernel(p, x, ys)) * np.asarray(kernel(p, ys, x))) * 2 * math.pi / len(ys)
    assert lhs.real == pytest.approx(density_finite_N(p, x), rel=1e-9)


def test_biorthogonal_kernel_matches_closed_kernel(params):
    p = params(3, 1.0)
    assert biorth_kernel(p, 0.4, -1.1) == pytest.approx(kernel(p, 0.4, -1.1), rel=1e-9, abs=1e-12)


@pytest.mark.parametrize("a,b", [(0, 0), (1, 1), (2, 2), (0, 2), (2, 1)])
def test_biorthogonality(params, a, b):
    value = biorth_pairing(params(3, 1.0), a, b)
    assert value == pytest.approx(1.0 if a == b else 0.0, abs=1e-10)


def test_pdf_normalizes_at_N2(params):
    p = params(2, 0.7)
    x = _grid(48)
    total = sum(pdf_identity_start(p, [a, b]) for a in x for b in x) * (2 * math.pi / len(x)) ** 2
    assert total == pytest.approx(1.0, rel=1e-9)


def test_pdf_rejects_large_N_and_t_zero(params):
    with pytest.raises(DomainError):
        pdf_identity_start(params(4, 1.0), [0, 0, 0, 0])
    with pytest.raises(DomainError):
        pdf_identity_start(params(2, 0.0), [0, 0])


def test_pdf_N2_reproduces_moments_and_sff(params):
    p = params(2, 1.0)
    x = _grid(40)
    a, b = np.meshgrid(x, x, indexing="ij")
    pdf = np.array([[pdf_identity_start(p, [ai, bi]) for bi in x] for ai in x])
    h2 = (2 * math.pi / len(x)) ** 2
    for k in (1, 2, 3):
        m = np.sum(pdf * (np.cos(k * a) + np.cos(k * b)) / 2) * h2
        pair = np.sum(pdf * np.cos(k * (a - b))) * h2
        assert m == pytest.approx(moment_finite(p, k), abs=1e-6)
        assert 2 + 2 * pair - 4 * m * m == pytest.approx(sff_exact(p, k), abs=1e-6)


@pytest.mark.parametrize("k", [1, 2, 5])
def test_density_fourier_coefficient_is_N_times_moment(params, k):
    p = params(5, 1.5)
    x = _grid(512)
    rho = np.asarray(density_finite_N(p, x))
    coef = np.mean(rho * np.cos(k * x)) * 2 * math.pi
    assert coef == pytest.approx(5 * moment_robust(p, k).value, abs=1e-10)


def test_kernel_reaches_the_uniform_limit_at_large_t(params):
    p = params(4, 60.0)
    x, y = 0.9, -1.4
    cue = sum(np.exp(1j * l * (x - y)) for l in range(4)) / (2 * math.pi)
    assert kernel(p, x, y) == pytest.approx(cue, abs=1e-8)


def test_pair_correlation_is_nonnegative(params, rng):
    p = params(4, 1.2)
    x, y = rng.uniform(-math.pi, math.pi, size=(2, 50))
    rho2 = (np.asarray(kernel(p, x, x)) * np.asarray(kernel(p, y, y))
            - np.asarray(kernel(p, x, y)) * np.asarray(kernel(p, y, x))).real
    assert rho2.min() > -1e-10


@pytest.mark.parametrize("N", [2, 3, 4])
def test_biorthogonal_kernel_matches_closed_kernel_on_random_pairs(params, rng, N):
    p = params(N, 0.8)
    for x, y in rng.uniform(-math.pi, math.pi, size=(20, 2)):
        assert biorth_kernel(p, x, y) == pytest.approx(kernel(p, x, y), rel=1e-9, abs=1e-12)
