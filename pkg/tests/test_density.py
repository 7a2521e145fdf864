import math

import numpy as np
import pytest
from scipy.integrate import trapezoid

from ubmot.schemas.density import DensityMethod
from ubmot.services.density import (
    CUSP_EXPONENT,
    burgers_residual,
    critical_mus,
    cusp_exponent_fit,
    density_limit,
    density_profile,
    dip_wavenumber,
    edge_amplitude,
    edge_profile_ratios,
    herglotz_disk,
    herglotz_solve,
    support_edge,
)
from ubmot.utils.errors import DomainError


def test_support_edge_and_amplitude():
    assert support_edge(2.0) == pytest.approx(1.0 + math.pi / 2)
    assert edge_amplitude(2.0) == pytest.approx(0.225079, abs=1e-6)
    assert support_edge(3.999999) == pytest.approx(math.pi, abs=1e-2)
    with pytest.raises(DomainError):
        support_edge(4.0)


def test_herglotz_root_satisfies_the_equation():
    t, x = 1.5, 0.7
    H = herglotz_solve(t, x)
    assert H.real >= 0
    lhs = (H - 1) / (H + 1) * np.exp(t * H / 2)
    assert lhs == pytest.approx(np.exp(1j * x), abs=1e-10)


@pytest.mark.parametrize("t", [0.5, 2.0, 3.5, 6.0])
def test_density_is_normalized_and_even(t):
    xs = np.linspace(-math.pi, math.pi, 4001)
    rho = density_limit(t, xs)
    assert trapezoid(rho, xs) / (2 * math.pi) == pytest.approx(1.0, abs=2e-3)
    assert rho == pytest.approx(rho[::-1], abs=1e-10)
    assert np.all(rho >= 0)


def test_density_vanishes_outside_the_support():
    t = 2.0
    L0 = support_edge(t)
    xs = np.array([L0 + 0.05, L0 + 0.5, math.pi])
    assert density_limit(t, xs) == pytest.approx(np.zeros(3), abs=1e-10)


def test_herglotz_and_fourier_agree_above_t4():
    xs = np.linspace(-math.pi, math.pi, 41)
    herglotz = density_limit(6.0, xs, DensityMethod.HERGLOTZ)
    fourier = density_limit(6.0, xs, DensityMethod.FOURIER)
    assert herglotz == pytest.approx(fourier, abs=1e-6)


def test_fourier_needs_t_above_4():
    with pytest.raises(DomainError):
        density_limit(2.0, 0.0, DensityMethod.FOURIER)


def test_critical_values_are_density_extremes():
    mu_r, mu_p = critical_mus(6.0)
    assert density_limit(6.0, math.pi) == pytest.approx(mu_r, rel=1e-8)
    assert density_limit(6.0, 0.0) == pytest.approx(mu_p, rel=1e-8)
    assert 0 < mu_r < 1 < mu_p


def test_small_t_peak_is_large():
    mu_r, mu_p = critical_mus(0.1)
    assert mu_r is None
    assert mu_p > 5.0
    assert density_limit(0.1, 0.0) == pytest.approx(mu_p, rel=1e-8)


def test_square_root_edge():
    ratios = edge_profile_ratios(2.0, [1e-3, 1e-4, 1e-5])
    assert ratios[-1] == pytest.approx(edge_amplitude(2.0), rel=2e-2)
    assert abs(ratios[-1] - edge_amplitude(2.0)) < abs(ratios[0] - edge_amplitude(2.0))


def test_cusp_at_t4():
    assert cusp_exponent_fit([1e-2, 3e-3, 1e-3]) == pytest.approx(CUSP_EXPONENT, abs=0.1)


def test_burgers_equation_holds_in_the_disk():
    assert burgers_residual(1.0, 0.3 + 0.2j) < 1e-5


def test_disk_rejects_boundary():
    with pytest.raises(DomainError):
        herglotz_disk(1.0, 1.0 + 0j)


def test_disk_value_at_origin():
    assert herglotz_disk(2.0, 0j) == pytest.approx(1.0)


def test_finite_N_profile_tracks_the_limit():
    grid = np.linspace(-1.0, 1.0, 11)
    finite = density_profile(1.0, grid, DensityMethod.FINITE, N=40)
    limit = density_profile(1.0, grid)
    assert finite.values == pytest.approx(limit.values, abs=0.1)
    assert finite.N == 40
    assert limit.edge_amplitude == pytest.approx(edge_amplitude(1.0))


def test_finite_profile_needs_N():
    with pytest.raises(DomainError):
        density_profile(1.0, [0.0], DensityMethod.FINITE)


def test_dip_wavenumber_regimes():
    assert dip_wavenumber(2.0, 100) == pytest.approx(math.sqrt(100 * edge_amplitude(2.0)))
    assert dip_wavenumber(4.0, 1000) == pytest.approx(1000 ** (6 / 11))
    assert dip_wavenumber(6.0, 100) > 0
    with pytest.raises(DomainError):
        dip_wavenumber(0.0, 10)


@pytest.mark.parametrize("t", [0.5, 2.0, 6.0])
def test_burgers_equation_holds_on_the_inner_ring(t):
    for theta in np.linspace(-math.pi, math.pi, 9, endpoint=False):
        assert burgers_residual(t, 0.9 * complex(math.cos(theta), math.sin(theta))) < 1e-4
