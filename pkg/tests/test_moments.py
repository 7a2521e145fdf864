import math

import numpy as np
import pytest

from ubmot.schemas.moments import MomentForm, Regime
from ubmot.services import oracles
from ubmot.services.density import edge_amplitude, support_edge
from ubmot.services.moments import (
    CRITICAL_EXPONENT,
    hook,
    hook_average,
    moment_asymptotic,
    moment_critical_exponent,
    moment_finite,
    moment_finite_detail,
    moment_limit,
    moment_robust,
    moment_slope_regime,
    phase_function,
    power_sum_via_hooks,
    schur_average,
    schur_eval,
    t_star,
)
from ubmot.utils.errors import DegeneratePointsError, DomainError, StabilityError

EXACT_FORMS = [MomentForm.A8_FIRST, MomentForm.A8_SECOND, MomentForm.A8a, MomentForm.A8b_JACOBI,
               MomentForm.M1_SUM, MomentForm.SCHUR_A4]


@pytest.mark.parametrize("form", EXACT_FORMS)
@pytest.mark.parametrize("N", [1, 2, 7, 30])
def test_first_moment_is_independent_of_N(params, form, N):
    assert moment_finite(params(N, 1.7), 1, form) == pytest.approx(math.exp(-0.85), rel=1e-12)


@pytest.mark.parametrize("form", EXACT_FORMS)
def test_single_angle_moments_are_theta_coefficients(params, form):
    p = params(1, 2.0)
    for k in (1, 2, 5):
        assert moment_finite(p, k, form) == pytest.approx(p.q ** (k * k), rel=1e-12)


@pytest.mark.parametrize("form", EXACT_FORMS)
def test_moments_at_t_zero_are_one(params, form):
    assert moment_finite(params(6, 0.0), 4, form) == 1.0


@pytest.mark.parametrize("N,k,t", [(2, 3, 0.5), (5, 3, 2.0), (8, 6, 0.5), (8, 1, 3.6), (6, 9, 2.0)])
def test_exact_forms_agree_with_extended_precision(params, N, k, t):
    expected = oracles.moment_extended(N, k, t)
    for form in EXACT_FORMS:
        assert moment_finite(params(N, t), k, form) == pytest.approx(expected, rel=1e-9, abs=1e-15), form


def test_all_forms_agree_at_n30_k30_t36(params):
    p = params(30, 3.6)
    expected = oracles.moment_extended(30, 30, 3.6)
    for form in (MomentForm.A8_SECOND, MomentForm.A8a, MomentForm.A8b_JACOBI, MomentForm.M1_SUM, MomentForm.SCHUR_A4):
        assert moment_finite(p, 30, form, extended=True) == pytest.approx(expected, rel=1e-9), form
    assert moment_robust(p, 30).value == pytest.approx(expected, rel=1e-9)


def test_cancelling_float_sums_refuse_and_resum_on_request(params):
    # A8a cancels at t = 3.6; the hook and m1 sums cancel at small t
    for form, t in ((MomentForm.A8a, 3.6), (MomentForm.M1_SUM, 0.5), (MomentForm.SCHUR_A4, 0.5)):
        p = params(30, t)
        with pytest.raises(StabilityError) as info:
            moment_finite(p, 30, form)
        assert info.value.err_estimate > 1e-10
        detail = moment_finite_detail(p, 30, form, extended=True)
        assert detail.method == f"{form.value}-extended"
        assert detail.err_estimate <= 1e-14
        assert detail.value == pytest.approx(oracles.moment_extended(30, 30, t), rel=1e-9)


def test_stable_float_sum_is_not_resummed(params):
    detail = moment_finite_detail(params(5, 1.0), 3, MomentForm.A8_SECOND, extended=True)
    assert detail.method == MomentForm.A8_SECOND.value


def test_intro_prefactor_is_a_discrepancy(params):
    p = params(1, 1.0)
    assert moment_finite(p, 2, MomentForm.INTRO_4_0c) == pytest.approx(p.q ** 8)
    assert moment_finite(p, 2, MomentForm.INTRO_4_0c) != pytest.approx(p.q ** 4)


def test_integer_forms_reject_real_k(params):
    with pytest.raises(DomainError):
        moment_finite(params(4, 1.0), 1.5, MomentForm.A8a)
    with pytest.raises(DomainError):
        moment_finite(params(4, 1.0), 0)
    # the Jacobi form accepts real k
    assert abs(moment_finite(params(4, 1.0), 1.5)) <= 1.0


def test_moment_detail_carries_method(params):
    m = moment_finite_detail(params(5, 1.0), 3, MomentForm.M1_SUM)
    assert m.method == "m1"
    assert m.N == 5


def test_moments_are_bounded(params):
    for N in (3, 10, 40):
        for t in (0.3, 2.0, 5.0):
            for k in range(1, 25):
                assert abs(moment_robust(params(N, t), k).value) <= 1.0 + 1e-12


def test_moment_limit_values():
    assert moment_limit(1, 3.0) == pytest.approx(math.exp(-1.5))
    assert moment_limit(2, 1.0) == 0.0
    assert moment_limit(5, 0.0) == 1.0


@pytest.mark.slow
@pytest.mark.parametrize("t", [1.0, 2.0, 4.0])
def test_large_N_moments_approach_the_limit(params, t):
    for k in range(1, 9):
        assert moment_robust(params(2000, t), k).value == pytest.approx(moment_limit(k, t), abs=5e-3)


@pytest.mark.slow
def test_robust_moment_falls_back_to_extended_precision(params):
    m = moment_robust(params(400, 6.0), 200)
    assert m.value == pytest.approx(oracles.moment_extended(400, 200, 6.0), rel=1e-8, abs=1e-300)


# --- Schur oracle ---


def test_schur_average_of_empty_partition_is_one(params):
    assert schur_average(params(4, 1.0), []) == 1.0


def test_schur_average_single_box_is_first_power_sum(params):
    p = params(4, 1.0)
    assert schur_average(p, [1]) == pytest.approx(4 * math.exp(-0.5))


def test_power_sum_hook_identity(rng):
    z = np.exp(1j * rng.uniform(-math.pi, math.pi, 4))
    assert power_sum_via_hooks(z, 3) == pytest.approx(np.sum(z ** 3), abs=1e-9)


def test_hook_averages_sum_to_the_moment(params):
    p = params(5, 1.3)
    total = sum((-1) ** r * hook_average(p, 4, r) for r in range(4))
    assert total == pytest.approx(5 * moment_finite(p, 4), rel=1e-10)


def test_hook_average_matches_product_formula(params):
    p = params(5, 0.9)
    for r in range(3):
        assert hook_average(p, 3, r) == pytest.approx(schur_average(p, hook(3, r)), rel=1e-12)


def test_schur_eval_rejects_coincident_points():
    with pytest.raises(DegeneratePointsError):
        schur_eval([1.0, 1.0, 1j], [2, 1])


def test_schur_rejects_non_partitions():
    with pytest.raises(DomainError):
        schur_eval([1.0, -1.0], [1, 2])


# --- asymptotics ---


def test_t_star_values():
    assert t_star(0.5) == pytest.approx(4 * math.log(3))
    assert t_star(2.0) == pytest.approx(math.log(3))
    assert t_star(1e-6) == pytest.approx(4.0, rel=1e-6)
    assert math.isinf(t_star(1.0))


def test_small_mu_phase_matches_support_edge():
    h, _, _ = phase_function(0.01, 2.0)
    assert h == pytest.approx(math.pi + 0.01 * support_edge(2.0), abs=1e-3)


def test_asymptotic_regimes():
    assert moment_asymptotic(0.5, 1.0, 200).regime is Regime.OSCILLATORY
    decayed = moment_asymptotic(0.5, 6.0, 200)
    assert decayed.regime is Regime.EXPONENTIAL_DECAY
    assert decayed.value == 0.0
    critical = moment_asymptotic(0.5, t_star(0.5), 200)
    assert critical.regime is Regime.CRITICAL
    assert critical.decay_exponent == CRITICAL_EXPONENT
    assert math.isnan(critical.value)


def test_decay_regime_below_t4_has_no_envelope():
    # mu = 2 puts t* = ln 3 well below 4
    with pytest.raises(DomainError):
        moment_asymptotic(2.0, 2.0, 200)
    assert moment_asymptotic(2.0, 5.0, 20).envelope > 0.0


@pytest.mark.slow
def test_oscillatory_asymptotic_improves_with_N(params):
    errors = []
    for N in (200, 400, 800):
        asym = moment_asymptotic(0.5, 1.0, N)
        exact = moment_robust(params(N, 1.0), 0.5 * N).value
        errors.append(abs(exact - asym.value) / asym.envelope)
    assert errors[-1] < 0.1
    assert errors[-1] < errors[0]


@pytest.mark.slow
def test_moments_decay_beyond_t_star(params):
    Ns = [100, 200, 300, 400]
    logs = [math.log(abs(moment_robust(params(N, 6.0), 0.5 * N).value)) for N in Ns]
    assert np.polyfit(Ns, logs, 1)[0] < 0


@pytest.mark.slow
def test_critical_decay_exponent():
    slope, mags = moment_critical_exponent(0.5, [100, 200, 400, 800])
    assert slope == pytest.approx(CRITICAL_EXPONENT, abs=0.15)
    assert all(m > 0 for m in mags)


def test_slope_regime_domain():
    with pytest.raises(DomainError):
        moment_slope_regime(5, 2000, 2.0)
    with pytest.raises(DomainError):
        moment_slope_regime(40, 2000, 4.5)
    assert abs(moment_slope_regime(40, 2000, 2.0)) < 1.0


@pytest.mark.slow
def test_slope_regime_tracks_the_moment(params):
    k, N = 40, 2000
    scale = math.sqrt(math.pi) * edge_amplitude(2.0) * k ** -1.5
    exact = moment_robust(params(N, 2.0), k).value
    assert abs(exact - moment_slope_regime(k, N, 2.0)) < 0.1 * scale
