"""
Acceptance suites: cross-checks of every closed form against its oracles.

Each suite appends ValidationCheck rows; a check that raises is recorded as
failed with the error text instead of aborting the run.
"""
import logging
import math
from typing import Callable, Dict, List, Optional

import numpy as np

from ubmot.schemas.ensemble import EnsembleParams
from ubmot.schemas.moments import MomentForm, Regime
from ubmot.schemas.validation import Budget, Suite, ValidationCheck, ValidationReport
from ubmot.services import density, moments, oracles, refmodels, sff, simulate
from ubmot.services.ensemble import pdf_identity_start
from ubmot.utils.errors import UbmotError

logger = logging.getLogger(__name__)

MC_SIGMAS = 3.0
# forms whose k = 1 case is a single term or a trivial series
SINGLE_TERM_AT_K1 = (MomentForm.A8_SECOND, MomentForm.M1_SUM, MomentForm.SCHUR_A4)


class _Collector:
    def __init__(self, suite: Suite):
        self.suite = suite
        self.checks: List[ValidationCheck] = []

    def close(self, name: str, measured: float, expected: float, tol: float, relative: bool = False):
        err = abs(measured - expected)
        if relative:
            err /= max(abs(expected), 1e-300)
        self.checks.append(
            ValidationCheck(
                suite=self.suite, name=name, measured=measured, expected=expected,
                error=err, tolerance=tol, passed=bool(err <= tol),
            )
        )

    def flag(self, name: str, ok: bool, message: str = "", measured: Optional[float] = None, tol: float = 0.0):
        self.checks.append(
            ValidationCheck(suite=self.suite, name=name, measured=measured, tolerance=tol, passed=bool(ok), message=message)
        )

    def guard(self, name: str, fn: Callable[[], None]):
        try:
            fn()
        except UbmotError as e:
            logger.warning(f"⚠️ check {name} raised: {e}")
            self.flag(name, False, message=f"{type(e).__name__}: {e}")


def _p(N: int, t: float) -> EnsembleParams:
    return EnsembleParams.of(N, t)


def closed_forms(c: _Collector, budget: Budget):
    Ns = (1, 2, 4, 8, 16, 32, 64)
    ts = (0.1, 0.5, 1.0, 2.0, 3.6, 5.0, 8.0, 10.0) if budget is Budget.FULL else (0.1, 2.0, 10.0)
    for N in Ns:
        for t in ts:
            c.guard(f"sff k=1 N={N} t={t}", lambda: c.close(
                f"sff k=1 N={N} t={t}", sff.sff_exact(_p(N, t), 1), -math.expm1(-t), 1e-12))
            c.guard(f"sff k=2 N={N} t={t}", lambda: c.close(
                f"sff k=2 N={N} t={t}", sff.sff_exact(_p(N, t), 2), sff.sff_k2_closed_form(N, t), 1e-10, relative=True))
            c.guard(f"moment k=1 N={N} t={t}", lambda: c.close(
                f"moment k=1 N={N} t={t}", moments.moment_finite(_p(N, t), 1), math.exp(-t / 2), 1e-12))
    for k in (1, 3, 6):
        p = _p(1, 1.5)
        c.guard(f"moment N=1 k={k}", lambda: c.close(f"moment N=1 k={k}", moments.moment_finite(p, k), p.q ** (k * k), 1e-12))
    c.close("moment_limit k=2 t=1", moments.moment_limit(2, 1.0), 0.0, 1e-14)
    for N in (1, 5, 12, 20):
        for k in (1, 3, 10, 25):
            c.guard(f"sff t=0 N={N} k={k}", lambda: c.close(
                f"sff t=0 N={N} k={k}", sff.sff_exact(_p(N, 0.0), k), 0.0, 1e-8))
    for T in (0.5, 2.0, 8.0):
        quad, closed = sff.sum_rule_integral(T)
        c.close(f"sum rule T={T}", quad, closed, 1e-9)


def cross_forms(c: _Collector, budget: Budget):
    forms = [MomentForm.A8_SECOND, MomentForm.A8a, MomentForm.A8b_JACOBI, MomentForm.M1_SUM, MomentForm.SCHUR_A4]
    Ns = (1, 3, 12, 30) if budget is Budget.FULL else (1, 3, 30)
    ks = (1, 2, 7, 19, 30) if budget is Budget.FULL else (1, 2, 30)
    ts = (0.5, 2.0, 3.6, 8.0) if budget is Budget.FULL else (0.5, 3.6)
    for N in Ns:
        for k in ks:
            for t in ts:
                p = _p(N, t)
                ref = oracles.moment_extended(N, k, t)
                for form in forms:
                    name = f"{form.value} N={N} k={k} t={t}"
                    c.guard(name, lambda: c.close(
                        name, moments.moment_finite(p, k, form, extended=True), ref, 1e-9, relative=True))
                    if N == 1 or (k == 1 and form in SINGLE_TERM_AT_K1):
                        # a single term or a trivial series: the float sum must not refuse
                        c.guard(f"{name} float", lambda: c.close(
                            f"{name} float", moments.moment_finite(p, k, form), ref, 1e-9, relative=True))
    hooks = sum((-1) ** r * moments.hook_average(_p(5, 1.3), 4, r) for r in range(4))
    c.close("hook sum N=5 k=4", hooks, 5 * moments.moment_finite(_p(5, 1.3), 4), 1e-10 * 5, relative=False)
    intro = moments.moment_finite(_p(1, 1.0), 2, MomentForm.INTRO_4_0c)
    c.flag("intro prefactor differs from the N=1 coefficient", abs(intro - _p(1, 1.0).q ** 4) > 1e-6,
           message="expected discrepancy q^(2k)", measured=intro)


def _periodic_grid(n: int) -> np.ndarray:
    return 2 * math.pi * np.arange(n) / n - math.pi


def pdf_oracle(c: _Collector, budget: Budget):
    """Trapezoid integrals of the N = 1, 2 densities against the moment and form-factor formulas."""
    p1 = _p(1, 1.0)
    x = _periodic_grid(256)
    h = 2 * math.pi / len(x)
    vals = np.array([pdf_identity_start(p1, [xi]) for xi in x])
    c.close("N=1 normalization", float(vals.sum() * h), 1.0, 1e-10)
    for k in (1, 2, 3, 4):
        m = float(np.sum(vals * np.cos(k * x)) * h)
        c.close(f"N=1 m_k k={k}", m, moments.moment_finite(p1, k), 1e-6)
        if k <= 3:
            c.close(f"N=1 S(k) k={k}", 1.0 - m * m, sff.sff_exact(p1, k), 1e-6)

    p2 = _p(2, 1.0)
    x = _periodic_grid(64 if budget is Budget.FULL else 40)
    h = 2 * math.pi / len(x)
    a, b = np.meshgrid(x, x, indexing="ij")
    vals = np.array([[pdf_identity_start(p2, [ai, bi]) for bi in x] for ai in x])
    c.close("N=2 normalization", float(vals.sum() * h * h), 1.0, 1e-8)
    for k in (1, 2, 3, 4):
        m = float(np.sum(vals * (np.cos(k * a) + np.cos(k * b)) / 2) * h * h)
        c.close(f"N=2 m_k k={k}", m, moments.moment_finite(p2, k), 1e-6)
        if k <= 3:
            pair = float(np.sum(vals * np.cos(k * (a - b))) * h * h)
            c.close(f"N=2 S(k) k={k}", 2 + 2 * pair - 4 * m * m, sff.sff_exact(p2, k), 1e-6)


def limits(c: _Collector, budget: Budget):
    N = 2000 if budget is Budget.FULL else 500
    tol = 5e-3 if budget is Budget.FULL else 2e-2
    for t in (1.0, 2.0, 4.0):
        for k in (1, 3, 8):
            c.guard(f"moment N={N} k={k} t={t}", lambda: c.close(
                f"moment N={N} k={k} t={t}", moments.moment_robust(_p(N, t), k).value, moments.moment_limit(k, t), tol))
    c.guard("sff fixed-k N->inf", lambda: c.close(
        f"sff N={N} k=3 t=2 vs limit", sff.sff_exact(_p(N, 2.0), 3), sff.sff_fixed_k_limit(3, 2.0), tol))
    for k in (1, 4, 12, 20):
        for t in (0.3, 2.0):
            c.close(f"fixed-k sum vs quadrature k={k} t={t}",
                    sff.sff_fixed_k_limit(k, t), sff.sff_fixed_k_quadrature(k, t), 1e-8)
    c.close("integral form N=10 k=5 t=2", sff.sff_integral_form(_p(10, 2.0), 5),
            sff.sff_exact(_p(10, 2.0), 5), 1e-7 * sff.sff_exact(_p(10, 2.0), 5))
    c.close("integral form k>N", sff.sff_integral_form(_p(3, 1.0), 5), sff.sff_exact(_p(3, 1.0), 5), 1e-7)
    for N, k, t in ((3, 2, 1.5), (4, 6, 1.0)):
        c.guard(f"kernel oracle N={N} k={k}", lambda: c.close(
            f"kernel oracle N={N} k={k} t={t}", sff.sff_kernel_oracle(_p(N, t), k), sff.sff_exact(_p(N, t), k), 1e-6))


def scaled(c: _Collector, budget: Budget):
    c.close("pure ramp mu=0.1 t=6", sff.sff_scaled_limit(0.1, 6.0), 0.1, 0.0)
    c.close("plateau mu=2 t=2", sff.sff_scaled_limit(2.0, 2.0), 1.0, 0.0)
    c.flag("small-t limit", sff.sff_scaled_limit(0.5, 1e-3) < 5e-2, measured=sff.sff_scaled_limit(0.5, 1e-3), tol=5e-2)
    mu_r, mu_p = density.critical_mus(6.0)
    for mu in (0.5 * mu_r, mu_r):
        c.close(f"heuristic ramp mu={mu:.4f}", sff.sff_heuristic(mu, 6.0), mu, 1e-6)
    c.close("heuristic plateau", sff.sff_heuristic(1.05 * mu_p, 6.0), 1.0, 1e-12)
    mid = sff.sff_heuristic(0.5, 2.0)
    c.flag("heuristic deformed region", 0.0 < mid < 0.5, measured=mid)
    c.guard("ramp departure exponent mu=0.5", lambda: c.close(
        "ramp departure exponent mu=0.5", sff.sff_transition_exponent(0.5), 1.5, 0.15))
    cases = ((0.25, 2.0), (0.5, 2.0), (0.5, 6.0), (2.0, 1.0)) if budget is Budget.FULL else ((0.5, 2.0),)
    Ns = (128, 256, 512) if budget is Budget.FULL else (64, 128)
    for mu, t in cases:
        target = sff.sff_scaled_limit(mu, t)
        errs = [abs(sff.sff_exact(_p(N, t), int(mu * N)) / N - target) for N in Ns]
        c.flag(f"finite-N convergence mu={mu} t={t}", errs[-1] < errs[0], measured=errs[-1])
        if budget is Budget.FULL:
            c.close(f"finite-N error mu={mu} t={t} N={Ns[-1]}", errs[-1], 0.0, 5e-2)


def asymptotics(c: _Collector, budget: Budget):
    c.close("t* mu=0.5", moments.t_star(0.5), 4 * math.log(3), 1e-12)
    c.close("t* mu=2", moments.t_star(2.0), math.log(3), 1e-12)
    h, _, _ = moments.phase_function(0.01, 2.0)
    c.close("small-mu phase", h, math.pi + 0.01 * density.support_edge(2.0), 1e-3)
    Ns = (200, 400, 800) if budget is Budget.FULL else (200,)
    errs = []
    for N in Ns:
        asym = moments.moment_asymptotic(0.5, 1.0, N)
        exact = moments.moment_robust(_p(N, 1.0), 0.5 * N).value
        errs.append(abs(exact - asym.value) / asym.envelope)
        c.close(f"oscillatory N={N} mu=0.5 t=1", errs[-1], 0.0, 0.1)
    if len(errs) > 1:
        c.flag("oscillatory error shrinks with N", errs[-1] < errs[0], measured=errs[-1])
    k, N = 40, 2000
    scale = math.sqrt(math.pi) * density.edge_amplitude(2.0) * k ** -1.5
    c.guard("slope regime k=40 N=2000 t=2", lambda: c.close(
        "slope regime k=40 N=2000 t=2", moments.moment_robust(_p(N, 2.0), k).value,
        moments.moment_slope_regime(k, N, 2.0), 0.1 * scale))
    Ns = (100, 200, 300, 400)
    mags = [abs(moments.moment_robust(_p(n, 6.0), 0.5 * n).value) for n in Ns]
    slope = float(np.polyfit(Ns, np.log(np.maximum(mags, 1e-300)), 1)[0])
    c.flag("decay beyond t*", slope < 0, measured=slope)
    c.flag("critical regime tag", moments.moment_asymptotic(0.5, moments.t_star(0.5), 100).regime is Regime.CRITICAL)
    if budget is Budget.FULL:
        exponent, _ = moments.moment_critical_exponent(0.5, (100, 200, 400, 800))
        c.close("critical exponent", exponent, moments.CRITICAL_EXPONENT, 0.15)


def density_suite(c: _Collector, budget: Budget):
    c.close("L0(2)", density.support_edge(2.0), 1 + math.pi / 2, 1e-12)
    c.close("A(2)", density.edge_amplitude(2.0), 1 / (math.pi * math.sqrt(2)), 1e-12)
    mu_r, mu_p = density.critical_mus(6.0)
    c.close("rho(pi; 6) = mu_r", density.density_limit(6.0, math.pi), mu_r, 1e-8)
    c.flag("mu_p(0.1) > 5", density.critical_mus(0.1)[1] > 5, measured=density.critical_mus(0.1)[1])
    grid = np.linspace(-math.pi, math.pi, 200)
    diff = np.max(np.abs(np.asarray(density.density_limit(6.0, grid)) -
                         np.asarray(density.density_limit(6.0, grid, density.DensityMethod.FOURIER))))
    c.close("herglotz vs fourier t=6", float(diff), 0.0, 1e-6)
    n = 256
    x = 2 * math.pi * np.arange(n) / n - math.pi
    rho = np.asarray(density.density_limit(6.0, x))
    c.close("normalization t=6", float(rho.mean()), 1.0, 1e-8)
    for k in range(1, 11):
        c.close(f"round trip k={k}", float(np.mean(rho * np.cos(k * x))), moments.moment_limit(k, 6.0), 1e-6)
    ratio = density.edge_profile_ratios(2.0, [1e-5])[0]
    c.close("edge amplitude fit t=2", ratio, density.edge_amplitude(2.0), 0.02 * density.edge_amplitude(2.0))
    c.close("cusp exponent t=4", density.cusp_exponent_fit([1e-2, 3e-3, 1e-3]), density.CUSP_EXPONENT, 0.1)
    c.close("burgers t=1 |w|=0.9", density.burgers_residual(1.0, 0.9 * complex(math.cos(0.7), math.sin(0.7))), 0.0, 1e-4)


def _steps_to(N: int, sqrt_dt: float, t: float) -> int:
    return int(round(t / (N * sqrt_dt * sqrt_dt)))


def monte_carlo(c: _Collector, budget: Budget, threads: Optional[int] = None):
    N, n_traj = (30, 4000) if budget is Budget.FULL else (10, 300)
    checkpoints = [0.0, 1.0, 2.0, 3.6]
    config = simulate.sim_config(
        N=N, sqrt_dt=0.02, n_steps=_steps_to(N, 0.02, checkpoints[-1]), n_trajectories=n_traj, seed=20240601
    )
    table = simulate.mc_observables(config, [1, 2], checkpoints, threads=threads)
    for row in table.rows():
        r = dict(zip(table.header, row))
        k, t = int(r["k"]), r["t"]
        if t == 0.0:
            c.close(f"S({k}) at t=0", r["sff"], 0.0, 0.0)
            continue
        p = _p(N, t)
        m = moments.moment_robust(p, k).value
        c.close(f"m{k} at t={t:.3f} (standard errors)", abs(r["m_re"] - m) / r["m_stderr"], 0.0, MC_SIGMAS)
        c.close(f"Im m{k} at t={t:.3f} (standard errors)", abs(r["m_im"]) / r["m_stderr"], 0.0, MC_SIGMAS)
        c.close(f"S({k}) at t={t:.3f} (standard errors)",
                abs(r["sff"] - sff.sff_exact(p, k)) / r["sff_stderr"], 0.0, MC_SIGMAS)
    residuals = simulate.decomposition_residuals(table, N, n_traj)
    c.close("decomposition", max(abs(r) for r in residuals), 0.0, 1e-9)

    small = simulate.sim_config(N=4, sqrt_dt=0.03, n_steps=150, n_trajectories=simulate.MIN_TRAJECTORIES, seed=7)
    first = simulate.mc_observables(small, [1, 3], [0.5], threads=threads)
    second = simulate.mc_observables(small, [1, 3], [0.5], threads=1)
    c.flag("same seed, same estimates", first.rows() == second.rows())

    # about 600 angles over 32 bins
    spread = simulate.sim_config(N=N, sqrt_dt=0.02, n_steps=_steps_to(N, 0.02, 8.0), n_trajectories=600 // N, seed=11)
    final = np.concatenate([traj.angles[-1] for traj in simulate.evolve_many(spread, threads)])
    occupancy = simulate.angle_occupancy(final)
    c.flag("full circle occupied at t=8", occupancy == 1.0, measured=occupancy)


def refmodels_suite(c: _Collector, budget: Budget):
    c.close("gue char avg k=0", refmodels.gue_char_avg(50, 0.0), 50.0, 1e-12)
    c.close("gue sff limit 0.5", refmodels.gue_sff_limit(0.5), (2 / math.pi) * (0.5 * math.sqrt(0.75) + math.pi / 6), 1e-12)
    c.close("gue sff limit below 1", refmodels.gue_sff_limit(1 - 1e-9), 1.0, 1e-6)
    c.close("gue sff limit above 1", refmodels.gue_sff_limit(1 + 1e-9), 1.0, 1e-6)
    c.close("lue k=1", refmodels.lue_sff_limit(1.0), math.pi / 4, 1e-15)
    amp = 1 / (2 * math.sqrt(2 * math.pi * 200) * 0.2 ** 1.5)
    c.close("gue envelope N=200 tau=0.2", refmodels.gue_char_avg(200, refmodels.gue_wavenumber(200, 0.2)),
            refmodels.gue_char_envelope(200, 0.2), 0.1 * amp)
    dips = []
    for N in (80, 320):
        grid = np.geomspace(0.02, 0.6, 6000) if N == 80 else np.geomspace(0.01, 0.3, 12000)
        dips.append(refmodels.gue_drp_curve(N, grid).metadata.extra["tau_dip"])
    c.close("gue dip ratio 320/80", dips[1] / dips[0], 0.5, 0.075)

    N, n_mu = (400, 2400) if budget is Budget.FULL else (200, 800)
    grid = np.geomspace(0.005, 0.4, n_mu)
    sharpness = {}

    def measure(t: float):
        sharpness[t] = sff.dip_sharpness(sff.drp_curve(N, t, grid))

    for t in (2.0, 4.0, 6.0):
        c.guard(f"dip sharpness t={t}", lambda: measure(t))
    if len(sharpness) == 3:
        for t in (2.0, 4.0):
            c.flag(f"dip sharpness t={t}", True, message="log envelope contrast", measured=sharpness[t])
        c.flag("decaying slope gives the sharpest dip", sharpness[6.0] > max(sharpness[2.0], sharpness[4.0]),
               measured=sharpness[6.0])


SUITES: Dict[Suite, Callable] = {
    Suite.CLOSED_FORMS: closed_forms,
    Suite.CROSS_FORMS: cross_forms,
    Suite.PDF_ORACLE: pdf_oracle,
    Suite.LIMITS: limits,
    Suite.SCALED: scaled,
    Suite.ASYMPTOTICS: asymptotics,
    Suite.DENSITY: density_suite,
    Suite.MONTE_CARLO: monte_carlo,
    Suite.REFMODELS: refmodels_suite,
}


def run_validation(suites: List[Suite], budget: Budget = Budget.SMALL, threads: Optional[int] = None) -> ValidationReport:
    selected = list(SUITES) if Suite.ALL in suites else list(dict.fromkeys(suites))
    report = ValidationReport(budget=budget, suites=selected)
    for suite in selected:
        logger.info(f"🔍 running suite {suite.value} ({budget.value})")
        collector = _Collector(suite)
        try:
            if suite is Suite.MONTE_CARLO:
                monte_carlo(collector, budget, threads)
            else:
                SUITES[suite](collector, budget)
        except UbmotError as e:
            collector.flag("suite aborted", False, message=f"{type(e).__name__}: {e}")
        report.checks.extend(collector.checks)
        failed = sum(not ch.passed for ch in collector.checks)
        if failed:
            logger.warning(f"⚠️ suite {suite.value}: {failed} of {len(collector.checks)} checks failed")
        else:
            logger.info(f"✅ suite {suite.value}: {len(collector.checks)} checks passed")
    return report
