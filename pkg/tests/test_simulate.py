import math

import numpy as np
import pytest

from ubmot.schemas.ensemble import EnsembleParams
from ubmot.schemas.sweep import SweepTable
from ubmot.services.moments import moment_robust
from ubmot.services.sff import sff_exact
from ubmot.services.simulate import (
    Accumulator,
    angle_occupancy,
    checkpoint_steps,
    decomposition_residuals,
    eigen_angles,
    evolve,
    evolve_many,
    gue_sample,
    match_angles,
    mc_observables,
    reunitarize,
    sim_config,
    step,
    trajectory_rng,
    trajectory_table,
)
from ubmot.utils.errors import DomainError, UnitarityDriftError


def test_gue_sample_variances(rng):
    samples = np.array([gue_sample(3, rng) for _ in range(4000)])
    assert np.allclose(samples, samples.conj().transpose(0, 2, 1))
    assert np.mean(samples[:, 0, 0].real ** 2) == pytest.approx(1.0, abs=0.1)
    assert np.mean(np.abs(samples[:, 0, 1]) ** 2) == pytest.approx(1.0, abs=0.1)


def test_step_is_unitary(rng):
    U = step(np.eye(5, dtype=complex), gue_sample(5, rng), 0.02)
    assert np.allclose(U.conj().T @ U, np.eye(5), atol=1e-12)


def test_reunitarize_repairs_small_drift(rng):
    U = step(np.eye(4, dtype=complex), gue_sample(4, rng), 0.02) * (1 + 1e-6)
    V = reunitarize(U)
    assert np.allclose(V.conj().T @ V, np.eye(4), atol=1e-12)


def test_reunitarize_reports_failure(monkeypatch):
    monkeypatch.setattr("ubmot.services.simulate.DRIFT_TOL", -1.0)
    with pytest.raises(UnitarityDriftError):
        reunitarize(np.eye(2, dtype=complex))


def test_reunitarize_handles_nearly_degenerate_spectrum():
    # repeated singular values close to one
    U = np.diag(np.exp(1j * np.array([0.3, 0.3, 0.3 + 1e-14, -1.2]))) * (1 + 1e-13)
    V = reunitarize(U)
    assert np.allclose(V.conj().T @ V, np.eye(4), atol=1e-12)
    assert np.allclose(V, U / (1 + 1e-13), atol=1e-12)


@pytest.mark.slow
def test_long_trajectory_at_moderate_size_stays_unitary():
    config = sim_config(N=30, sqrt_dt=0.02, n_steps=400, n_trajectories=32, seed=5)
    traj = evolve(config, index=31)
    assert traj.angles.shape[1] == 30
    assert np.all(np.isfinite(traj.angles))


def test_eigen_angles_range():
    x = eigen_angles(np.diag(np.exp(1j * np.array([math.pi, -0.5, 2.0]))))
    assert np.all(x > -math.pi) and np.all(x <= math.pi)
    assert sorted(x) == pytest.approx(sorted([math.pi, -0.5, 2.0]))


def test_match_angles_follows_continuity():
    prev = np.array([0.1, 1.0, -2.0])
    cur = np.array([-2.01, 0.12, 0.98])
    matched, disp, used_solver = match_angles(prev, cur)
    assert matched == pytest.approx([0.12, 0.98, -2.01])
    assert disp == pytest.approx(0.02)
    assert not used_solver


def test_match_angles_wraps_around_pi():
    matched, disp, _ = match_angles(np.array([3.1, 0.0]), np.array([0.0, -3.1]))
    assert matched == pytest.approx([-3.1, 0.0])
    assert disp == pytest.approx(2 * math.pi - 6.2)


def test_match_angles_falls_back_to_assignment():
    matched, _, used_solver = match_angles(np.array([0.0, 0.5]), np.array([0.45, 3.0]))
    assert used_solver
    assert matched == pytest.approx([0.45, 3.0])


def test_zero_steps_stay_at_identity():
    traj = evolve(sim_config(N=4, sqrt_dt=0.02, n_steps=0))
    assert traj.angles.shape == (1, 4)
    assert np.all(traj.angles == 0.0)
    assert traj.times.tolist() == [0.0]


def test_trajectories_are_reproducible():
    config = sim_config(N=3, sqrt_dt=0.02, n_steps=20, n_trajectories=3, seed=7)
    first = evolve_many(config, threads=1)
    again = evolve(config, index=2)
    assert np.array_equal(first[2].angles, again.angles)
    assert not np.array_equal(first[0].angles, first[1].angles)


def test_streams_depend_on_seed_and_index():
    a = trajectory_rng(1, 0).standard_normal(3)
    assert np.array_equal(a, trajectory_rng(1, 0).standard_normal(3))
    assert not np.array_equal(a, trajectory_rng(1, 1).standard_normal(3))
    assert not np.array_equal(a, trajectory_rng(2, 0).standard_normal(3))


def test_time_scaling():
    config = sim_config(N=5, sqrt_dt=0.02, n_steps=10)
    traj = evolve(config)
    assert traj.times[-1] == pytest.approx(10 * 5 * 0.02 ** 2)
    assert config.total_time == pytest.approx(traj.times[-1])


def test_trajectory_table_columns():
    config = sim_config(N=2, sqrt_dt=0.02, n_steps=3, n_trajectories=2)
    single = trajectory_table([evolve(config)])
    assert single.header == ["step", "t", "angle_index", "angle"]
    assert len(single) == 4 * 2
    multi = trajectory_table(evolve_many(config, threads=1))
    assert multi.header[0] == "trajectory"
    assert len(multi) == 2 * 4 * 2


def test_step_size_is_limited():
    with pytest.raises(DomainError):
        evolve(sim_config(N=2, sqrt_dt=0.1, n_steps=1))


def test_invalid_config():
    with pytest.raises(DomainError):
        sim_config(N=0, sqrt_dt=0.02, n_steps=1)


def test_checkpoints_beyond_simulated_time():
    config = sim_config(N=2, sqrt_dt=0.02, n_steps=10)
    with pytest.raises(DomainError):
        checkpoint_steps(config, [1.0])


def test_accumulator_merge_is_associative(rng):
    xs = [rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2)) for _ in range(9)]
    whole = Accumulator((2, 2))
    parts = [Accumulator((2, 2)) for _ in range(3)]
    for i, x in enumerate(xs):
        whole.add(x)
        parts[i % 3].add(x)
    merged = parts[0].merge(parts[1]).merge(parts[2])
    assert merged.n == whole.n
    assert np.allclose(merged.covariance(), whole.covariance())
    assert np.allclose(merged.mean(), whole.mean())


def test_identity_start_observables():
    config = sim_config(N=3, sqrt_dt=0.02, n_steps=5, n_trajectories=100)
    table = mc_observables(config, [1, 2], [0.0], threads=1)
    assert table.column("m_re") == pytest.approx([1.0, 1.0])
    assert table.column("sff") == pytest.approx([0.0, 0.0], abs=1e-12)


def test_mc_needs_enough_trajectories():
    with pytest.raises(DomainError):
        mc_observables(sim_config(N=2, sqrt_dt=0.02, n_steps=5, n_trajectories=10), [1], [0.0])


def test_decomposition_holds_exactly():
    config = sim_config(N=3, sqrt_dt=0.02, n_steps=30, n_trajectories=100, seed=3)
    table = mc_observables(config, [1, 2], [0.012, 0.036], threads=1)
    assert max(abs(r) for r in decomposition_residuals(table, 3, 100)) < 1e-10


def test_decomposition_on_hand_built_table():
    table = SweepTable.from_rows(["sff", "m_re", "m_im", "abs2_mean"], [(1.0, 0.5, 0.0, 0.99 + 1.0)])
    assert decomposition_residuals(table, 2, 100) == pytest.approx([0.0])


@pytest.mark.slow
def test_monte_carlo_matches_exact_first_moment_and_sff():
    config = sim_config(N=4, sqrt_dt=0.02, n_steps=320, n_trajectories=200, seed=11)
    t = 320 * config.time_per_step
    table = mc_observables(config, [1], [t], threads=1)
    m, m_err = table.column("m_re")[0], table.column("m_stderr")[0]
    s, s_err = table.column("sff")[0], table.column("sff_stderr")[0]
    assert abs(m - math.exp(-t / 2)) < 4 * m_err
    assert abs(s + math.expm1(-t)) < 4 * s_err


def test_angle_occupancy_counts_filled_bins():
    assert angle_occupancy(np.zeros(10), n_bins=4) == 0.25
    assert angle_occupancy(np.linspace(-3.0, 3.0, 8), n_bins=8) == 1.0
    # unwrapped angles fold back onto the circle
    assert angle_occupancy(np.array([0.1 + 2 * math.pi, 0.1]), n_bins=8) == 0.125


@pytest.mark.slow
def test_angles_fill_the_circle_by_t8():
    config = sim_config(N=10, sqrt_dt=0.02, n_steps=2000, n_trajectories=60, seed=11)
    final = np.concatenate([traj.angles[-1] for traj in evolve_many(config, threads=1)])
    assert angle_occupancy(final) == 1.0


@pytest.mark.slow
def test_halving_the_step_keeps_the_estimates_consistent():
    estimates = []
    for sqrt_dt, n_steps in ((0.02, 625), (0.02 / math.sqrt(2), 1250)):
        config = sim_config(N=4, sqrt_dt=sqrt_dt, n_steps=n_steps, n_trajectories=200, seed=17)
        table = mc_observables(config, [1], [1.0], threads=1)
        estimates.append((table.column("m_re")[0], table.column("m_stderr")[0]))
    for m, err in estimates:
        assert abs(m - math.exp(-0.5)) < 4 * err
    (a, ea), (b, eb) = estimates
    assert abs(a - b) < 4 * math.hypot(ea, eb)


@pytest.mark.slow
def test_monte_carlo_matches_exact_moments_at_N30():
    config = sim_config(N=30, sqrt_dt=0.02, n_steps=300, n_trajectories=400, seed=23)
    ts = [84 * config.time_per_step, 300 * config.time_per_step]
    table = mc_observables(config, [1, 2], ts, threads=1)
    for row in table.rows():
        r = dict(zip(table.header, row))
        p = EnsembleParams.of(30, r["t"])
        assert abs(r["m_re"] - moment_robust(p, int(r["k"])).value) < 4 * r["m_stderr"]
        assert abs(r["sff"] - sff_exact(p, int(r["k"]))) < 4 * r["sff_stderr"]
