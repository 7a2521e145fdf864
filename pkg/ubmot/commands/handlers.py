"""One handler per subcommand. Each returns the SweepTable (or report) to emit."""
import math
import uuid
from argparse import Namespace
from typing import Optional, Tuple

from ubmot.commands.parsing import parse_int_range, parse_real_grid
from ubmot.schemas.density import DensityMethod
from ubmot.schemas.ensemble import EnsembleParams
from ubmot.schemas.moments import MomentForm
from ubmot.schemas.sweep import SweepTable
from ubmot.schemas.validation import Budget, Suite, ValidationReport
from ubmot.services import density, moments, refmodels, sff, simulate
from ubmot.services.parallel import run_cells
from ubmot.services.specfun import decay_exponent
from ubmot.services.validation import run_validation
from ubmot.utils.errors import DomainError
from ubmot.utils.logger import logger

VALUE_COLUMNS = ["value", "method", "err_estimate"]


# --- worker functions (module level so the process pool can pickle them) ---


def _moment_cell(cell: Tuple[int, float, int, str, bool]) -> tuple:
    N, t, k, form, extended = cell
    params = EnsembleParams.of(N, t)
    form = MomentForm(form)
    if form is MomentForm.A8b_JACOBI:
        m = moments.moment_robust(params, k)
    else:
        m = moments.moment_finite_detail(params, k, form, extended=extended)
    return (N if m.N is not None else None, t, k, m.value, m.method, m.err_estimate)


def _sff_cell(cell: Tuple[Optional[int], float, int, str, float]) -> tuple:
    N, t, k, regime, tol = cell
    if regime == "limit":
        return (None, t, k, sff.sff_fixed_k_limit(k, t), "fixed-k-limit", 0.0)
    params = EnsembleParams.of(N, t)
    if regime == "integral":
        return (N, t, k, sff.sff_integral_form(params, k, tol), "integral", tol)
    if regime == "kernel":
        return (N, t, k, sff.sff_kernel_oracle(params, k), "kernel-oracle", 0.0)
    v = sff.sff_exact_detail(params, k, tol)
    return (N, t, k, v.value, v.method, v.err_estimate)


def _scaled_cell(cell: Tuple[float, float, float, bool]) -> tuple:
    mu, t, tol, heuristic = cell
    v = sff.sff_scaled_limit_detail(mu, t, tol)
    row = (mu, t, v.value, v.method, v.err_estimate)
    if heuristic:
        row += (sff.sff_heuristic(mu, t),)
    return row


# --- handlers ---


def _single_N(args: Namespace) -> int:
    values = parse_int_range(args.N)
    if len(values) != 1:
        raise DomainError(f"--N takes a single value here, got {args.N!r}")
    return values[0]


def handle_moments(args: Namespace) -> SweepTable:
    Ns = parse_int_range(args.N)
    ts = parse_real_grid(args.t)
    ks = parse_int_range(args.k)
    form = MomentForm(args.form).value
    logger.info(f"🚀 moments: {len(Ns) * len(ts) * len(ks)} cells, form={form}")
    cells = [(N, t, k, form, args.extended) for N in Ns for t in ts for k in ks]
    rows = run_cells(_moment_cell, cells, args.threads)
    logger.info(f"✅ moments: {len(rows)} rows")
    return SweepTable.from_rows(["N", "t", "k"] + VALUE_COLUMNS, rows)


def handle_sff(args: Namespace) -> SweepTable:
    Ns = [None] if args.regime == "limit" else parse_int_range(args.N)
    ts = parse_real_grid(args.t)
    ks = parse_int_range(args.k)
    logger.info(f"🚀 sff ({args.regime}): {len(Ns) * len(ts) * len(ks)} cells")
    cells = [(N, t, k, args.regime, args.tol or sff.DEFAULT_TOL) for N in Ns for t in ts for k in ks]
    rows = run_cells(_sff_cell, cells, args.threads)
    logger.info(f"✅ sff: {len(rows)} rows")
    return SweepTable.from_rows(["N", "t", "k"] + VALUE_COLUMNS, rows)


def handle_sff_scaled(args: Namespace) -> SweepTable:
    mus = parse_real_grid(args.mu)
    ts = parse_real_grid(args.t)
    cells = [(mu, t, args.tol or 1e-12, args.heuristic) for mu in mus for t in ts]
    logger.info(f"🚀 sff-scaled: {len(cells)} cells")
    rows = run_cells(_scaled_cell, cells, args.threads)
    header = ["mu", "t"] + VALUE_COLUMNS + (["heuristic"] if args.heuristic else [])
    return SweepTable.from_rows(header, rows)


def handle_density(args: Namespace) -> SweepTable:
    grid = parse_real_grid(args.x)
    method = DensityMethod(args.method)
    N = _single_N(args) if method is DensityMethod.FINITE else None
    logger.info(f"🚀 density t={args.t}, {len(grid)} points, method={method.value}")
    profile = density.density_profile(args.t, grid, method, N=N, tol=args.tol or 1e-14)
    table = SweepTable.from_rows(["x", "rho"], list(zip(profile.grid, profile.values)))
    table.metadata.extra.update({"t": args.t, "method": method.value, "support_edge": profile.support_edge})
    if profile.edge_amplitude is not None:
        table.metadata.extra["edge_amplitude"] = profile.edge_amplitude
    if N is not None:
        table.metadata.extra["N"] = N
    return table


def _edge_row(t: float, mu: float, N: int) -> tuple:
    mu_r, mu_p = density.critical_mus(t)
    below = t < 4.0
    return (
        t,
        mu,
        moments.t_star(mu),
        density.support_edge(t) if below else None,
        density.edge_amplitude(t) if below else None,
        mu_r,
        mu_p,
        decay_exponent(t) if t > 4.0 else None,
        density.dip_wavenumber(t, N),
    )


def handle_edges(args: Namespace) -> SweepTable:
    N = _single_N(args)
    rows = [_edge_row(t, mu, N) for t in parse_real_grid(args.t) for mu in parse_real_grid(args.mu)]
    table = SweepTable.from_rows(["t", "mu", "t_star", "L0", "A", "mu_r", "mu_p", "c", "k_dip"], rows)
    table.metadata.extra["N"] = N
    return table


def _sim_config(args: Namespace):
    return simulate.sim_config(
        N=_single_N(args),
        sqrt_dt=args.sqrt_dt,
        n_steps=args.steps,
        n_trajectories=args.trajectories,
        seed=args.seed,
    )


def handle_simulate(args: Namespace) -> SweepTable:
    config = _sim_config(args)
    logger.info(f"🚀 simulate N={config.N}, {config.n_steps} steps to t={config.total_time:.6g}, {config.n_trajectories} trajectories")
    trajectories = simulate.evolve_many(config, args.threads)
    worst = max(tr.max_displacement for tr in trajectories)
    fallbacks = sum(tr.assignment_fallbacks for tr in trajectories)
    if fallbacks:
        logger.warning(f"⚠️ angle matching used the assignment solver {fallbacks} times")
    table = simulate.trajectory_table(trajectories, seed=config.seed)
    table.metadata.extra.update({"N": config.N, "sqrt_dt": config.sqrt_dt, "max_displacement": worst})
    logger.info(f"✅ simulate: {len(table)} rows")
    return table


def handle_mc_check(args: Namespace) -> SweepTable:
    config = _sim_config(args)
    ks = parse_int_range(args.k)
    ts = parse_real_grid(args.t)
    logger.info(f"🚀 mc-check N={config.N}, {config.n_trajectories} trajectories, k={ks}, t={ts}")
    table = simulate.mc_observables(config, ks, ts, threads=args.threads)
    m_exact, s_exact, m_z, s_z = [], [], [], []
    for k, t, m_re, m_err, s, s_err in zip(
        table.column("k"), table.column("t"), table.column("m_re"),
        table.column("m_stderr"), table.column("sff"), table.column("sff_stderr"),
    ):
        params = EnsembleParams.of(config.N, t)
        me = moments.moment_robust(params, k).value
        se = sff.sff_exact(params, k)
        m_exact.append(me)
        s_exact.append(se)
        m_z.append((m_re - me) / m_err if m_err > 0 else 0.0)
        s_z.append((s - se) / s_err if s_err > 0 else 0.0)
    table.columns.update({"m_exact": m_exact, "sff_exact": s_exact, "m_z": m_z, "sff_z": s_z})
    worst = max((abs(z) for z in m_z + s_z), default=0.0)
    table.metadata.extra["max_abs_z"] = worst
    logger.info(f"✅ mc-check: largest deviation {worst:.2f} standard errors")
    return table


def handle_drp_curve(args: Namespace) -> SweepTable:
    N = _single_N(args)
    if args.model == "gue":
        grid = parse_real_grid(args.tau)
        logger.info(f"🚀 drp-curve (gue) N={N}, {len(grid)} points")
        return refmodels.gue_drp_curve(N, grid)
    grid = parse_real_grid(args.mu)
    logger.info(f"🚀 drp-curve (dbm) N={N}, t={args.t}, {len(grid)} points")
    table = sff.drp_curve(N, float(args.t), grid, tol=args.tol or 1e-12)
    logger.info(f"✅ drp-curve: dip at mu={table.metadata.extra['mu_dip']:.6g}")
    return table


def handle_validate(args: Namespace) -> ValidationReport:
    suites = [Suite(s) for s in args.suite]
    report = run_validation(suites, Budget(args.budget), threads=args.threads)
    if report.passed:
        logger.info(f"✅ validation passed ({len(report.checks)} checks)")
    else:
        logger.error(f"❌ validation failed: {report.failures} of {len(report.checks)} checks")
    return report


def handle_runs(args: Namespace) -> SweepTable:
    """Stored runs, newest first, or the table of one run with --show."""
    from ubmot.database import get_db, init_db
    from ubmot.services import persistence

    init_db()
    with get_db() as db:
        if args.show:
            try:
                run_id = uuid.UUID(args.show)
            except ValueError as e:
                raise DomainError(f"not a run id: {args.show!r}") from e
            run = persistence.get_run(db, run_id)
            if run is None:
                raise DomainError(f"no stored run {run_id}")
            logger.info(f"🔍 run {run_id}: {run.command}, status={run.run_status}, {run.row_count} rows")
            table = persistence.table_from_run(run)
            table.metadata.command_line = run.command_line or ""
            table.metadata.extra.update({"run_id": str(run.run_id), "run_status": run.run_status})
            return table
        runs = persistence.list_runs(db, command=args.filter_command, limit=args.limit)
        rows = [
            (str(r.run_id), r.command, r.run_status, r.row_count, r.seed,
             r.created_at.isoformat() if r.created_at else "",
             float(r.computation_time_seconds) if r.computation_time_seconds is not None else None,
             r.error_message or "")
            for r in runs
        ]
    logger.info(f"✅ runs: {len(rows)} stored runs")
    header = ["run_id", "command", "status", "rows", "seed", "created_at", "seconds", "error"]
    return SweepTable.from_rows(header, rows)


HANDLERS = {
    "moments": handle_moments,
    "sff": handle_sff,
    "sff-scaled": handle_sff_scaled,
    "density": handle_density,
    "edges": handle_edges,
    "simulate": handle_simulate,
    "mc-check": handle_mc_check,
    "drp-curve": handle_drp_curve,
    "validate": handle_validate,
    "runs": handle_runs,
}


def default_x_grid() -> str:
    return f"{-math.pi!r}:{math.pi!r}:201"
