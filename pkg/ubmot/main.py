import argparse
import shlex
import sys
import time
from typing import List, Optional

from dotenv import load_dotenv

from ubmot import __version__
from ubmot.commands.handlers import HANDLERS, default_x_grid
from ubmot.commands.output import FORMATS, render, write_output
from ubmot.schemas.density import DensityMethod
from ubmot.schemas.moments import MomentForm
from ubmot.schemas.sweep import SweepTable
from ubmot.schemas.validation import Budget, Suite
from ubmot.utils.errors import UbmotError
from ubmot.utils.logger import log_exception, logger

# Load environment variables
load_dotenv()


class CliParser(argparse.ArgumentParser):
    """Usage errors exit with status 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _common() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=FORMATS, default="csv")
    common.add_argument("--out", default=None, help="output file (default: stdout)")
    common.add_argument("--threads", type=int, default=None, help="worker processes (env UBMOT_THREADS)")
    common.add_argument("--tol", type=float, default=None)
    common.add_argument("--no-meta", action="store_true", help="omit the timestamp metadata line")
    common.add_argument("--persist", action="store_true", help="store the emitted table in DATABASE_URL")
    common.add_argument("--seed", type=int, default=0)
    return common


def build_parser() -> CliParser:
    parser = CliParser(prog="ubmot", description="Spectral statistics of Brownian motion on U(N) from the identity")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=CliParser)
    common = _common()

    p = sub.add_parser("moments", parents=[common], help="finite-N and limiting moments")
    p.add_argument("--N", required=True, help="a..b range or list")
    p.add_argument("--t", required=True, help="a:b:n grid or list")
    p.add_argument("--k", required=True, help="a..b range or list")
    p.add_argument("--form", choices=[f.value for f in MomentForm], default=MomentForm.A8b_JACOBI.value)
    p.add_argument("--extended", action="store_true", help="redo sums that lose more than 6 digits in extended precision")

    p = sub.add_parser("sff", parents=[common], help="spectral form factor")
    p.add_argument("--N", default="1")
    p.add_argument("--t", required=True)
    p.add_argument("--k", required=True)
    p.add_argument("--regime", choices=["exact", "integral", "limit", "kernel"], default="exact")

    p = sub.add_parser("sff-scaled", parents=[common], help="scaled large-N form factor on a mu grid")
    p.add_argument("--mu", required=True)
    p.add_argument("--t", required=True)
    p.add_argument("--heuristic", action="store_true", help="add the density-crossing approximation")

    p = sub.add_parser("density", parents=[common], help="limiting or finite-N spectral density")
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--x", default=default_x_grid())
    p.add_argument("--method", choices=[m.value for m in DensityMethod], default=DensityMethod.HERGLOTZ.value)
    p.add_argument("--N", default=None)

    p = sub.add_parser("edges", parents=[common], help="support edge, critical values and dip wavenumber")
    p.add_argument("--t", required=True)
    p.add_argument("--mu", default="0.5")
    p.add_argument("--N", default="100")

    for name, help_text in (("simulate", "matrix Monte Carlo trajectories"), ("mc-check", "Monte Carlo against exact values")):
        p = sub.add_parser(name, parents=[common], help=help_text)
        p.add_argument("--N", required=True)
        p.add_argument("--sqrt-dt", dest="sqrt_dt", type=float, default=0.02)
        p.add_argument("--steps", type=int, required=True)
        p.add_argument("--trajectories", type=int, default=1 if name == "simulate" else 200)
        if name == "mc-check":
            p.add_argument("--k", default="1..3")
            p.add_argument("--t", required=True, help="checkpoint times")

    p = sub.add_parser("drp-curve", parents=[common], help="dip-ramp-plateau curve")
    p.add_argument("--model", choices=["dbm", "gue"], default="dbm")
    p.add_argument("--N", required=True)
    p.add_argument("--t", type=float, default=2.0)
    p.add_argument("--mu", default="0.01:3:300")
    p.add_argument("--tau", default="0.01:1.5:300")

    p = sub.add_parser("validate", parents=[common], help="acceptance suites")
    p.add_argument("--suite", nargs="+", choices=[s.value for s in Suite], default=[Suite.ALL.value])
    p.add_argument("--budget", choices=[b.value for b in Budget], default=Budget.SMALL.value)

    p = sub.add_parser("runs", parents=[common], help="list stored runs or re-emit one")
    p.add_argument("--show", default=None, metavar="RUN_ID", help="emit the stored table of this run")
    p.add_argument("--command", dest="filter_command", default=None, help="only runs of this subcommand")
    p.add_argument("--limit", type=int, default=50)
    return parser


def _start_run(command: str, command_line: str, seed: int):
    """Open a session and record a PENDING run; returns (session, run)."""
    from ubmot.database import SessionLocal, init_db
    from ubmot.services import persistence

    init_db()
    db = SessionLocal()
    try:
        return db, persistence.start_run(db, command, command_line, seed)
    except Exception as e:
        db.close()
        log_exception(logger, "❌ failed to record the run", e)
        raise


def _finish_run(stored, table: Optional[SweepTable] = None, elapsed: float = 0.0, error: Optional[Exception] = None):
    from ubmot.services import persistence

    db, run = stored
    try:
        if error is not None:
            persistence.fail_run(db, run, error)
            logger.info(f"💾 stored failed run {run.run_id}")
        else:
            persistence.complete_run(db, run, table, elapsed)
            logger.info(f"💾 stored run {run.run_id} ({run.row_count} rows)")
    finally:
        db.close()


def main(argv: Optional[List[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    command_line = " ".join(shlex.quote(a) for a in ["ubmot"] + argv)
    stored = None
    if args.persist and args.command != "runs":
        stored = _start_run(args.command, command_line, args.seed)
    start = time.perf_counter()
    try:
        result = HANDLERS[args.command](args)
    except UbmotError as e:
        log_exception(logger, f"❌ {args.command} failed", e)
        if stored:
            _finish_run(stored, error=e)
        return e.exit_code
    except Exception as e:
        if stored:
            _finish_run(stored, error=e)
        raise
    elapsed = time.perf_counter() - start

    if args.command == "validate":
        write_output(result.model_dump_json(indent=2) + "\n", args.out)
        if stored:
            _finish_run(stored, result.to_table(), elapsed)
        return 0 if result.passed else 1

    result.metadata.command_line = result.metadata.command_line or command_line
    if args.command in ("simulate", "mc-check"):
        result.metadata.seed = args.seed
    write_output(render(result, args.format, with_timestamp=not args.no_meta), args.out)
    if stored:
        _finish_run(stored, result, elapsed)
    return 0


if __name__ == "__main__":
    sys.exit(main())
