"""Command-line front end: solve, generate-biq, compare, diagnose."""

import argparse
import os
import sys

import numpy as np

from . import io as pio
from . import plots
from .admm_core import SolverConfig, solve
from .baseline import DirectSpadmm
from .diagnostics import complexity_trend, kkt_distance
from .errors import CertificateError, DivergenceError, InnerSolverContractError
from .qsdp import build_dual_blocks, random_biq

EXIT_OK = 0
EXIT_NOT_CONVERGED = 1
EXIT_DIVERGED = 3
EXIT_CONTRACT = 4


def _add_solver_flags(sp):
    sp.add_argument("--problem", required=True, help="problem JSON path")
    sp.add_argument("--tol", type=float, default=1e-6)
    sp.add_argument("--max-iter", type=int, default=25000)
    sp.add_argument("--tau", type=float, default=1.618)
    sp.add_argument("--sigma", type=float, default=1.0)
    sp.add_argument("--eps0", type=float, default=None)
    sp.add_argument("--skip-factor", type=float, default=1.0)
    sp.add_argument("--precond-rank", type=int, default=5)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--sigma-adapt", action="store_true")
    sp.add_argument("--log", default=None, help="CSV iteration-log path")
    sp.add_argument("--summary", default=None, help="summary JSON path")
    sp.add_argument("--no-figures", action="store_true")
    sp.add_argument("--track-kkt-distance", action="store_true")


def build_parser():
    ap = argparse.ArgumentParser(
        prog="sgsadmm",
        description="Multi-block ADMM solver for conic quadratic SDPs via one "
        "symmetric Gauss-Seidel cycle per group of blocks",
    )
    sub = ap.add_subparsers(dest="mode", required=True)

    sp = sub.add_parser("solve", help="solve a problem file")
    _add_solver_flags(sp)
    sp.add_argument(
        "--algorithm",
        choices=["sgs-imspadmm", "spadmm-direct"],
        default="sgs-imspadmm",
    )

    gb = sub.add_parser("generate-biq", help="write a random binary-quadratic relaxation")
    gb.add_argument("--n", type=int, required=True, help="lifted matrix order")
    gb.add_argument("--seed", type=int, default=0)
    gb.add_argument(
        "--q-kind",
        choices=["vacuous", "sym-kronecker", "lyapunov", "explicit"],
        default="vacuous",
    )
    gb.add_argument("--out", required=True)

    cp = sub.add_parser("compare", help="run both algorithms and report the iteration ratio")
    _add_solver_flags(cp)

    dg = sub.add_parser("diagnose", help="solve while recording the KKT-distance trend")
    _add_solver_flags(dg)
    return ap


def _config(args):
    return SolverConfig(
        sigma=args.sigma,
        tau=args.tau,
        tol=args.tol,
        max_iter=args.max_iter,
        eps0=args.eps0,
        skip_factor=args.skip_factor,
        sigma_adapt=args.sigma_adapt,
    )


def _run_sgs(problem, args, track_dw):
    assembly = build_dual_blocks(problem, args.sigma, l_precond=args.precond_rank)
    tb = assembly.two_block
    dw_fn = (lambda st: kkt_distance(tb, st)) if track_dw else None
    sink = pio.CsvLogWriter(args.log) if args.log else None
    try:
        report = solve(tb, _config(args), assembly.residual_fn, log_sink=sink, dw_fn=dw_fn)
    finally:
        if sink is not None:
            sink.close()
    return report


def _render_figures(args):
    if args.log and not args.no_figures:
        rows = pio.read_log(args.log)
        if rows:
            base, _ = os.path.splitext(args.log)
            plots.render_convergence(rows, base + "_residuals.png")
            plots.render_trend(rows, base + "_trend.png")


def _finish(report, args, algorithm):
    summary = pio.summarize_report(report, algorithm)
    if args.summary:
        pio.write_summary(args.summary, summary)
    _render_figures(args)
    eta = report.final_residuals.get("eta", np.inf)
    print(
        "%s: %s after %d iterations, eta=%.3e, time=%.2fs"
        % (
            algorithm,
            "converged" if report.converged else "NOT converged",
            report.iterations,
            eta,
            report.wall_time,
        )
    )
    return EXIT_OK if report.converged else EXIT_NOT_CONVERGED


def cmd_solve(args):
    problem = pio.load_problem(args.problem)
    if args.algorithm == "spadmm-direct":
        driver = DirectSpadmm(
            problem, sigma=args.sigma, tau=args.tau, l_precond=args.precond_rank
        )
        sink = pio.CsvLogWriter(args.log) if args.log else None
        try:
            report = driver.solve(tol=args.tol, max_iter=args.max_iter, log_sink=sink)
        finally:
            if sink is not None:
                sink.close()
        _render_figures(args)
        summary = pio.summarize_report(report, "spadmm-direct")
        if args.summary:
            pio.write_summary(args.summary, summary)
        print(
            "spadmm-direct: %s after %d iterations, eta=%.3e"
            % (
                "converged" if report.converged else "NOT converged",
                report.iterations,
                report.final_residuals.get("eta", np.inf),
            )
        )
        return EXIT_OK if report.converged else EXIT_NOT_CONVERGED
    report = _run_sgs(problem, args, args.track_kkt_distance)
    return _finish(report, args, "sgs-imspadmm")


def cmd_generate_biq(args):
    problem = random_biq(args.n, seed=args.seed, q_kind=args.q_kind)
    pio.save_problem(problem, args.out)
    print(
        "wrote %s: n=%d, m_E=%d, m_I=%d, Q=%s"
        % (args.out, problem.n, problem.m_E, problem.m_I, problem.Q.kind)
    )
    return EXIT_OK


def cmd_compare(args):
    problem = pio.load_problem(args.problem)
    saved_log = args.log
    args.log = None
    report_sgs = _run_sgs(problem, args, False)
    args.log = saved_log
    driver = DirectSpadmm(problem, sigma=args.sigma, tau=args.tau, l_precond=args.precond_rank)
    report_base = driver.solve(tol=args.tol, max_iter=args.max_iter)
    summaries = {
        "sgs-imspadmm": pio.summarize_report(report_sgs, "sgs-imspadmm"),
        "spadmm-direct": pio.summarize_report(report_base, "spadmm-direct"),
    }
    if args.summary:
        pio.write_summary(args.summary, summaries)
    for name, s in summaries.items():
        print(
            "%s: %s in %d iterations (%.2fs)"
            % (name, "converged" if s["converged"] else "NOT converged", s["iterations"], s["wall_time_s"])
        )
    if report_sgs.iterations > 0:
        print(
            "iteration ratio (direct / sgs): %.2f"
            % (report_base.iterations / max(report_sgs.iterations, 1))
        )
    ok = report_sgs.converged and report_base.converged
    return EXIT_OK if ok else EXIT_NOT_CONVERGED


def cmd_diagnose(args):
    problem = pio.load_problem(args.problem)
    report = _run_sgs(problem, args, True)
    dvals = [r.Dw for r in report.records if np.isfinite(r.Dw)]
    if dvals:
        series, decreasing = complexity_trend(dvals)
        print(
            "KKT-distance trend: final k*minD = %.3e, %s"
            % (series[-1], "decreasing" if decreasing else "NOT decreasing")
        )
    print("certificate audit: %s" % ("pass" if report.certificate_audit_pass else "FAIL"))
    for key, val in sorted(report.final_residuals.items()):
        if isinstance(val, float):
            print("  %s = %.6e" % (key, val))
    code = _finish(report, args, "sgs-imspadmm")
    return code


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.mode == "solve":
            return cmd_solve(args)
        if args.mode == "generate-biq":
            return cmd_generate_biq(args)
        if args.mode == "compare":
            return cmd_compare(args)
        return cmd_diagnose(args)
    except DivergenceError as exc:
        print("divergence detected: %s" % exc, file=sys.stderr)
        return EXIT_DIVERGED
    except (CertificateError, InnerSolverContractError) as exc:
        print("solver contract violation: %s" % exc, file=sys.stderr)
        return EXIT_CONTRACT
    except ValueError as exc:
        print("invalid configuration: %s" % exc, file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
