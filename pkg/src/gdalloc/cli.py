"""Command line surface: gen / solve / serve / eval / verify.

Exit codes: 0 success, 1 usage error, 2 data error, 3 verification failure.
"""

from __future__ import annotations

import argparse
import math
import sys

import numpy as np

from . import allocators, metrics, oracle, serving
from .model import DataError, generate_synthetic, load_instance, save_instance

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_VERIFY = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _build_parser() -> _Parser:
    parser = _Parser(prog="gdalloc",
                     description="Allocation plans for guaranteed-delivery serving")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen", help="generate a synthetic instance")
    p.add_argument("--contracts", type=int, required=True)
    p.add_argument("--samples", type=int, default=50)
    p.add_argument("--contention", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--supply-pool", type=int, default=None)
    p.add_argument("--preset", choices=["offline", "replay"], default="offline")
    p.add_argument("--out", required=True)

    p = sub.add_parser("solve", help="compute a plan from an instance")
    p.add_argument("--instance", required=True)
    p.add_argument("--algo", choices=["hwm", "shale"], default="shale")
    p.add_argument("--iters", type=int, default=20)
    p.add_argument("--warm-start", default=None, metavar="PLAN")
    p.add_argument("--one-pass", action="store_true",
                   help="disable the second Stage Two pass")
    p.add_argument("--plan-out", required=True)
    p.add_argument("--report-out", default=None)
    p.add_argument("--json-out", default=None)
    p.add_argument("--mem-report", action="store_true",
                   help="print the arc-store high-water resident bytes")

    p = sub.add_parser("serve", help="replay a log against an instance")
    p.add_argument("--instance", required=True)
    p.add_argument("--log", required=True)
    p.add_argument("--plan", default=None, help="initial plan (else solved fresh)")
    p.add_argument("--reopt-period", default="inf",
                   help="re-optimization period in log time units, or 'inf'")
    p.add_argument("--reopt-iters", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--stats-out", default=None)
    p.add_argument("--report-out", default=None)
    p.add_argument("--json-out", default=None)

    p = sub.add_parser("eval", help="evaluate a plan's expected allocation")
    p.add_argument("--instance", required=True)
    p.add_argument("--plan", required=True)
    p.add_argument("--report-out", default=None)
    p.add_argument("--json-out", default=None)

    p = sub.add_parser("verify", help="compare converged duals against the reference QP")
    p.add_argument("--instance", required=True)
    p.add_argument("--alpha-tol", type=float, default=1e-8)
    p.add_argument("--max-iters", type=int, default=100000)
    p.add_argument("--primal-tol", type=float, default=1e-4)
    p.add_argument("--kkt-tol", type=float, default=1e-4)
    p.add_argument("--iters", type=int, default=None,
                   help="run a fixed iteration count instead of converging")
    return parser


def _cmd_gen(args) -> int:
    instance = generate_synthetic(args.contracts, args.samples, args.contention,
                                  args.seed, supply_pool=args.supply_pool,
                                  penalty_preset=args.preset)
    save_instance(instance, args.out)
    print(f"wrote {args.out}: {instance.n_supply} supply, "
          f"{instance.n_demand} demand, {instance.n_arcs} arcs, "
          f"asc={metrics.asc(instance):.4f}")
    return EXIT_OK


def _cmd_solve(args) -> int:
    instance = load_instance(args.instance)
    if args.algo == "hwm":
        plan, allocation = allocators.hwm(instance)
    else:
        warm = allocators.load_plan(args.warm_start) if args.warm_start else None
        plan, allocation, _ = allocators.shale(instance, args.iters,
                                               warm_start=warm,
                                               two_pass=not args.one_pass)
    allocators.save_plan(plan, args.plan_out)
    report = metrics.compile_report(instance, allocation)
    sys.stdout.write(metrics.write_report(report, args.report_out, args.json_out))
    if args.mem_report:
        print(f"arc_store_peak_resident_bytes={instance.arcs.peak_resident_bytes}")
    return EXIT_OK


def _cmd_serve(args) -> int:
    instance = load_instance(args.instance)
    events = serving.load_log(args.log)
    period = math.inf if args.reopt_period == "inf" else float(args.reopt_period)
    initial = allocators.load_plan(args.plan) if args.plan else None
    stats, report = serving.replay(events, instance, period,
                                   iterations_per_reopt=args.reopt_iters,
                                   rng_seed=args.seed, initial_plan=initial)
    if args.stats_out:
        serving.save_stats(stats, args.stats_out)
    sys.stdout.write(metrics.write_report(report, args.report_out, args.json_out))
    return EXIT_OK


def _cmd_eval(args) -> int:
    instance = load_instance(args.instance)
    plan = allocators.load_plan(args.plan)
    allocation = allocators.allocation_from_plan(instance, plan)
    report = metrics.compile_report(instance, allocation)
    sys.stdout.write(metrics.write_report(report, args.report_out, args.json_out))
    return EXIT_OK


def _cmd_verify(args) -> int:
    instance = load_instance(args.instance)
    ref_alloc, ref_duals = oracle.solve_qp_reference(instance)
    if args.iters is None:
        state = allocators.converge(instance, alpha_tol=args.alpha_tol,
                                    max_iterations=args.max_iters)
    else:
        state = allocators.shale_stage_one(instance, allocators.cold_state(instance),
                                           args.iters)
    allocation = oracle.reconstruct_primal(instance, state.alpha)
    gaps = [abs(allocation.x.get(k, 0.0) - v) for k, v in ref_alloc.x.items()]
    primal_gap = max(gaps) if gaps else 0.0
    residual = oracle.kkt_check(instance, allocation, state)
    print(f"primal_gap={primal_gap!r}")
    print(f"kkt_max_residual={residual.max_residual()!r}")
    print(f"kkt_stationarity_x={residual.stationarity_x!r}")
    print(f"kkt_stationarity_u={residual.stationarity_u!r}")
    print(f"kkt_comp_slack={residual.comp_slack!r}")
    print(f"kkt_feasibility={residual.feasibility!r}")
    print(f"kkt_dual_feasibility={residual.dual_feasibility!r}")
    ok = primal_gap <= args.primal_tol and residual.max_residual() <= args.kkt_tol
    print("verify: PASS" if ok else "verify: FAIL")
    return EXIT_OK if ok else EXIT_VERIFY


_COMMANDS = {
    "gen": _cmd_gen,
    "solve": _cmd_solve,
    "serve": _cmd_serve,
    "eval": _cmd_eval,
    "verify": _cmd_verify,
}


def main(argv: list[str] | None = None) -> int:
    try:
        args = _build_parser().parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return _COMMANDS[args.command](args)
    except (DataError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except oracle.OracleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VERIFY


if __name__ == "__main__":
    sys.exit(main())
