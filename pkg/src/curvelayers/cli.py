"""Command line driver: run scenarios, order studies, and resonance sweeps."""

import argparse
import sys

from . import harness


def main(argv=None):
    parser = argparse.ArgumentParser(prog="curvelayers", description="Layered-ansatz pipeline driver")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario file or builtin name")
    p_run.add_argument("scenario", help="path to a scenario JSON or a builtin name")
    p_run.add_argument("--out", default="runs", help="output directory")
    p_run.add_argument("--tier", type=int, default=None, help="override the ansatz tier")
    p_run.add_argument("--stages", default=None, help="comma-separated stage list")

    p_ord = sub.add_parser("order-study", help="epsilon-order fit of a residual quantity")
    p_ord.add_argument("scenario")
    p_ord.add_argument("--quantity", required=True, choices=["interior_L2", "interior_sup", "boundary_L2", "projection"])
    p_ord.add_argument("--out", default="runs")
    p_ord.add_argument("--tier", type=int, default=None)

    p_gap = sub.add_parser("gap-sweep", help="resonance margin and amplitude sweep")
    p_gap.add_argument("--p", type=float, required=True)
    p_gap.add_argument("--eps-min", type=float, required=True)
    p_gap.add_argument("--eps-max", type=float, required=True)
    p_gap.add_argument("--c", type=float, default=0.5)
    p_gap.add_argument("--n", type=int, default=200)
    p_gap.add_argument("--out", default="runs")

    args = parser.parse_args(argv)
    if args.command == "run":
        stages = args.stages.split(",") if args.stages else None
        result = harness.run_scenario(args.scenario, args.out, tier=args.tier, stages=stages)
        for stage, info in result.summary["stages"].items():
            status = "pass" if info.get("passed") else "FAIL"
            print(f"[{status}] {stage}")
        print(f"summary: {result.outdir}/summary.json")
        return result.exit_code
    if args.command == "order-study":
        res = harness.order_study(args.scenario, args.quantity, outdir=args.out, tier=args.tier)
        print(f"{args.quantity} tier {res['tier']}: slope = {res['slope']:.4f} (+- {res['confidence_half_width']:.4f})")
        if res["target"] is not None:
            print(f"target: {res['target']}")
        return 0
    if args.command == "gap-sweep":
        rows = harness.gap_sweep(args.p, args.eps_min, args.eps_max, n=args.n, c=args.c, outdir=args.out)
        print(f"swept {rows.shape[0]} epsilon values; table written to {args.out}/gap_sweep.txt")
        return 0
    return 2


if __name__ == "__main__":
    sys.exit(main())
