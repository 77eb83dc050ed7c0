"""Command-line entry points: benchmark runner and service daemon."""

from __future__ import annotations

import argparse
import csv
import os
import sys
from pathlib import Path

from .problems import list_problems
from .runner import load_results, run_experiment, summarize


def bench_main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="gbbo-bench", description="Black-box optimization benchmark harness"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a benchmark experiment")
    run_p.add_argument("--problem", required=True, choices=list_problems())
    run_p.add_argument("--n", type=int, required=True, help="trials per run")
    run_p.add_argument("--algo", default="auto", choices=["auto", "random", "2xrandom"])
    run_p.add_argument("--seeds", type=int, default=10, help="number of repetitions")
    run_p.add_argument("--mode", default="sequential", help="sequential | sync-N | async-N")
    run_p.add_argument("--out", default="results", help="output directory")
    run_p.add_argument("--sim-cost", type=float, default=0.0, help="simulated seconds per evaluation")

    rep_p = sub.add_parser("report", help="aggregate result files")
    rep_p.add_argument("--in", dest="in_dir", required=True)
    rep_p.add_argument("--format", default="csv", choices=["csv"])
    rep_p.add_argument("--out", default="-", help="output path, '-' for stdout")

    args = parser.parse_args(argv)
    if args.command == "run":
        results = run_experiment(
            args.problem,
            args.algo,
            args.n,
            seeds=range(args.seeds),
            mode=args.mode,
            out_dir=args.out,
            sim_cost=args.sim_cost,
        )
        finals = [r.final_metric for r in results]
        print(
            f"{args.problem} ({args.algo}, {args.mode}): "
            f"{len(results)} seeds, final {results[0].metric_name} "
            f"median {sorted(finals)[len(finals) // 2]:.6g}"
        )
        print(f"results written to {args.out}/")
        return 0

    results = load_results(args.in_dir)
    if not results:
        print(f"no result files in {args.in_dir}", file=sys.stderr)
        return 1
    rows = summarize(results)
    out = sys.stdout if args.out == "-" else open(args.out, "w", newline="")
    try:
        writer = csv.DictWriter(
            out, fieldnames=["trial", "mean", "std", "n_seeds", "n_feasible"]
        )
        writer.writeheader()
        writer.writerows(rows)
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def serve_main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="gbbo-serve", description="Start the suggestion service"
    )
    parser.add_argument(
        "--db",
        default=os.environ.get("GBBO_DB_DIR", "gbbo-db"),
        help="task database directory (env GBBO_DB_DIR)",
    )
    parser.add_argument(
        "--addr",
        default=os.environ.get("GBBO_MASTER_ADDR", "127.0.0.1:8745"),
        help="host:port to listen on (env GBBO_MASTER_ADDR)",
    )
    parser.add_argument("--servers", type=int, default=1, help="in-process suggestion servers")
    args = parser.parse_args(argv)

    from ..service import Service, ServiceConfig, serve

    host, _, port = args.addr.rpartition(":")
    config = ServiceConfig(
        heartbeat_interval=float(os.environ.get("GBBO_HEARTBEAT_S", "2"))
    )
    service = Service(args.db, n_servers=args.servers, config=config)
    print(f"serving on http://{host or '127.0.0.1'}:{port} (db: {args.db})")
    serve(service, host or "127.0.0.1", int(port))
    return 0


if __name__ == "__main__":
    sys.exit(bench_main())
