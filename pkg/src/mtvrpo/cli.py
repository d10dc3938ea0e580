"""Command line: solve, generate, validate, bench."""

from __future__ import annotations

import argparse
import csv
import json
import math
import statistics
import sys
import time
from pathlib import Path

from .errors import MTVRPOError
from .instance import generate_instance, parse_instance, serialize_instance
from .problem import MODES
from .solver import INFEASIBLE, OPTIMAL, TIMEOUT, SolverConfig, solve
from .validate import validate_solution

EXIT = {OPTIMAL: 0, INFEASIBLE: 2, TIMEOUT: 3}
BENCH_HEADER = ["instance", "mode", "status", "cost", "runtime_s", "nodes", "tours_evaluated", "gcs_queries"]


def _read_instance(path: str):
    return parse_instance(Path(path).read_text())


def _write(text: str, out: str | None):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_solve(args) -> int:
    try:
        inst = _read_instance(args.instance)
        cfg = SolverConfig(args.mode, args.n_seg_tar, args.time_limit, args.threads, args.seed)
    except (OSError, MTVRPOError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    sol = solve(inst, cfg)
    _write(json.dumps(sol.to_dict(), indent=1) + "\n", args.out)
    return EXIT[sol.status]


def cmd_generate(args) -> int:
    try:
        inst = generate_instance(args.seed, args.n_tar, args.resolution, args.d_max, args.n_agt)
    except (ValueError, MTVRPOError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    _write(serialize_instance(inst) + "\n", args.out)
    return 0


def cmd_validate(args) -> int:
    try:
        inst = _read_instance(args.instance)
        sol = json.loads(Path(args.solution).read_text())
    except (OSError, ValueError, MTVRPOError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    errs = validate_solution(inst, sol)
    for e in errs:
        print(e, file=sys.stderr)
    if not errs:
        print("valid")
    return 1 if errs else 0


def _sweep_values(args) -> list[float]:
    if args.values:
        vals = [float(v) for v in args.values.split(",") if v.strip()]
    elif args.start is not None and args.stop is not None:
        vals, v = [], args.start
        while v <= args.stop + 1e-9:
            vals.append(v)
            v += args.step
    else:
        vals = []
    return vals


def cmd_bench(args, parser) -> int:
    values = _sweep_values(args)
    if not values:
        parser.error("bench: empty sweep (give --values or --start/--stop)")
    modes = [m for m in args.modes.split(",") if m]
    for m in modes:
        if m not in MODES:
            parser.error(f"bench: unknown mode {m!r}")
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    writer = csv.writer(out)
    writer.writerow(BENCH_HEADER)
    out.flush()
    runtimes: dict[tuple[float, str], list[float]] = {}
    code = 0
    try:
        for val in values:
            params = {"n_tar": args.n_tar, "resolution": args.resolution, "d_max": args.d_max}
            params[args.sweep] = val
            n_tar, res = int(params["n_tar"]), int(params["resolution"])
            d_max = params["d_max"]
            if d_max is None:
                d_max = float(math.ceil(n_tar / args.n_agt))
            for k in range(args.seeds):
                seed = args.seed + k
                inst = generate_instance(seed, n_tar, res, float(d_max), args.n_agt)
                name = f"{args.sweep}={val:g}_seed={seed}"
                for mode in modes:
                    cfg = SolverConfig(mode, args.n_seg_tar, args.time_limit, args.threads, seed)
                    t0 = time.perf_counter()
                    sol = solve(inst, cfg)
                    dt = time.perf_counter() - t0
                    runtimes.setdefault((val, mode), []).append(dt)
                    st = sol.stats
                    cost = f"{sol.total_cost:.9g}" if math.isfinite(sol.total_cost) else ""
                    writer.writerow(
                        [name, mode, sol.status, cost, f"{dt:.3f}", st.get("nodes", 0),
                         st.get("tours_evaluated", 0), st.get("gcs_queries", 0)]
                    )
                    out.flush()
    except KeyboardInterrupt:
        code = 130
    finally:
        out.flush()
        if out is not sys.stdout:
            out.close()
        print(f"{args.sweep},mode,min_s,median_s,max_s,runs", file=sys.stderr)
        for (val, mode), ts in runtimes.items():
            print(
                f"{val:g},{mode},{min(ts):.3f},{statistics.median(ts):.3f},{max(ts):.3f},{len(ts)}",
                file=sys.stderr,
            )
    return code


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mtvrpo", description="Moving-target vehicle routing among obstacles")
    sub = p.add_subparsers(dest="command", required=True)

    def solver_flags(sp):
        sp.add_argument("--mode", choices=MODES, default="lazy")
        sp.add_argument("--n-seg-tar", type=int, default=6)
        sp.add_argument("--time-limit", type=float, default=600.0)
        sp.add_argument("--threads", type=int, default=1)
        sp.add_argument("--seed", type=int, default=0)

    s = sub.add_parser("solve", help="solve an instance file")
    s.add_argument("instance")
    s.add_argument("-o", "--out")
    solver_flags(s)

    g = sub.add_parser("generate", help="write a random instance")
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--n-tar", type=int, required=True)
    g.add_argument("--resolution", type=int, required=True)
    g.add_argument("--d-max", type=float, default=None)
    g.add_argument("--n-agt", type=int, default=3)
    g.add_argument("-o", "--out")

    v = sub.add_parser("validate", help="check a solution file against an instance")
    v.add_argument("instance")
    v.add_argument("solution")

    b = sub.add_parser("bench", help="run a parameter sweep and emit CSV")
    b.add_argument("--sweep", choices=["n_tar", "resolution", "d_max"], required=True)
    b.add_argument("--values", help="comma-separated sweep values")
    b.add_argument("--start", type=float)
    b.add_argument("--stop", type=float)
    b.add_argument("--step", type=float, default=1.0)
    b.add_argument("--seeds", type=int, default=10, help="instances per sweep value")
    b.add_argument("--n-tar", type=int, default=9)
    b.add_argument("--resolution", type=int, default=30)
    b.add_argument("--d-max", type=float, default=None)
    b.add_argument("--n-agt", type=int, default=3)
    b.add_argument("--modes", default=",".join(MODES))
    b.add_argument("-o", "--out")
    solver_flags(b)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "solve":
        return cmd_solve(args)
    if args.command == "generate":
        return cmd_generate(args)
    if args.command == "validate":
        return cmd_validate(args)
    return cmd_bench(args, parser)


if __name__ == "__main__":
    sys.exit(main())
