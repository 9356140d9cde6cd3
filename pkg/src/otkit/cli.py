"""Command-line front end: file ingestion, solver dispatch, result emission.

Subcommands: ``dist`` (pairwise transport), ``barycenter`` (fixed-grid
entropic barycenter), ``interpolate`` (McCann or dynamic displacement) and
``plotdata`` (turn saved run traces into plain CSV series).

File conventions: histograms are one weight per line (a ``# normalize``
directive rescales to total mass one); point clouds are d coordinate
columns followed by a weight column; cost matrices are dense row-major CSV;
grid rasters are dense row-major CSV with a ``# shape: n1,n2`` header.
All outputs are deterministic for a fixed seed: measured runtimes are only
echoed on stdout, never written into files.  Exit codes: 0 ok, 2 input
error, 3 solver non-convergence.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from . import barycenter as bc
from . import closed_form, dynamic, entropic, exact
from .core import CostMatrix, DiscreteMeasure, Histogram

SCHEMA = 1
EXIT_INPUT = 2
EXIT_NOCONV = 3


class InputError(Exception):
    pass


def _fmt(x: float) -> str:
    return repr(float(x))


def read_histogram(path: str) -> Histogram:
    normalize = False
    values = []
    try:
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                if line.startswith("#"):
                    if "normalize" in line:
                        normalize = True
                    continue
                values.append(float(line))
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot read histogram {path}: {exc}") from exc
    if not values:
        raise InputError(f"histogram file {path} is empty")
    try:
        return Histogram(np.array(values), normalize=normalize)
    except ValueError as exc:
        raise InputError(f"bad histogram in {path}: {exc}") from exc


def read_points(path: str) -> DiscreteMeasure:
    rows = []
    try:
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                rows.append([float(tok) for tok in line.split(",")])
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot read point cloud {path}: {exc}") from exc
    if not rows:
        raise InputError(f"point file {path} is empty")
    arr = np.array(rows)
    if arr.shape[1] < 2:
        raise InputError(f"{path}: need coordinates plus a weight column")
    try:
        return DiscreteMeasure(
            arr[:, :-1], Histogram(arr[:, -1], normalize=True)
        )
    except ValueError as exc:
        raise InputError(f"bad point cloud in {path}: {exc}") from exc


def read_matrix(path: str) -> np.ndarray:
    rows = []
    try:
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                rows.append([float(tok) for tok in line.split(",")])
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot read matrix {path}: {exc}") from exc
    if not rows:
        raise InputError(f"matrix file {path} is empty")
    return np.array(rows)


def read_raster(path: str) -> np.ndarray:
    shape = None
    rows = []
    try:
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                if line.startswith("#"):
                    if "shape:" in line:
                        dims = line.split("shape:")[1].strip()
                        shape = tuple(int(t) for t in dims.split(","))
                    continue
                rows.append([float(tok) for tok in line.split(",")])
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot read raster {path}: {exc}") from exc
    if not rows:
        raise InputError(f"raster file {path} is empty")
    arr = np.array(rows)
    if shape is not None:
        arr = arr.reshape(shape)
    elif arr.shape[0] == 1:
        arr = arr.ravel()
    return arr


def write_histogram(path: str, weights: np.ndarray) -> None:
    with open(path, "w") as fh:
        for w in weights:
            fh.write(_fmt(w) + "\n")


def write_plan_triplets(path: str, plan: np.ndarray, threshold: float = 1e-12):
    with open(path, "w") as fh:
        fh.write("i,j,mass\n")
        for i, j in zip(*np.nonzero(plan > threshold)):
            fh.write(f"{i},{j},{_fmt(plan[i, j])}\n")


def _emit(report: dict, output: str | None, runtime_ms: float) -> None:
    payload = dict(report)
    if output:
        with open(output, "w") as fh:
            json.dump(payload, fh, sort_keys=True, indent=2)
            fh.write("\n")
    payload["runtime_ms"] = runtime_ms
    print(json.dumps(payload, sort_keys=True))


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--tol", type=float, default=1e-9)
    parser.add_argument("--max-iter", type=int, default=None)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--output", type=str, default=None, help="JSON report path")
    parser.add_argument(
        "--threads",
        type=int,
        default=int(os.environ.get("OTKIT_THREADS", "1")),
        help="internal worker count (default 1, mirrors OTKIT_THREADS)",
    )


def cmd_dist(args) -> int:
    t0 = time.perf_counter()
    if args.cost:
        C = CostMatrix(read_matrix(args.cost))
        a = read_histogram(args.a)
        b = read_histogram(args.b)
    elif args.source and args.target:
        src = read_points(args.source)
        tgt = read_points(args.target)
        from .core import build_cost

        C = build_cost(src, tgt, power=args.power)
        a, b = src.weights, tgt.weights
    else:
        raise InputError("provide either --cost with --a/--b, or --source/--target")
    if C.shape != (len(a), len(b)):
        raise InputError("cost shape does not match the histograms")

    converged = True
    iterations = 0
    plan = None
    if args.method == "exact":
        value, tplan, duals, iterations = exact.network_simplex(a, b, C)
        plan = tplan.matrix
        residuals = [0.0, 0.0]
    elif args.method == "dual-ascent":
        value, duals, tplan = exact.dual_ascent(a, b, C)
        plan = tplan.matrix
        residuals = [0.0, 0.0]
    elif args.method == "auction":
        if C.shape[0] != C.shape[1]:
            raise InputError("auction needs a square cost matrix")
        sigma, prices, cost = exact.auction_scaled(C, args.epsilon)
        value = cost / C.shape[0]
        plan = np.zeros(C.shape)
        plan[np.arange(C.shape[0]), sigma] = 1.0 / C.shape[0]
        residuals = [0.0, 0.0]
    elif args.method in ("sinkhorn", "sinkhorn-log"):
        if args.epsilon <= 0:
            raise InputError("sinkhorn needs --epsilon > 0")
        use_log = args.method == "sinkhorn-log" or args.epsilon < 1e-2 * max(
            C.max_abs, 1e-300
        )
        if use_log:
            _, tplan, rep = entropic.sinkhorn_log(
                a, b, C, args.epsilon, tol=args.tol,
                max_iter=args.max_iter,
            )
        else:
            _, tplan, rep = entropic.sinkhorn(
                a, b, C, args.epsilon, tol=args.tol,
                max_iter=args.max_iter,
            )
        value = rep.primal_divergence
        plan = tplan.matrix
        converged = rep.converged
        iterations = rep.iterations
        residuals = [rep.residual_row, rep.residual_col]
    else:
        raise InputError(f"unknown method {args.method!r}")

    report = {
        "schema": SCHEMA,
        "command": "dist",
        "method": args.method,
        "value": value,
        "iterations": iterations,
        "marginal_residuals": residuals,
        "converged": converged,
        "tol": args.tol,
        "max_iter": args.max_iter,
        "seed": args.seed,
        "threads": args.threads,
        "epsilon": args.epsilon,
    }
    if args.method in ("sinkhorn", "sinkhorn-log"):
        report["trace"] = {"kind": "sinkhorn", "residuals": list(rep.residual_history)}
    if args.emit_plan:
        base = args.output or "dist"
        write_plan_triplets(os.path.splitext(base)[0] + ".plan.csv", plan)
    _emit(report, args.output, (time.perf_counter() - t0) * 1e3)
    return 0 if converged else EXIT_NOCONV


def cmd_barycenter(args) -> int:
    t0 = time.perf_counter()
    hists = [read_histogram(p) for p in args.input]
    C = CostMatrix(read_matrix(args.cost))
    lam = None
    lam_given = args.lam is not None and len(args.lam) > 0
    if lam_given:
        if len(args.lam) != len(hists):
            raise InputError("one --lam per input required")
        lam = np.array(args.lam)
        if abs(lam.sum() - 1.0) > 1e-8:
            raise InputError("--lam weights must sum to 1")
    for h in hists:
        if len(h) != C.shape[1]:
            raise InputError("histogram length does not match the cost grid")
    try:
        problem = bc.BarycenterProblem(
            [(h, C) for h in hists], weights=lam, epsilon=args.epsilon
        )
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    result, _, rep = bc.entropic_barycenter(problem, tol=args.tol)
    out_hist = args.bary_output or "barycenter.csv"
    write_histogram(out_hist, result.weights)
    report = {
        "schema": SCHEMA,
        "command": "barycenter",
        "lambda": list(problem.weights),
        "lambda_defaulted": not lam_given,
        "epsilon": args.epsilon,
        "cycles": rep.cycles,
        "marginal_disagreement": rep.marginal_disagreement,
        "converged": rep.converged,
        "tol": args.tol,
        "max_iter": args.max_iter,
        "seed": args.seed,
        "threads": args.threads,
        "histogram_file": out_hist,
    }
    _emit(report, args.output, (time.perf_counter() - t0) * 1e3)
    return 0 if rep.converged else EXIT_NOCONV


def cmd_interpolate(args) -> int:
    t0 = time.perf_counter()
    tgrid = np.linspace(0.0, 1.0, args.steps + 1)
    prefix = args.prefix
    report = {
        "schema": SCHEMA,
        "command": "interpolate",
        "method": args.method,
        "times": [float(t) for t in tgrid],
        "tol": args.tol,
        "max_iter": args.max_iter,
        "seed": args.seed,
        "threads": args.threads,
        "converged": True,
    }
    if args.method == "mccann":
        src = read_points(args.source)
        tgt = read_points(args.target)
        from .core import build_cost

        C = build_cost(src, tgt, power=2.0)
        _, plan, _, _ = exact.network_simplex(src.weights, tgt.weights, C)
        files = []
        for k, t in enumerate(tgrid):
            snap = dynamic.mccann_interpolate(plan, src, tgt, float(t))
            path = f"{prefix}_{k:03d}.csv"
            with open(path, "w") as fh:
                for p, w in zip(snap.points, snap.weights.weights):
                    fh.write(",".join(_fmt(v) for v in p) + "," + _fmt(w) + "\n")
            files.append(path)
        report["files"] = files
    elif args.method == "dynamic":
        h0 = read_raster(args.source)
        h1 = read_raster(args.target)
        if h0.shape != h1.shape:
            raise InputError("rasters must share one grid")
        try:
            value, field = dynamic.benamou_brenier(
                h0 / h0.sum(), h1 / h1.sum(),
                T=args.steps, iterations=args.iterations,
            )
        except (ValueError, FloatingPointError) as exc:
            raise InputError(str(exc)) from exc
        files = []
        ncells = int(np.prod(h0.shape))
        for k in range(args.steps + 1):
            path = f"{prefix}_{k:03d}.csv"
            slice_mass = field.density[k] / ncells
            with open(path, "w") as fh:
                if slice_mass.ndim > 1:
                    fh.write("# shape: " + ",".join(str(s) for s in slice_mass.shape) + "\n")
                for row in np.atleast_2d(slice_mass):
                    fh.write(",".join(_fmt(v) for v in row) + "\n")
            files.append(path)
        report["files"] = files
        report["value"] = value
    else:
        raise InputError(f"unknown interpolation method {args.method!r}")
    _emit(report, args.output, (time.perf_counter() - t0) * 1e3)
    return 0


def cmd_plotdata(args) -> int:
    t0 = time.perf_counter()
    try:
        with open(args.trace) as fh:
            payload = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read trace {args.trace}: {exc}") from exc
    trace = payload.get("trace")
    if trace is None:
        raise InputError("no trace object in the given JSON")
    kind = trace.get("kind")
    out = args.csv_output or "plotdata.csv"
    if kind == "sinkhorn":
        residuals = trace.get("residuals", [])
        if not residuals:
            raise InputError("sinkhorn trace has no residuals")
        with open(out, "w") as fh:
            fh.write("iteration,log10_residual\n")
            for k, r in enumerate(residuals, start=1):
                fh.write(f"{k},{_fmt(np.log10(max(r, 1e-300)))}\n")
    elif kind == "semidiscrete":
        nodes = np.asarray(trace.get("nodes", []))
        cells = trace.get("cells", [])
        if nodes.size == 0 or len(cells) != nodes.shape[0]:
            raise InputError("semidiscrete trace needs matching nodes and cells")
        nodes = np.atleast_2d(nodes)
        with open(out, "w") as fh:
            fh.write(",".join(f"node_x{k}" for k in range(nodes.shape[1]))
                     + ",cell_index\n")
            for p, c in zip(nodes, cells):
                fh.write(",".join(_fmt(v) for v in p) + f",{int(c)}\n")
    elif kind == "gw":
        energies = trace.get("energies", [])
        if not energies:
            raise InputError("gw trace has no energies")
        with open(out, "w") as fh:
            fh.write("outer_iter,energy\n")
            for k, e in enumerate(energies):
                fh.write(f"{k},{_fmt(e)}\n")
    elif kind == "interpolation":
        stems = trace.get("stems", [])
        if not stems:
            raise InputError("interpolation trace has no stems")
        with open(out, "w") as fh:
            fh.write("t,position,mass\n")
            for t, pos, mass in stems:
                fh.write(f"{_fmt(t)},{_fmt(pos)},{_fmt(mass)}\n")
    else:
        raise InputError(f"unknown trace kind {kind!r}")
    _emit(
        {"schema": SCHEMA, "command": "plotdata", "kind": kind, "csv": out,
         "seed": args.seed, "threads": args.threads,
         "tol": args.tol, "max_iter": args.max_iter, "converged": True},
        args.output,
        (time.perf_counter() - t0) * 1e3,
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="otkit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("dist", help="transport distance between two measures")
    p.add_argument("--method", default="exact",
                   choices=["exact", "dual-ascent", "auction", "sinkhorn",
                            "sinkhorn-log"])
    p.add_argument("--cost", type=str, default=None)
    p.add_argument("--a", type=str, default=None)
    p.add_argument("--b", type=str, default=None)
    p.add_argument("--source", type=str, default=None)
    p.add_argument("--target", type=str, default=None)
    p.add_argument("--power", type=float, default=2.0)
    p.add_argument("--epsilon", type=float, default=1e-2)
    p.add_argument("--emit-plan", action="store_true")
    _common(p)
    p.set_defaults(func=cmd_dist)

    p = sub.add_parser("barycenter", help="entropic barycenter on a shared grid")
    p.add_argument("--input", action="append", required=True)
    p.add_argument("--cost", type=str, required=True)
    p.add_argument("--lam", action="append", type=float, default=None)
    p.add_argument("--epsilon", type=float, default=1e-2)
    p.add_argument("--bary-output", type=str, default=None)
    _common(p)
    p.set_defaults(func=cmd_barycenter)

    p = sub.add_parser("interpolate", help="displacement interpolation snapshots")
    p.add_argument("--method", default="mccann", choices=["mccann", "dynamic"])
    p.add_argument("--source", type=str, required=True)
    p.add_argument("--target", type=str, required=True)
    p.add_argument("--steps", type=int, default=4, help="number of time intervals")
    p.add_argument("--iterations", type=int, default=600)
    p.add_argument("--prefix", type=str, default="interp")
    _common(p)
    p.set_defaults(func=cmd_interpolate)

    p = sub.add_parser("plotdata", help="CSV series from a saved run trace")
    p.add_argument("--trace", type=str, required=True)
    p.add_argument("--csv-output", type=str, default=None)
    _common(p)
    p.set_defaults(func=cmd_plotdata)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_INPUT
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except entropic.SinkhornUnderflowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NOCONV


if __name__ == "__main__":
    sys.exit(main())
