"""The ``fuseclust`` command.

Subcommands: ``cluster`` (IRLS on a CSV file), ``exact`` (l0 oracle),
``bounds`` (recovery bounds, single point or grid), ``simulate`` (success
curves) and ``gen`` (synthetic data). Results go to standard output and,
with ``--output PREFIX``, to ``PREFIX.*`` files; diagnostics go to stderr.
Exit status is 0 on success, 2 on usage errors and 1 on runtime errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict

import numpy as np

from . import theory
from .exact import CapacityError, l0_cost, solve_l0_exact
from .experiments import (
    SyntheticSpec,
    apply_sampling,
    calibrated_centers,
    evaluate_partition,
    generate_clusters,
    pca_table,
    success_curve,
)
from .model import DataError, DataSet, dataset_stats, dump_csv, load_csv, load_labels
from .penalties import Penalty
from .solver import NumericalError, SolverConfig, run_irls

SCHEMA = 1
THREADS_ENV = "FUSECLUST_THREADS"

log = logging.getLogger("fuseclust")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        flags = sorted(o for a in self._actions for o in a.option_strings)
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        if "unrecognized arguments" in message and flags:
            sys.stderr.write("valid flags: " + " ".join(flags) + "\n")
        raise SystemExit(2)


def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def log_grid(text):
    """``a:b:n`` as ``n`` log-spaced values from ``a`` to ``b``."""
    try:
        a, b, n = text.split(":")
        a, b, n = float(a), float(b), int(n)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a:b:n, got {text!r}")
    if a <= 0 or b <= 0 or n < 1:
        raise argparse.ArgumentTypeError("a:b:n needs a, b > 0 and n >= 1")
    return np.geomspace(a, b, n).tolist()


def parse_grid(text):
    """Parse ``name=v1,v2;name=a:b:n`` (the colon form is a linear range)."""
    grid = {}
    for part in text.split(";"):
        if not part.strip():
            continue
        if "=" not in part:
            raise argparse.ArgumentTypeError(f"grid entry {part!r} lacks '='")
        name, vals = (s.strip() for s in part.split("=", 1))
        if name not in ("p0", "kappa", "mu0", "M", "P"):
            raise argparse.ArgumentTypeError(f"unknown grid axis {name!r}")
        try:
            if ":" in vals:
                a, b, n = vals.split(":")
                grid[name] = np.linspace(float(a), float(b), int(n)).tolist()
            else:
                grid[name] = [float(v) for v in vals.split(",")]
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad values for grid axis {name!r}: {vals!r}")
    if not grid:
        raise argparse.ArgumentTypeError("empty grid")
    return grid


def thread_count(arg=None):
    if arg is not None:
        return max(1, arg)
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            log.warning("ignoring non-integer %s=%r", THREADS_ENV, env)
    return os.cpu_count() or 1


def _clean(obj):
    """Make ``obj`` JSON-serializable; non-finite floats become null."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def _dump_json(obj):
    return json.dumps(_clean(obj), indent=2, allow_nan=False)


def _write(path, text):
    with open(path, "w", newline="") as f:
        f.write(text)
    log.info("wrote %s", path)


# ---- argument groups ----------------------------------------------------

def _add_common(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None,
                   help=f"worker threads (default ${THREADS_ENV} or all cores)")
    p.add_argument("--output", metavar="PREFIX")
    p.add_argument("-v", "--verbose", action="store_true")


def _add_input(p):
    p.add_argument("--input", required=True, help="CSV file, or - for stdin")
    p.add_argument("--orientation", choices=("rows-are-points", "rows-are-features"),
                   default="rows-are-points")
    p.add_argument("--missing-token", action="append", dest="missing_tokens",
                   help="cell text meaning 'not observed' (repeatable)")
    p.add_argument("--header", action="store_true", help="skip the first row")
    p.add_argument("--labels", help="file with one true label per point")


def _add_solver(p, mode_default="unconstrained", with_epsilon=True):
    p.add_argument("--penalty", choices=("l1", "lp", "h1"), default="h1")
    p.add_argument("--p", type=float, default=1.0, help="exponent of lp")
    p.add_argument("--alpha", type=float, default=1e-10)
    p.add_argument("--sigma", type=float, default=0.5)
    p.add_argument("--mode", choices=("constrained", "unconstrained"), default=mode_default)
    if with_epsilon:
        p.add_argument("--epsilon", type=float)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--init", choices=("partial", "zero", "mean"), default="partial")
    p.add_argument("--max-outer", type=int, default=100)
    p.add_argument("--tol", type=float, default=1e-6, help="outer relative tolerance")
    p.add_argument("--inner-tol", type=float, default=1e-8)
    p.add_argument("--cluster-tol", type=float)
    p.add_argument("--sigma-decay", type=float, help="shrink sigma by this factor per step")
    p.add_argument("--sigma-floor", type=float, default=0.0)


def build_parser():
    parser = _Parser(prog="fuseclust", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("cluster", help="cluster a CSV file with IRLS")
    _add_input(p)
    _add_solver(p)
    p.add_argument("--lambda-sweep", type=log_grid, metavar="A:B:N",
                   help="run every lambda of a log grid and tabulate the groups")
    p.add_argument("--pca", action="store_true", help="also write PREFIX.pca.csv")
    _add_common(p)

    p = sub.add_parser("exact", help="exact l0 clustering (N <= 13)")
    _add_input(p)
    p.add_argument("--epsilon", type=float, required=True)
    _add_common(p)

    p = sub.add_parser("bounds", help="recovery-probability bounds")
    p.add_argument("--p0", type=float)
    p.add_argument("--P", type=int)
    p.add_argument("--kappa", type=float)
    p.add_argument("--mu0", type=float)
    p.add_argument("--M", type=int)
    p.add_argument("--K", type=int, default=2)
    p.add_argument("--kappa-prime", type=float)
    p.add_argument("--grid", type=parse_grid,
                   help="sweep, e.g. 'p0=0.1:1:10;kappa=0.2,0.39'; writes CSV")
    _add_common(p)

    for name, desc in (("simulate", "Monte Carlo success curves"),
                       ("gen", "generate a synthetic data set")):
        p = sub.add_parser(name, help=desc)
        p.add_argument("--K", type=int, default=2)
        p.add_argument("--M", type=_int_list if name == "simulate" else int,
                       default=[25] if name == "simulate" else 25)
        p.add_argument("--P", type=int, default=50)
        p.add_argument("--noise", choices=("uniform", "gaussian"), default="uniform")
        p.add_argument("--epsilon", type=float, default=0.0, help="uniform noise width")
        p.add_argument("--variance", type=float, default=0.0, help="gaussian noise variance")
        p.add_argument("--center-sep", type=float, default=1.0)
        p.add_argument("--kappa", type=float,
                       help="with --mu0 and K=2: calibrate centers to these statistics")
        p.add_argument("--mu0", type=float)
        if name == "simulate":
            p.add_argument("--p0", type=_float_list, default=[1.0])
            p.add_argument("--trials", type=int, default=20)
            p.add_argument("--solver-epsilon", type=float,
                           help="constraint width (default: --epsilon)")
            _add_solver(p, mode_default="constrained", with_epsilon=False)
        else:
            p.add_argument("--p0", type=float, default=1.0)
            p.add_argument("--orientation", choices=("rows-are-points", "rows-are-features"),
                           default="rows-are-points")
        _add_common(p)
    return parser


# ---- helpers ------------------------------------------------------------

def _read_input(args):
    t = time.perf_counter()
    tokens = args.missing_tokens
    if args.input == "-":
        data = load_csv(sys.stdin.read(), tokens, args.orientation, args.header)
    else:
        with open(args.input, newline="") as f:
            data = load_csv(f, tokens, args.orientation, args.header)
    labels = None
    if args.labels:
        with open(args.labels, newline="") as f:
            labels = load_labels(f)
        if labels.size != data.points:
            raise DataError(f"{labels.size} labels for {data.points} points")
    return data, labels, time.perf_counter() - t


def _penalty(args):
    if args.penalty == "lp":
        return Penalty.lp(args.p, args.alpha)
    if args.penalty == "l1":
        return Penalty.l1(args.alpha)
    return Penalty.h1(args.sigma)


def _solver_config(parser, args, epsilon, lam=None):
    if args.mode == "constrained" and epsilon is None:
        parser.error("constrained mode needs --epsilon")
    lam = args.lam if lam is None else lam
    if args.mode == "unconstrained" and lam is None:
        parser.error("unconstrained mode needs --lambda (or --lambda-sweep)")
    try:
        return SolverConfig(
            penalty=_penalty(args), mode=args.mode,
            epsilon=epsilon if args.mode == "constrained" else None,
            lam=lam if args.mode == "unconstrained" else None,
            init=args.init, max_outer=args.max_outer, outer_tol=args.tol,
            inner_tol=args.inner_tol, cluster_tol=args.cluster_tol,
            sigma_decay=args.sigma_decay, sigma_floor=args.sigma_floor)
    except ValueError as exc:
        parser.error(str(exc))


def _config_echo(cfg: SolverConfig):
    pen = cfg.penalty
    return {"penalty": pen.kind, "p": pen.p, "alpha": pen.alpha, "sigma": pen.sigma,
            "mode": cfg.mode, "epsilon": cfg.epsilon, "lambda": cfg.lam, "init": cfg.init,
            "max_outer": cfg.max_outer, "tol": cfg.outer_tol, "inner_tol": cfg.inner_tol,
            "cluster_tol": cfg.cluster_tol, "sigma_decay": cfg.sigma_decay,
            "sigma_floor": cfg.sigma_floor}


def _assignments_csv(labels):
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["point", "group"])
    for i, g in enumerate(labels, start=1):
        w.writerow([i, int(g)])
    return out.getvalue()


def _centers_csv(centers):
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    P, G = centers.shape
    w.writerow(["group"] + [f"f{p + 1}" for p in range(P)])
    for g in range(G):
        w.writerow([g + 1] + [repr(float(v)) for v in centers[:, g]])
    return out.getvalue()


def _label_stats(part, labels):
    if labels is None:
        return None
    rep = evaluate_partition(part, labels)
    return {"success": rep.success, "misclassification_rate": rep.misclassification_rate,
            "groups": rep.groups, "true_groups": int(np.unique(labels).size)}


# ---- subcommands --------------------------------------------------------

def cmd_cluster(parser, args):
    t0 = time.perf_counter()
    if args.pca and not args.output:
        parser.error("--pca needs --output")
    if args.lambda_sweep and args.mode != "unconstrained":
        parser.error("--lambda-sweep needs --mode unconstrained")
    if args.lambda_sweep:
        _solver_config(parser, args, args.epsilon, lam=args.lambda_sweep[0])
    else:
        cfg = _solver_config(parser, args, args.epsilon)
    data, labels, t_load = _read_input(args)
    report = {"schema": SCHEMA, "command": "cluster", "input": args.input,
              "points": data.points, "features": data.features,
              "observed_fraction": data.observed_fraction()}

    if args.lambda_sweep:
        cfgs = [_solver_config(parser, args, None, lam=lam) for lam in args.lambda_sweep]

        def one(c):
            res = run_irls(data, c)
            row = {"lambda": c.lam, "groups": len(res.partition),
                   "iterations": res.iterations, "converged": res.converged,
                   "objective": res.objective_trace[-1],
                   "sizes": sorted(res.partition.sizes, reverse=True)}
            st = _label_stats(res.partition, labels)
            if st:
                row["misclassification_rate"] = st["misclassification_rate"]
                row["success"] = st["success"]
            return row

        t = time.perf_counter()
        with ThreadPoolExecutor(max_workers=thread_count(args.threads)) as pool:
            rows = list(pool.map(one, cfgs))
        report["config"] = {**_config_echo(cfgs[0]), "lambda": None,
                            "lambda_sweep": args.lambda_sweep}
        report["sweep"] = rows
        report["timings"] = {"load_s": t_load, "solve_s": time.perf_counter() - t,
                             "total_s": time.perf_counter() - t0}
        text = _dump_json(report)
        if args.output:
            _write(args.output + ".report.json", text)
        print(text)
        return 0

    t = time.perf_counter()
    res = run_irls(data, cfg)
    t_solve = time.perf_counter() - t
    part = res.partition
    group_of = part.labels()
    report["config"] = {**_config_echo(cfg), "cluster_tol": res.cluster_tol}
    report.update({
        "groups": len(part),
        "partition": group_of,
        "centers": part.centers.T,
        "objective_trace": res.objective_trace,
        "iterations": res.iterations,
        "converged": res.converged,
    })
    st = _label_stats(part, labels)
    if st:
        report["stats"] = st
    report["timings"] = {"load_s": t_load, "solve_s": t_solve,
                         "total_s": time.perf_counter() - t0}
    text = _dump_json(report)
    if args.output:
        _write(args.output + ".assignments.csv", _assignments_csv(group_of))
        _write(args.output + ".centers.csv", _centers_csv(part.centers))
        _write(args.output + ".report.json", text)
        if args.pca:
            points = np.where(data.mask, data.values, res.centers)
            shown = labels if labels is not None else group_of
            _write(args.output + ".pca.csv", pca_table(points, res.centers, shown))
    print(text)
    return 0


def cmd_exact(parser, args):
    t0 = time.perf_counter()
    data, labels, t_load = _read_input(args)
    t = time.perf_counter()
    part = solve_l0_exact(data, args.epsilon)
    t_solve = time.perf_counter() - t
    group_of = part.labels()
    report = {"schema": SCHEMA, "command": "exact", "input": args.input,
              "config": {"epsilon": args.epsilon},
              "points": data.points, "features": data.features,
              "groups": len(part), "partition": group_of, "centers": part.centers.T,
              "l0_cost": l0_cost(part, data.points)}
    st = _label_stats(part, labels)
    if st:
        report["stats"] = st
    report["timings"] = {"load_s": t_load, "solve_s": t_solve,
                         "total_s": time.perf_counter() - t0}
    text = _dump_json(report)
    if args.output:
        _write(args.output + ".assignments.csv", _assignments_csv(group_of))
        _write(args.output + ".centers.csv", _centers_csv(part.centers))
        _write(args.output + ".report.json", text)
    print(text)
    return 0


def _fmt17(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, int):
        return str(v)
    return format(float(v), ".17g")


def cmd_bounds(parser, args):
    scalars = {"p0": args.p0, "kappa": args.kappa, "mu0": args.mu0, "M": args.M, "P": args.P}
    if args.grid is None:
        missing = [k for k, v in scalars.items() if v is None]
        if missing:
            parser.error("missing " + ", ".join("--" + k for k in missing))
        inp = theory.BoundInputs(args.p0, args.P, args.kappa, args.mu0, args.M, args.K,
                                 args.kappa_prime)
        rep = theory.bound_report(inp)
        print(_dump_json({"schema": SCHEMA, "command": "bounds",
                          "inputs": asdict(inp),
                          "bounds": rep.as_dict()}))
        return 0
    grid = dict(args.grid)
    for k, v in scalars.items():
        if k not in grid:
            if v is None:
                parser.error(f"--{k} is needed when the grid does not sweep {k}")
            grid[k] = [v]
    rows = theory.sweep(grid, M=None, K=args.K, P=None, kappa_prime=args.kappa_prime)
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    header = list(rows[0].keys())
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt17(r[h]) for h in header])
    if args.output:
        _write(args.output + ".bounds.csv", out.getvalue())
    sys.stdout.write(out.getvalue())
    return 0


def _synthetic_spec(parser, args, M):
    if args.noise == "uniform" and args.epsilon <= 0 and args.variance <= 0:
        log.info("epsilon is 0: noiseless clusters")
    centers = None
    if args.kappa is not None or args.mu0 is not None:
        if args.kappa is None or args.mu0 is None or args.K != 2 or args.noise != "uniform":
            parser.error("--kappa/--mu0 calibration needs both values, --K 2 and uniform noise")
        if args.epsilon <= 0:
            parser.error("--kappa/--mu0 calibration needs --epsilon > 0")
        centers = calibrated_centers(args.P, args.epsilon, args.kappa, args.mu0, seed=args.seed)
    try:
        return SyntheticSpec(K=args.K, M=M, P=args.P, noise=args.noise, epsilon=args.epsilon,
                             variance=args.variance, center_sep=args.center_sep,
                             centers=centers, seed=args.seed)
    except ValueError as exc:
        parser.error(str(exc))


def cmd_simulate(parser, args):
    if args.trials < 1:
        parser.error("--trials must be >= 1")
    if any(not 0 < p <= 1 for p in args.p0):
        parser.error("--p0 values must lie in (0, 1]")
    spec = _synthetic_spec(parser, args, args.M[0])
    eps = args.solver_epsilon if args.solver_epsilon is not None else args.epsilon
    cfg = _solver_config(parser, args, eps if eps and eps > 0 else None)
    curve = success_curve(spec, cfg, args.p0, args.M, args.trials, seed=args.seed,
                          threads=thread_count(args.threads))
    text = curve.to_csv()
    if args.output:
        _write(args.output + ".curve.csv", text)
    sys.stdout.write(text)
    return 0


def cmd_gen(parser, args):
    if not 0 < args.p0 <= 1:
        parser.error("--p0 must lie in (0, 1]")
    spec = _synthetic_spec(parser, args, args.M)
    if not args.output:
        parser.error("gen needs --output")
    data, truth = generate_clusters(spec)
    stats = dataset_stats(data, truth).as_dict() if truth.K >= 2 else None
    sampled = apply_sampling(data, args.p0, np.random.default_rng([args.seed, 2]))
    _write(args.output + ".data.csv", dump_csv(sampled, args.orientation))
    _write(args.output + ".labels.csv",
           "label\n" + "".join(f"{int(v)}\n" for v in truth.labels))
    _write(args.output + ".centers.csv", _centers_csv(truth.centers))
    print(_dump_json({"schema": SCHEMA, "command": "gen",
                      "config": {"K": spec.K, "M": spec.M, "P": spec.P, "noise": spec.noise,
                                 "epsilon": spec.epsilon, "variance": spec.variance,
                                 "center_sep": spec.center_sep, "p0": args.p0,
                                 "seed": args.seed},
                      "stats": stats,
                      "observed_fraction": sampled.observed_fraction(),
                      "files": [args.output + s for s in
                                (".data.csv", ".labels.csv", ".centers.csv")]}))
    return 0


COMMANDS = {"cluster": cmd_cluster, "exact": cmd_exact, "bounds": cmd_bounds,
            "simulate": cmd_simulate, "gen": cmd_gen}


def run_cli(argv=None) -> int:
    parser = build_parser()
    try:
        args, extra = parser.parse_known_args(argv)
        sub = parser._subparsers._group_actions[0].choices[args.command]
        if extra:
            sub.error("unrecognized arguments: " + " ".join(extra))
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
        return COMMANDS[args.command](sub, args)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    except (DataError, CapacityError, NumericalError, ArithmeticError, ValueError,
            OSError) as exc:
        sys.stderr.write(f"fuseclust: error: {exc}\n")
        return 1


def main(argv=None) -> int:
    return run_cli(argv)
