"""Command-line front end.

Every subcommand except ``rates`` reads one YAML experiment file (defaults are
used when it is omitted), applies ``--set section.field=value`` overrides and
writes into one output directory::

    <out>/config.lock    resolved config and package version
    <out>/summary.csv    one row per run / cell / target
    <out>/traces/        per-run traces or tuning grids
    <out>/figures/       rendered plots

Exit codes: 0 success, 1 configuration error, 2 divergence, 3 failed
consistency check (``lower-bound --check``).
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .config import GRAPH_KINDS, ConfigError, ExperimentConfig, load_config
from .consensus import consensus_rate, spectral_gap
from .engine import Constant, DivergenceError, InverseTime, run
from .experiments import Cell, lower_bound_experiment, slope_experiment
from .problem import DegenerateInstanceError, make_quadratic
from .rates import BoundValidityError, NonConvexExtras, RateParams, iteration_bound, lower_bound_T, suboptimality_curve
from .schedule import (
    FiniteMixture,
    Fixed,
    LocalSGD,
    LooplessLocal,
    MixingSchedule,
    PairwiseRandom,
    Periodic,
    RepeatedPairwise,
)
from .topology import Graph, build_topology, load_matrix_csv, metropolis_weights, read_edge_list
from .tuner import GridSpec, tune_stepsize

log = logging.getLogger("dsgdlab")

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_CHECK = 0, 1, 2, 3
WORKERS_ENV = "DSGDLAB_WORKERS"


def schema_line(kind: str) -> str:
    return f"# dsgdlab {kind} v1"


def write_csv(path: Path, kind: str, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    """CSV with a schema line, a header and ``repr``-precision floats."""

    def cell(v) -> str:
        if v is None:
            return ""
        if isinstance(v, (float, np.floating)):
            return repr(float(v))
        return str(v)

    with path.open("w") as fh:
        fh.write(schema_line(kind) + "\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(cell(v) for v in row) + "\n")


def worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV)
    if raw is None:
        return os.cpu_count() or 1
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(WORKERS_ENV, f"must be a positive integer, got {raw!r}") from None
    if value < 1:
        raise ConfigError(WORKERS_ENV, f"must be a positive integer, got {raw!r}")
    return value


# building blocks from a config


def build_graph(cfg: ExperimentConfig) -> Graph:
    n, spec = cfg.problem.n, cfg.schedule.graph
    try:
        g = build_topology(spec, n) if spec in GRAPH_KINDS else read_edge_list(spec)
    except OSError as exc:
        raise ConfigError("schedule.graph", f"cannot read edge list {spec!r}: {exc.strerror}") from exc
    except ValueError as exc:
        raise ConfigError("schedule.graph", str(exc)) from exc
    if g.n != n:
        raise ConfigError("schedule.graph", f"graph has {g.n} nodes but problem.n = {n}")
    return g


def build_schedule(cfg: ExperimentConfig) -> MixingSchedule:
    sc = cfg.schedule
    try:
        if sc.variant in ("mixture", "periodic"):
            Ws = []
            for k, path in enumerate(sc.matrices):
                try:
                    Ws.append(load_matrix_csv(path))
                except OSError as exc:
                    raise ConfigError(f"schedule.matrices[{k}]", f"cannot read {path!r}: {exc.strerror}") from exc
            if any(W.shape != (cfg.problem.n, cfg.problem.n) for W in Ws):
                raise ConfigError("schedule.matrices", f"matrices must be {cfg.problem.n}x{cfg.problem.n}")
            return FiniteMixture(Ws, sc.probs) if sc.variant == "mixture" else Periodic(Ws)
        g = build_graph(cfg)
        if sc.variant == "pairwise":
            return PairwiseRandom(g)
        if sc.variant == "repeated_pairwise":
            return RepeatedPairwise(g, sc.k)
        W = metropolis_weights(g)
        if sc.variant == "fixed":
            return Fixed(W)
        if sc.variant == "local_sgd":
            return LocalSGD(W, int(sc.tau))
        return LooplessLocal(W, sc.tau)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError("schedule", str(exc)) from exc


def build_problem(cfg: ExperimentConfig):
    pc = cfg.problem
    return make_quadratic(pc.n, pc.d, pc.zeta_bar2, pc.sigma_bar2, seed=pc.seed, exact=pc.exact_zeta)


def grid_spec(cfg: ExperimentConfig) -> GridSpec:
    t = cfg.tune
    return GridSpec(lo=t.lo, hi=t.hi, points=t.points, refine=t.refine)


def require_target(cfg: ExperimentConfig, command: str) -> float:
    if cfg.run.target is None:
        raise ConfigError("run.target", f"{command} needs an accuracy target (use --target)")
    return cfg.run.target


def prepare_output(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.output.directory)
    (out / "traces").mkdir(parents=True, exist_ok=True)
    (out / "config.lock").write_text(cfg.lock())
    return out


def render(cfg: ExperimentConfig, out: Path, name: str, plot, *args) -> None:
    formats = cfg.output.figure_formats
    if formats:
        for path in plot(*args, out / "figures" / name, formats):
            log.info("wrote %s", path)


# subcommands


def cmd_estimate_p(cfg: ExperimentConfig) -> int:
    sched = build_schedule(cfg)
    est = cfg.estimate
    try:
        rate = consensus_rate(sched, est.tau, est.method, est.trials, est.seed)
    except ValueError as exc:
        raise ConfigError("estimate", str(exc)) from exc
    gap = spectral_gap(sched.W) if isinstance(sched, Fixed) else None
    out = prepare_output(cfg)
    header = ["variant", "n", "spectral_gap", "p", "tau", "method", "trials", "stderr", "offset"]
    row = [cfg.schedule.variant, sched.n, gap, rate.p, rate.tau, rate.method, rate.trials, rate.stderr, rate.offset]
    write_csv(out / "summary.csv", "estimate-p", header, [row])
    if gap is not None:
        print(f"spectral_gap {gap:.6f}")
    print(f"p {rate.p:.6f} (tau={rate.tau}, method={rate.method}, stderr={rate.stderr:.3g})")
    return EXIT_OK


def cmd_run(cfg: ExperimentConfig) -> int:
    if cfg.run.steps is None:
        raise ConfigError("run.steps", "run needs a fixed number of steps (use --steps)")
    from .plotting import plot_traces

    prob, sched = build_problem(cfg), build_schedule(cfg)
    rc = cfg.run
    eta = Constant(rc.stepsize) if rc.stepsize_schedule == "constant" else InverseTime(rc.stepsize, rc.b)
    out = prepare_output(cfg)
    traces, rows = {}, []
    for seed in rc.seeds:
        try:
            tr = run(prob, sched, rc.steps, eta, init=rc.init, cadence=rc.cadence, seed=seed)
        except DivergenceError as exc:
            log.error("seed %d diverged: %s", seed, exc)
            write_csv(out / "summary.csv", "run", ["seed", "steps", "status"], [[seed, exc.t, "diverged"]])
            return EXIT_DIVERGED
        tr.to_csv(out / "traces" / f"seed_{seed}.csv")
        traces[f"seed {seed}"] = tr
        rows.append([seed, rc.steps, tr.xi[-1], tr.dist2[-1], tr.fgap[-1], tr.max_average_drift])
    header = ["seed", "steps", "xi", "dist2", "fgap", "max_average_drift"]
    write_csv(out / "summary.csv", "run", header, rows)
    render(cfg, out, "traces", plot_traces, traces)
    print(f"{len(rows)} run(s) of {rc.steps} steps written to {out}")
    return EXIT_OK


def cmd_tune(cfg: ExperimentConfig) -> int:
    from .plotting import plot_traces, plot_tune

    eps = require_target(cfg, "tune")
    prob, sched = build_problem(cfg), build_schedule(cfg)
    rc = cfg.run
    res = tune_stepsize(
        prob, sched, eps, rc.T_max, grid_spec(cfg), rc.seeds, rc.init, cfg.tune.prune, raise_on_fail=False
    )
    out = prepare_output(cfg)
    res.to_csv(out / "tune.csv")
    write_csv(
        out / "summary.csv",
        "tune",
        ["eps", "eta", "T", "seeds", "status"],
        [[eps, res.eta_star, res.T_epsilon, len(rc.seeds), "reached" if res.reached else "failed"]],
    )
    render(cfg, out, "tune", plot_tune, res)
    if not res.reached:
        print(f"no stepsize reached eps={eps:g} within T_max={rc.T_max}")
        return EXIT_OK
    tr = run(prob, sched, res.T_epsilon, Constant(res.eta_star), init=rc.init, seed=rc.seeds[0])
    tr.to_csv(out / "traces" / "incumbent.csv")
    render(cfg, out, "incumbent", plot_traces, {"incumbent": tr})
    print(f"eta* = {res.eta_star:.6g}  T = {res.T_epsilon}")
    return EXIT_OK


@dataclass(frozen=True)
class _CellTask:
    kind: str
    sigma: float
    zeta: float
    cfg: ExperimentConfig
    eps: float
    path: str


def _run_cell(task: _CellTask) -> Cell:
    cfg = task.cfg
    prob = make_quadratic(cfg.problem.n, cfg.problem.d, task.zeta, task.sigma, seed=cfg.problem.seed,
                          exact=cfg.problem.exact_zeta)
    sched = Fixed(metropolis_weights(build_topology(task.kind, cfg.problem.n)))
    res = tune_stepsize(prob, sched, task.eps, cfg.run.T_max, grid_spec(cfg), cfg.run.seeds, cfg.run.init,
                        cfg.tune.prune, raise_on_fail=False)
    res.to_csv(task.path)
    return Cell(task.kind, task.sigma, task.zeta, res.eta_star, res.T_epsilon,
                "reached" if res.reached else "failed", prob.zeta_bar2_measured)


def cmd_sweep(cfg: ExperimentConfig) -> int:
    from .plotting import plot_sweep

    eps = require_target(cfg, "sweep")
    sw = cfg.sweep
    for kind in sw.topologies:
        try:
            build_topology(kind, cfg.problem.n)
        except ValueError as exc:
            raise ConfigError("sweep.topologies", f"{kind}: {exc}") from exc
    out = prepare_output(cfg)
    tasks = [
        _CellTask(kind, s, z, cfg, eps, str(out / "traces" / f"{kind}_s{s:g}_z{z:g}.csv"))
        for s in sw.sigma_bar2
        for z in sw.zeta_bar2
        for kind in sw.topologies
    ]
    workers = min(worker_count(), len(tasks))
    log.info("sweeping %d cells with %d worker(s)", len(tasks), workers)
    if workers == 1:
        cells = [_run_cell(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            cells = list(pool.map(_run_cell, tasks))
    write_csv(
        out / "summary.csv",
        "sweep",
        ["topology", "sigma2", "zeta2", "eta", "T"],
        [[c.topology, c.sigma_bar2, c.zeta_bar2, c.eta, c.T] for c in cells],
    )
    render(cfg, out, "sweep", plot_sweep, cells)
    failed = sum(c.T is None for c in cells)
    print(f"{len(cells)} cells, {failed} without a reaching stepsize, written to {out}")
    return EXIT_OK


def cmd_lower_bound(cfg: ExperimentConfig, check: bool) -> int:
    from .plotting import plot_lower_bound, plot_slopes

    lb = cfg.lower_bound
    out = prepare_output(cfg)
    grid, T_max = grid_spec(cfg), cfg.run.T_max
    ok = True
    rows, fits = [], []
    if lb.instance == "eigenvector":
        for kind in lb.topologies:
            try:
                res = lower_bound_experiment(kind, cfg.problem.n, lb.zeta_bar, lb.eps, grid, T_max)
            except (DegenerateInstanceError, ValueError) as exc:
                raise ConfigError("lower_bound.topologies", f"{kind}: {exc}") from exc
            for r in res.rows:
                rows.append([kind, r.eps, r.T, r.eta, r.bound, r.valid, r.dominates])
                ok &= r.dominates
            fit = res.fit
            fits.append([kind, res.instance.p, fit.slope, fit.intercept, fit.r2])
            render(cfg, out, f"lower_bound_{kind}", plot_lower_bound, res)
        header = ["topology", "eps", "T", "eta", "bound", "valid", "dominates"]
    else:
        results = slope_experiment(
            lb.topologies, cfg.problem.n, cfg.problem.d, cfg.problem.zeta_bar2, lb.eps, lb.problem_seeds,
            cfg.run.init, grid, T_max, cfg.problem.exact_zeta,
        )
        for kind, res in results.items():
            zeta_bar = math.sqrt(float(np.mean(res.zeta_bar2)))
            for eps, T in zip(res.eps, res.T_mean):
                try:
                    bound = lower_bound_T(zeta_bar, res.p, eps)
                except BoundValidityError:
                    bound = None
                dominates = bound is None or not math.isfinite(T) or T >= bound
                rows.append([kind, eps, float(T), bound, bound is not None, dominates])
            fit = res.fit
            fits.append([kind, res.p, fit.slope, fit.intercept, fit.r2])
            ok &= fit.r2 > 0.98
        if "ring" in results and "torus2d" in results:
            ratio = results["ring"].fit.slope / results["torus2d"].fit.slope
            print(f"slope ratio ring/torus2d = {ratio:.3f}")
            ok &= 11.0 <= ratio <= 15.0
        render(cfg, out, "slopes", plot_slopes, results)
        header = ["topology", "eps", "T_mean", "bound", "valid", "dominates"]
        ok &= all(r[-1] for r in rows)
    write_csv(out / "summary.csv", "lower-bound", header, rows)
    write_csv(out / "fit.csv", "lower-bound-fit", ["topology", "p", "slope", "intercept", "r2"], fits)
    for kind, p, slope, intercept, r2 in fits:
        print(f"{kind}: p={p:.6g} slope={slope:.4g} intercept={intercept:.4g} R2={r2:.4f}")
    print("consistency: " + ("ok" if ok else "FAILED"))
    return EXIT_CHECK if (check and not ok) else EXIT_OK


def cmd_rates(args: argparse.Namespace) -> int:
    try:
        params = RateParams(args.L, args.mu, args.n, args.p, args.tau, args.sigma2, args.zeta2, args.R0, args.F0)
    except ValueError as exc:
        raise ConfigError("rates", str(exc)) from exc
    extras = NonConvexExtras(args.P, args.M, args.sigma_hat2, args.zeta_hat2)
    rows = []
    try:
        for eps in args.eps:
            b = iteration_bound(args.regime, params, eps, extras)
            rows.append(["iterations", args.regime, eps, *b.terms, b.total])
        for T in args.T:
            b = suboptimality_curve(params, T)
            rows.append(["suboptimality", "strongly-convex", T, *b.terms, b.total])
    except ValueError as exc:
        raise ConfigError("rates", str(exc)) from exc
    header = ["kind", "regime", "x", "noise", "consensus", "optimization", "total"]
    print(schema_line("rates"))
    print(",".join(header))
    for r in rows:
        print(",".join(repr(float(v)) if isinstance(v, float) else str(v) for v in r))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(out / "summary.csv", "rates", header, rows)
    return EXIT_OK


# argument parsing


class _Parser(argparse.ArgumentParser):
    """Argument parser that reports usage errors with the config exit status."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dsgdlab", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def experiment(name: str, help: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help)
        p.add_argument("config", nargs="?", help="YAML experiment file (defaults if omitted)")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.FIELD=VALUE",
                       help="override a config field; repeatable")
        p.add_argument("-o", "--out", help="output directory (output.directory)")
        p.add_argument("--seeds", type=int, nargs="+", help="run seeds (run.seeds)")
        group = p.add_mutually_exclusive_group()
        group.add_argument("--steps", type=int, help="fixed run length (clears run.target)")
        group.add_argument("--target", type=float, help="accuracy target (clears run.steps)")
        return p

    experiment("estimate-p", "spectral gap and expected consensus rate of a schedule")
    experiment("run", "simulate fixed-length runs and write traces")
    experiment("tune", "tune the constant stepsize for an accuracy target")
    experiment("sweep", "tune every (topology, noise, heterogeneity) cell")
    p = experiment("lower-bound", "measured iterations against the explicit lower bound")
    p.add_argument("--check", action="store_true", help="exit with status 3 if a consistency check fails")

    r = sub.add_parser("rates", help="evaluate the closed-form bounds")
    r.add_argument("--regime", choices=["strongly-convex", "convex", "non-convex"], default="strongly-convex")
    r.add_argument("--L", type=float, default=1.0)
    r.add_argument("--mu", type=float, default=1.0)
    r.add_argument("--n", type=int, default=1)
    r.add_argument("--p", type=float, default=1.0)
    r.add_argument("--tau", type=float, default=1.0)
    r.add_argument("--sigma2", type=float, default=0.0)
    r.add_argument("--zeta2", type=float, default=0.0)
    r.add_argument("--R0", type=float, default=1.0)
    r.add_argument("--F0", type=float, default=1.0)
    r.add_argument("--P", type=float, default=0.0, help="non-convex noise constant")
    r.add_argument("--M", type=float, default=0.0, help="non-convex heterogeneity constant")
    r.add_argument("--sigma-hat2", type=float, default=0.0)
    r.add_argument("--zeta-hat2", type=float, default=0.0)
    r.add_argument("--eps", type=float, nargs="*", default=[], help="targets for iteration bounds")
    r.add_argument("--T", type=float, nargs="*", default=[], help="horizons for the suboptimality curve")
    r.add_argument("-o", "--out", help="also write summary.csv here")
    return parser


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    overrides = list(args.overrides)
    if args.out is not None:
        overrides.append(f"output.directory={args.out}")
    if args.seeds is not None:
        overrides.append(f"run.seeds=[{', '.join(map(str, args.seeds))}]")
    if args.steps is not None:
        overrides += [f"run.steps={args.steps}", "run.target=null"]
    if args.target is not None:
        overrides += [f"run.target={args.target!r}", "run.steps=null"]
    return load_config(args.config, overrides)


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        if args.command == "rates":
            return cmd_rates(args)
        cfg = resolve_config(args)
        if args.command == "estimate-p":
            return cmd_estimate_p(cfg)
        if args.command == "run":
            return cmd_run(cfg)
        if args.command == "tune":
            return cmd_tune(cfg)
        if args.command == "sweep":
            return cmd_sweep(cfg)
        return cmd_lower_bound(cfg, args.check)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
