"""Command-line interface: scenario tables, simulation runs, verification.

Subcommands: threshold, limits, simulate, couple, sweep, figure1, figure2,
figure3, verify.  Every report path writes a CSV with a versioned header
comment (byte-identical across reruns with the same config and seeds) and,
unless --no-plot is given, a companion PNG figure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, analytics, dists, plotting, simcore, stats
from .analytics import BoundMode, asymptotic_report, solve_threshold
from .config import (
    ConfigError,
    SystemConfig,
    config_from_dict,
    config_from_file,
    expand_seeds,
)
from .dists import Family
from .simcore import Discipline

DEFAULT_CONFIG = {
    "rho": 1.4,
    "servers": 10,
    "service": {"family": "exponential", "mean": 1.0},
    "patience": {"family": "exponential", "mean": 1.0},
    "discipline": "srpt",
    "horizon": 4000.0,
    "warmup": 400.0,
    "seeds": [1, 2, 3, 4, 5],
    "batches": 20,
}

WEIBULL_GRID = tuple(round(0.4 + 0.1 * i, 10) for i in range(13))   # 0.4 .. 1.6
WEIBULL_COARSE = tuple(round(0.4 + 0.2 * i, 10) for i in range(7))  # 0.4 .. 1.6
PARETO_GRID = tuple(round(1.1 + 0.1 * i, 10) for i in range(20))    # 1.1 .. 3.0


# ---------------------------------------------------------------------- #
# scenario tables
# ---------------------------------------------------------------------- #


def scenario_figure1(shape_grid, family: Family, rho: float = 1.4):
    """Waits vs patience shape: SRPT limit against FCFS/LCFS fluid.

    Service is exponential(1); patience is mean-1 Weibull or Pareto with the
    shape swept over the grid.
    """
    service = dists.exponential(1.0)
    columns = ("shape", "srpt_wait", "fcfs_fluid_wait", "lcfs_fluid_wait")
    rows = []
    for shape in shape_grid:
        patience = _patience_for(family, shape)
        rep = asymptotic_report(service, patience, rho)
        rows.append((shape, rep.srpt_wait, rep.fcfs_fluid_wait, rep.lcfs_fluid_wait))
    return columns, rows


def scenario_figure2(shape_grid, family: Family, rho: float = 1.4):
    """Per-arrival throughput vs service shape: short-job fraction vs 1/rho."""
    columns = ("shape", "srpt_throughput_per_arrival", "blind_throughput_per_arrival")
    rows = []
    for shape in shape_grid:
        service = _service_for(family, shape)
        thr = solve_threshold(service, rho)
        rows.append((shape, thr.g_tau, 1.0 / rho))
    return columns, rows


def scenario_figure3(service_shape_grid, patience_shape: float, rho: float = 1.4):
    """Waits vs Weibull service shape at a fixed Weibull patience shape."""
    patience = dists.weibull(patience_shape, mean=1.0)
    fcfs = analytics.fcfs_fluid_wait(patience, rho)
    lcfs = analytics.lcfs_fluid_wait(patience.mean(), rho)
    columns = ("shape", "srpt_wait", "fcfs_fluid_wait", "lcfs_fluid_wait")
    rows = []
    for shape in service_shape_grid:
        service = dists.weibull(shape, mean=1.0)
        limits = analytics.srpt_limits(service, patience.mean(), rho)
        rows.append((shape, limits.wait, fcfs, lcfs))
    return columns, rows


def _patience_for(family: Family, shape: float):
    if family is Family.WEIBULL:
        return dists.weibull(shape, mean=1.0)
    if family is Family.PARETO:
        return dists.pareto(shape, mean=1.0)
    raise ConfigError(f"family: scenario grids support weibull or pareto, got {family}")


_service_for = _patience_for


# ---------------------------------------------------------------------- #
# verification battery
# ---------------------------------------------------------------------- #

VERIFY_DEFAULTS = {
    "scales": [5, 15, 40],
    "coupling_seeds": 10,
    "knapsack_grid": 20000,
    "p_short_min": 0.80,
    "throughput_gap_max": 0.08,
    "wait_abandoned_tol": 0.45,
}


def scenario_verify(cfg: SystemConfig, options: dict, workers: int = 1):
    """Run the cross-check battery; returns a report dict with per-check results."""
    if cfg.rho <= 1.0:
        raise ConfigError("rho: verify requires an overloaded config (rho > 1)")
    opts = {**VERIFY_DEFAULTS, **options}
    checks = []

    def record(name, passed, detail):
        checks.append({"name": name, "passed": bool(passed), "detail": detail})

    thr = solve_threshold(cfg.service, cfg.rho)
    residual = abs(cfg.service.truncated_first_moment(thr.tau) - thr.scaled_capacity)
    record("threshold_residual", residual <= 1e-10,
           f"|E[S 1(S<=tau)] - s/lambda| = {residual:.3g}")

    worst = min(
        solve_threshold(svc, rho).g_tau - 1.0 / rho
        for svc in (dists.exponential(1.0), dists.weibull(0.7, mean=1.0),
                    dists.pareto(2.0, mean=1.0))
        for rho in (1.1, 1.4, 2.0)
    )
    record("throughput_inequality", worst > 0.0,
           f"min over grid of G(tau) - 1/rho = {worst:.4g}")

    err = max(
        abs(analytics.erlang_blocking(s, float(s))
            - analytics.erlang_blocking_integral(s, float(s)))
        for s in (1, 2, 5, 10, 20, 50, 100, 200)
    )
    record("erlang_equivalence", err <= 1e-9,
           f"max |recursion - integral| = {err:.3g}")

    bound = analytics.throughput_bound_oracle(
        cfg.service, thr.tau, int(opts["knapsack_grid"]), BoundMode.MAX_THROUGHPUT)
    rel = abs(bound.value - thr.g_tau) / thr.g_tau
    record("knapsack_bound", rel <= 1e-3 and bound.prefix_in_x,
           f"rel gap to G(tau) = {rel:.3g}, prefix structure = {bound.prefix_in_x}")

    exp_pat = dists.exponential(1.0)
    gap = abs(analytics.fcfs_fluid_wait(exp_pat, cfg.rho)
              - analytics.lcfs_fluid_wait(1.0, cfg.rho))
    record("memoryless_blind_equality", gap <= 1e-12,
           f"|FCFS - LCFS| fluid wait = {gap:.3g}")

    violations = 0
    for seed in expand_seeds(cfg.seeds[0], int(opts["coupling_seeds"])):
        _, _, counters = simcore.run_coupled(cfg, thr.tau, seed)
        violations += counters.violations
    record("coupling_inequality", violations == 0,
           f"{violations} violations over {opts['coupling_seeds']} seeds")

    sweep = stats.convergence_sweep(cfg, opts["scales"], workers=workers)
    top = max(int(s) for s in opts["scales"])
    p_short = sweep.metric(top, "p_served_given_short").estimate
    th_gap = sweep.metric(top, "throughput_per_arrival").gap
    wait_ab_gap = sweep.metric(top, "wait_given_abandoned").gap
    ok = (not sweep.non_shrinking
          and p_short >= opts["p_short_min"]
          and th_gap <= opts["throughput_gap_max"]
          and wait_ab_gap <= opts["wait_abandoned_tol"])
    record("collapse_trend", ok,
           f"non_shrinking={list(sweep.non_shrinking)}, "
           f"p_short@{top}={p_short:.3f}, th_gap={th_gap:.3f}, "
           f"wait_ab_gap={wait_ab_gap:.3f}")

    return {
        "checks": checks,
        "passed": all(c["passed"] for c in checks),
        "config": {"rho": cfg.rho, "servers": cfg.servers,
                   "service": cfg.service.label(),
                   "patience": cfg.patience.label()},
    }, sweep


# ---------------------------------------------------------------------- #
# output helpers
# ---------------------------------------------------------------------- #


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.12g}"


def write_csv(path: Path, comment: str, columns, rows) -> Path:
    """Deterministic CSV: versioned comment line, header, 12-significant-digit floats."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        fh.write(f"# srptq v{__version__} {comment}\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")
    return path


def _load_config(args) -> SystemConfig:
    if args.config is not None:
        cfg = config_from_file(args.config)
        raw = json.loads(Path(args.config).read_text())
    else:
        raw = dict(DEFAULT_CONFIG)
        cfg = config_from_dict(raw)
    overrides = {}
    for key in ("discipline", "horizon", "warmup", "batches", "servers", "rho"):
        val = getattr(args, key, None)
        if val is not None:
            overrides[key] = val
    if overrides:
        merged = dict(raw)
        merged.update(overrides)
        if ("servers" in overrides or "rho" in overrides) and "lambda" in merged:
            del merged["lambda"]  # re-derive the triple from the overridden pair
        cfg = config_from_dict(merged)
    seed_base = getattr(args, "seed_base", None)
    replications = getattr(args, "replications", None)
    if seed_base is not None:
        reps = replications or len(cfg.seeds)
        cfg = SystemConfig(**{**cfg.__dict__, "seeds": expand_seeds(seed_base, reps)})
    elif replications is not None:
        cfg = SystemConfig(**{**cfg.__dict__,
                              "seeds": expand_seeds(cfg.seeds[0], replications)})
    return cfg


def _verify_options(args) -> dict:
    if args.config is None:
        return {}
    raw = json.loads(Path(args.config).read_text())
    return raw.get("verify", {})


def _shape_grid(args, family: Family, coarse=False):
    if args.shapes:
        return tuple(float(s) for s in args.shapes.split(","))
    if family is Family.PARETO:
        return PARETO_GRID
    return WEIBULL_COARSE if coarse else WEIBULL_GRID


# ---------------------------------------------------------------------- #
# subcommand handlers
# ---------------------------------------------------------------------- #


def cmd_threshold(args) -> int:
    cfg = _load_config(args)
    thr = solve_threshold(cfg.service, cfg.rho)
    columns = ("service_family", "service_shape", "service_scale", "rho",
               "tau", "g_tau", "scaled_capacity")
    row = (cfg.service.family.value, cfg.service.shape or "", cfg.service.scale,
           cfg.rho, thr.tau, thr.g_tau, thr.scaled_capacity)
    path = write_csv(args.out / "threshold.csv",
                     "threshold; columns: " + ",".join(columns), columns, [row])
    print(f"tau={thr.tau:.6f} g_tau={thr.g_tau:.6f} -> {path}")
    return 0


def cmd_limits(args) -> int:
    cfg = _load_config(args)
    rep = asymptotic_report(cfg.service, cfg.patience, cfg.rho)
    columns = ("service", "patience", "rho") + rep.CSV_COLUMNS
    row = (cfg.service.label(), cfg.patience.label(), cfg.rho) + rep.to_row()
    path = write_csv(args.out / "limits.csv",
                     "limit formulas; columns: " + ",".join(columns), columns, [row])
    print(f"srpt_wait={rep.srpt_wait:.6f} fcfs_fluid_wait={rep.fcfs_fluid_wait:.6f} "
          f"lcfs_fluid_wait={rep.lcfs_fluid_wait:.6f} -> {path}")
    return 0


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    tau = (solve_threshold(cfg.service, cfg.rho).tau if cfg.rho > 1
           and cfg.service.family is not Family.DETERMINISTIC else float("inf"))
    per_seed = []
    first_trace = None
    for seed in cfg.seeds:
        trace = simcore.run(cfg, seed, tau=tau,
                            debug_invariants=args.debug_invariants)
        if first_trace is None:
            first_trace = trace
        per_seed.append(stats.estimate(trace, cfg.warmup, cfg.batches))
    pooled = stats.pool(per_seed)
    columns = ("metric", "estimate", "half_width")
    rows = [(name, getattr(pooled, name).value, getattr(pooled, name).half_width)
            for name in stats.METRIC_FIELDS]
    rows.append(("residual_fraction", pooled.residual_fraction, 0.0))
    path = write_csv(
        args.out / "metrics.csv",
        f"simulate discipline={cfg.discipline.value} servers={cfg.servers} "
        f"rho={_fmt(cfg.rho)} seeds={len(cfg.seeds)}; columns: " + ",".join(columns),
        columns, rows)
    if args.dump_trace:
        first_trace.to_csv(args.out / "trace.csv")
    for name in ("throughput_per_arrival", "wait_given_abandoned", "wait_overall"):
        est = getattr(pooled, name)
        print(f"{name} = {est.value:.6g} +- {est.half_width:.3g}")
    print(f"-> {path}")
    return 0


def cmd_couple(args) -> int:
    cfg = _load_config(args)
    tau = solve_threshold(cfg.service, cfg.rho).tau
    columns = ("seed", "loss_short_served", "srpt_total_served", "violations")
    rows = []
    first_counters = None
    for seed in cfg.seeds:
        _, _, counters = simcore.run_coupled(cfg, tau, seed,
                                             debug_invariants=args.debug_invariants)
        if first_counters is None:
            first_counters = counters
        rows.append((seed, int(counters.n_l1[-1]) if len(counters.times) else 0,
                     int(counters.n_o[-1]) if len(counters.times) else 0,
                     counters.violations))
    path = write_csv(args.out / "couple.csv",
                     f"coupled runs tau={_fmt(tau)} servers={cfg.servers}; "
                     "columns: " + ",".join(columns), columns, rows)
    if not args.no_plot and first_counters is not None:
        plotting.coupling_figure(args.out / "couple.png", first_counters)
    print(f"{len(rows)} coupled runs, 0 violations -> {path}")
    return 0


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    scales = tuple(int(s) for s in args.scales.split(","))
    report = stats.convergence_sweep(cfg, scales, workers=args.workers)
    path = write_csv(args.out / "sweep.csv",
                     f"convergence sweep scales={args.scales} seeds={len(cfg.seeds)}; "
                     "columns: " + ",".join(report.CSV_COLUMNS),
                     report.CSV_COLUMNS, report.row_tuples())
    if not args.no_plot:
        plotting.sweep_figure(args.out / "sweep.png", report)
    for name, s0, s1 in report.non_shrinking:
        print(f"warning: gap for {name} grew from scale {s0} to {s1}")
    print(f"-> {path}")
    return 0


def _figure_cmd(args, number: int) -> int:
    family = Family(args.family)
    rho = args.rho if args.rho is not None else 1.4
    if number == 1:
        columns, rows = scenario_figure1(_shape_grid(args, family), family, rho)
        name, xlabel = "figure1", f"{family.value} patience shape"
        comment = f"figure1 family={family.value} rho={_fmt(rho)}"
    elif number == 2:
        columns, rows = scenario_figure2(
            _shape_grid(args, family, coarse=True), family, rho)
        name, xlabel = "figure2", f"{family.value} service shape"
        comment = f"figure2 family={family.value} rho={_fmt(rho)}"
    else:
        grid = _shape_grid(args, Family.WEIBULL)
        columns, rows = scenario_figure3(grid, args.patience_shape, rho)
        name, xlabel = "figure3", "weibull service shape"
        comment = (f"figure3 patience_shape={_fmt(args.patience_shape)} "
                   f"rho={_fmt(rho)}")
    suffix = f"_{family.value}" if number in (1, 2) else f"_p{args.patience_shape:g}"
    path = write_csv(args.out / f"{name}{suffix}.csv",
                     comment + "; columns: " + ",".join(columns), columns, rows)
    if not args.no_plot:
        x = [r[0] for r in rows]
        series = {col: [r[i] for r in rows] for i, col in enumerate(columns) if i > 0}
        ylabel = "throughput per arrival" if number == 2 else "steady-state wait"
        plotting.line_figure(args.out / f"{name}{suffix}.png", x, series,
                             xlabel=xlabel, ylabel=ylabel, title=comment)
    print(f"-> {path}")
    return 0


def cmd_verify(args) -> int:
    cfg = _load_config(args)
    report, sweep = scenario_verify(cfg, _verify_options(args), workers=args.workers)
    args.out.mkdir(parents=True, exist_ok=True)
    out = args.out / "verify_report.json"
    out.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    for check in report["checks"]:
        print(f"{'PASS' if check['passed'] else 'FAIL'} {check['name']}: "
              f"{check['detail']}")
    print(f"-> {out}")
    return 0 if report["passed"] else 1


# ---------------------------------------------------------------------- #
# parser
# ---------------------------------------------------------------------- #


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="srptq",
        description="Overloaded multiserver queue with abandonment: SRPT vs "
                    "blind disciplines, simulation and limit formulas.")
    parser.add_argument("--version", action="version", version=f"srptq {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(sp, simulation=False):
        sp.add_argument("--config", type=Path, help="JSON config file")
        sp.add_argument("--out", type=Path, default=Path("."),
                        help="output directory (default: current directory)")
        sp.add_argument("--no-plot", action="store_true",
                        help="skip companion PNG figures")
        sp.add_argument("--rho", type=float, default=None)
        if simulation:
            sp.add_argument("--seed-base", type=int, default=None,
                            help="expand a deterministic seed list from this base")
            sp.add_argument("--replications", type=int, default=None)
            sp.add_argument("--workers", type=int, default=1)
            sp.add_argument("--debug-invariants", action="store_true")
            sp.add_argument("--discipline", default=None,
                            choices=[d.value for d in Discipline])
            sp.add_argument("--servers", type=int, default=None)
            sp.add_argument("--horizon", type=float, default=None)
            sp.add_argument("--warmup", type=float, default=None)
            sp.add_argument("--batches", type=int, default=None)

    sp = sub.add_parser("threshold", help="solve the short-job cutoff")
    add_common(sp)
    sp.set_defaults(func=cmd_threshold)

    sp = sub.add_parser("limits", help="emit the limit-formula report row")
    add_common(sp)
    sp.set_defaults(func=cmd_limits)

    sp = sub.add_parser("simulate", help="run replications and estimate metrics")
    add_common(sp, simulation=True)
    sp.add_argument("--dump-trace", action="store_true",
                    help="also write per-customer records for the first seed")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("couple", help="coupled SRPT / loss-system runs")
    add_common(sp, simulation=True)
    sp.set_defaults(func=cmd_couple)

    sp = sub.add_parser("sweep", help="convergence sweep across server counts")
    add_common(sp, simulation=True)
    sp.add_argument("--scales", default="5,15,40",
                    help="comma-separated server counts")
    sp.set_defaults(func=cmd_sweep)

    for i in (1, 2, 3):
        sp = sub.add_parser(f"figure{i}", help=f"emit the figure-{i} study table")
        add_common(sp)
        if i in (1, 2):
            sp.add_argument("--family", default="weibull",
                            choices=["weibull", "pareto"])
        else:
            sp.set_defaults(family="weibull")
            sp.add_argument("--patience-shape", type=float, default=0.4,
                            choices=None)
        sp.add_argument("--shapes", default=None,
                        help="comma-separated shape grid override")
        sp.set_defaults(func=lambda a, i=i: _figure_cmd(a, i))

    sp = sub.add_parser("verify", help="run the cross-check battery")
    add_common(sp, simulation=True)
    sp.set_defaults(func=cmd_verify)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, analytics.NotOverloadedError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except simcore.CouplingViolationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
