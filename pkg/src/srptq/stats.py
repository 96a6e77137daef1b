"""Steady-state estimation from simulation traces.

One long run is truncated at a warmup point and split into equal-count
batches of customers; batch means give Student-t confidence half-widths.
Replications pool by treating per-replication estimates as i.i.d. samples.
A convergence sweep reruns the same load at growing server counts and
compares each estimate against its large-system target.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy.stats import t as student_t

from . import analytics, simcore
from .simcore import JobClass, SimTrace, Status


class InsufficientDataError(ValueError):
    """A batch has too few post-warmup customers to estimate from."""


class Estimate(NamedTuple):
    value: float
    half_width: float

    def __str__(self) -> str:  # pragma: no cover
        return f"{self.value:.6g} +- {self.half_width:.3g}"


# metric fields that carry an Estimate, in report order
METRIC_FIELDS = (
    "throughput_per_arrival",
    "throughput_short",
    "throughput_long",
    "p_served_given_short",
    "p_served_given_long",
    "wait_given_served",
    "wait_given_abandoned",
    "wait_overall",
    "abandonment_fraction",
    "lost_fraction",
)


@dataclass(frozen=True)
class SimMetrics:
    """Point estimates with 95% half-widths for one run or a pooled set.

    Point values come from the full post-warmup sample so that
    throughput + abandonment + loss + residual fractions add to exactly 1;
    half-widths come from batch (or replication) variability.  Customers
    still in the system at the horizon are excluded from wait estimators and
    reported as ``residual_fraction``.
    """

    throughput_per_arrival: Estimate
    throughput_short: Estimate
    throughput_long: Estimate
    p_served_given_short: Estimate
    p_served_given_long: Estimate
    wait_given_served: Estimate
    wait_given_abandoned: Estimate
    wait_overall: Estimate
    abandonment_fraction: Estimate
    lost_fraction: Estimate
    residual_fraction: float
    arrivals: int
    replication_count: int
    batch_count: int


def _half_width(values: np.ndarray, confidence: float) -> float:
    # sorted reduction makes the result exactly invariant to input order
    values = np.sort(values[~np.isnan(values)])
    k = len(values)
    if k < 2:
        return float("nan")
    spread = float(np.std(values, ddof=1))
    tcrit = float(student_t.ppf(0.5 + confidence / 2.0, df=k - 1))
    return tcrit * spread / np.sqrt(k)


def _ratio(num, den) -> float:
    return float(num) / float(den) if den else float("nan")


def _mean(x) -> float:
    return float(np.mean(x)) if len(x) else float("nan")


def estimate(trace: SimTrace, warmup: float, batches: int = 20,
             confidence: float = 0.95) -> SimMetrics:
    """Batch-means metrics over customers arriving at or after ``warmup``."""
    if warmup >= trace.horizon:
        raise ValueError(f"warmup {warmup} must lie below the horizon {trace.horizon}")
    if batches < 5:
        raise ValueError(f"batches must be >= 5, got {batches}")
    keep = np.nonzero(trace.arrival_time >= warmup)[0]
    splits = np.array_split(keep, batches)
    sizes = [len(sp) for sp in splits]
    if min(sizes, default=0) < 30:
        raise InsufficientDataError(
            f"insufficient data: smallest batch has {min(sizes, default=0)} "
            f"post-warmup customers (need >= 30)"
        )

    point = _group_values(trace, keep)
    batch_vals = {name: np.array([_group_values(trace, sp)[name] for sp in splits])
                  for name in METRIC_FIELDS}
    fields = {
        name: Estimate(point[name], _half_width(batch_vals[name], confidence))
        for name in METRIC_FIELDS
    }
    return SimMetrics(
        **fields,
        residual_fraction=point["residual_fraction"],
        arrivals=len(keep),
        replication_count=1,
        batch_count=batches,
    )


def _group_values(trace: SimTrace, idx: np.ndarray) -> dict:
    st = trace.status[idx]
    kl = trace.klass[idx]
    wait = trace.wait[idx]
    n = len(idx)
    served = st == int(Status.SERVED)
    abandoned = st == int(Status.ABANDONED)
    lost = st == int(Status.LOST)
    done = served | abandoned | lost
    short = kl == int(JobClass.SHORT)
    return {
        "throughput_per_arrival": _ratio(served.sum(), n),
        "throughput_short": _ratio((served & short).sum(), n),
        "throughput_long": _ratio((served & ~short).sum(), n),
        "p_served_given_short": _ratio((served & short).sum(), short.sum()),
        "p_served_given_long": _ratio((served & ~short).sum(), (~short).sum()),
        "wait_given_served": _mean(wait[served]),
        "wait_given_abandoned": _mean(wait[abandoned]),
        "wait_overall": _mean(wait[done]),
        "abandonment_fraction": _ratio(abandoned.sum(), n),
        "lost_fraction": _ratio(lost.sum(), n),
        "residual_fraction": _ratio(n - done.sum(), n),
    }


def pool(metrics: Sequence[SimMetrics], confidence: float = 0.95) -> SimMetrics:
    """Combine replications: means of per-replication values, t half-widths.

    Aggregation is symmetric in its inputs, so partial results from parallel
    workers can be merged in any order.
    """
    if not metrics:
        raise ValueError("nothing to pool")
    if len(metrics) == 1:
        return metrics[0]
    fields = {}
    for name in METRIC_FIELDS:
        vals = np.array([getattr(m, name).value for m in metrics], dtype=float)
        live = np.sort(vals[~np.isnan(vals)])   # merge order must not matter
        fields[name] = Estimate(_mean(live), _half_width(vals, confidence))
    weights = np.array([m.arrivals for m in metrics], dtype=float)
    resid = np.array([m.residual_fraction for m in metrics])
    return SimMetrics(
        **fields,
        residual_fraction=float(np.average(resid, weights=weights)),
        arrivals=int(weights.sum()),
        replication_count=sum(m.replication_count for m in metrics),
        batch_count=metrics[0].batch_count,
    )


# ---------------------------------------------------------------------- #
# convergence sweep
# ---------------------------------------------------------------------- #


@dataclass(frozen=True)
class SweepRow:
    scale: int
    metric: str
    estimate: float
    half_width: float
    target: float
    gap: float


@dataclass(frozen=True)
class SweepReport:
    """Per-scale estimates against their large-system targets.

    ``non_shrinking`` lists (metric, smaller scale, larger scale) pairs where
    the gap to the target grew by more than the combined half-widths.
    """

    scales: tuple[int, ...]
    rows: tuple[SweepRow, ...]
    non_shrinking: tuple[tuple[str, int, int], ...]
    pooled: dict

    CSV_COLUMNS = ("scale", "metric", "estimate", "half_width", "target", "gap")

    def row_tuples(self):
        return [(r.scale, r.metric, r.estimate, r.half_width, r.target, r.gap)
                for r in self.rows]

    def gaps(self, metric: str) -> list[float]:
        return [r.gap for r in self.rows if r.metric == metric]

    def metric(self, scale: int, name: str) -> SweepRow:
        for r in self.rows:
            if r.scale == scale and r.metric == name:
                return r
        raise KeyError((scale, name))


# sweep metrics with large-system targets; None marks "derived later"
_TARGETED = (
    "throughput_per_arrival",
    "p_served_given_short",
    "p_served_given_long",
    "wait_given_served",
    "wait_given_abandoned",
    "wait_overall",
    "abandonment_fraction",
)


def _replication_job(args):
    cfg, seed, tau = args
    trace = simcore.run(cfg, seed, tau=tau)
    return estimate(trace, cfg.warmup, cfg.batches)


def convergence_sweep(base, scales: Sequence[int],
                      seeds: Sequence[int] | None = None,
                      workers: int = 1) -> SweepReport:
    """Run the configured discipline at each scale and compare with targets.

    Holds rho fixed; lambda is recomputed per scale.  Targets come from the
    threshold solution: served fraction for throughput, zero wait for served
    customers, the patience mean for abandoning ones.
    """
    seeds = tuple(seeds if seeds is not None else base.seeds)
    limits = analytics.srpt_limits(base.service, base.patience.mean(), base.rho)
    targets = {
        "throughput_per_arrival": limits.throughput_per_arrival,
        "p_served_given_short": 1.0,
        "p_served_given_long": 0.0,
        "wait_given_served": 0.0,
        "wait_given_abandoned": limits.wait_given_abandoned,
        "wait_overall": limits.wait,
        "abandonment_fraction": 1.0 - limits.served_fraction,
    }
    tau = limits.threshold.tau

    jobs = [(base.at_scale(s), seed, tau) for s in scales for seed in seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool_:
            results = list(pool_.map(_replication_job, jobs))
    else:
        results = [_replication_job(j) for j in jobs]

    pooled = {}
    for i, s in enumerate(scales):
        reps = results[i * len(seeds):(i + 1) * len(seeds)]
        pooled[int(s)] = pool(reps)

    rows = []
    for s in scales:
        m = pooled[int(s)]
        for name in _TARGETED:
            est = getattr(m, name)
            rows.append(SweepRow(
                scale=int(s), metric=name, estimate=est.value,
                half_width=est.half_width, target=targets[name],
                gap=abs(est.value - targets[name]),
            ))

    non_shrinking = []
    for name in _TARGETED:
        seq = [(r.scale, r.gap, r.half_width) for r in rows if r.metric == name]
        for (s0, g0, h0), (s1, g1, h1) in zip(seq, seq[1:]):
            slack = (0.0 if np.isnan(h0) else h0) + (0.0 if np.isnan(h1) else h1)
            if g1 > g0 + slack:
                non_shrinking.append((name, s0, s1))

    return SweepReport(
        scales=tuple(int(s) for s in scales),
        rows=tuple(rows),
        non_shrinking=tuple(non_shrinking),
        pooled=pooled,
    )
