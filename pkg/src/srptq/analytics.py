"""Closed-form and semi-analytic performance quantities for the overloaded queue.

Everything here is a pure function of distribution specs and load parameters:
the short-job threshold tau, the limiting SRPT performance measures, fluid
waiting times for the blind disciplines (FCFS, LCFS), Erlang blocking for the
loss system, and a discretized fractional-knapsack oracle for the throughput
upper bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.integrate import quad as _scipy_quad

from .dists import DistributionSpec, Family


class NotOverloadedError(ValueError):
    """Traffic intensity is at or below 1, so the threshold is infinite."""


class NoBracketError(RuntimeError):
    """The truncated moment never reached the capacity target (engine guard)."""


class QuantileUndefinedError(ValueError):
    """The patience CDF never reaches the requested fluid boundary level."""


class GridTooCoarseError(ValueError):
    """Consecutive-grid knapsack estimates disagree beyond tolerance."""


# ---------------------------------------------------------------------- #
# threshold
# ---------------------------------------------------------------------- #


@dataclass(frozen=True)
class ThresholdResult:
    """Solution of E[S * 1(S <= tau)] = s / lambda = 1/(rho * mu)."""

    tau: float
    g_tau: float             # service CDF at tau (fraction of short jobs)
    scaled_capacity: float   # capacity per unit arrival rate, 1/(rho*mu)


def solve_threshold(service: DistributionSpec, rho: float,
                    mu: float | None = None, *,
                    residual_tol: float = 1e-10) -> ThresholdResult:
    """Find the service-time cutoff where short-job workload fills capacity.

    Bisection on the monotone truncated first moment; the bracket upper end
    is doubled from 1 until it covers the target.  Requires rho > 1 (the
    cutoff is infinite otherwise) and a continuous service distribution.
    """
    if rho <= 1.0:
        raise NotOverloadedError(
            f"not overloaded: rho must exceed 1 (got {rho}); tau would be infinite"
        )
    if service.family is Family.DETERMINISTIC:
        raise ValueError("threshold solving requires a continuous service distribution")
    mean = service.mean()
    if mu is not None and abs(mu * mean - 1.0) > 1e-9:
        raise ValueError(
            f"mu={mu} disagrees with the service mean {mean} (expected mu=1/mean)"
        )
    target = mean / rho

    upper = 1.0
    for _ in range(200):
        if service.truncated_first_moment(upper) >= target:
            break
        upper *= 2.0
    else:  # pragma: no cover - unreachable for valid finite-mean inputs
        raise NoBracketError("truncated moment never reached the capacity target")

    lo, hi = 0.0, upper
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if service.truncated_first_moment(mid) < target:
            lo = mid
        else:
            hi = mid
    tau = 0.5 * (lo + hi)
    residual = service.truncated_first_moment(tau) - target
    if abs(residual) > residual_tol:  # pragma: no cover - monotone bisection converges
        raise NoBracketError(f"bisection residual {residual:g} above {residual_tol:g}")
    return ThresholdResult(tau=tau, g_tau=float(service.cdf(tau)),
                           scaled_capacity=target)


# ---------------------------------------------------------------------- #
# limiting SRPT performance
# ---------------------------------------------------------------------- #


@dataclass(frozen=True)
class SrptLimits:
    """Large-system limits of the SRPT queue's steady-state measures.

    Waits depend on patience only through its mean: the served fraction
    g_tau waits 0, the abandoning fraction waits its full patience.
    """

    threshold: ThresholdResult
    served_fraction: float
    throughput_per_arrival: float
    wait: float
    wait_given_served: float
    wait_given_abandoned: float


def srpt_limits(service: DistributionSpec, patience_mean: float, rho: float,
                mu: float | None = None) -> SrptLimits:
    if patience_mean <= 0:
        raise ValueError(f"patience mean must be positive, got {patience_mean}")
    thr = solve_threshold(service, rho, mu)
    g = thr.g_tau
    return SrptLimits(
        threshold=thr,
        served_fraction=g,
        throughput_per_arrival=g,
        wait=(1.0 - g) * patience_mean,
        wait_given_served=0.0,
        wait_given_abandoned=patience_mean,
    )


# ---------------------------------------------------------------------- #
# blind-policy fluid waits
# ---------------------------------------------------------------------- #


def fcfs_fluid_boundary(patience: DistributionSpec, rho: float) -> float:
    """Fluid offered-wait boundary: the (1 - 1/rho) quantile of patience."""
    if rho <= 1.0:
        raise NotOverloadedError(f"rho must exceed 1, got {rho}")
    if patience.family is Family.DETERMINISTIC:
        raise QuantileUndefinedError(
            "quantile undefined: patience CDF must be continuous and strictly "
            "increasing at the boundary level"
        )
    return float(patience.ppf(1.0 - 1.0 / rho))


def fcfs_fluid_wait(patience: DistributionSpec, rho: float) -> float:
    """Fluid steady-state wait under FCFS.

    Customers with patience below the boundary w abandon after their full
    patience; the rest wait exactly w: E[T 1(T <= w)] + w (1 - F(w)).
    """
    w = fcfs_fluid_boundary(patience, rho)
    return float(patience.truncated_first_moment(w) + w * patience.sf(w))


def lcfs_fluid_wait(patience_mean: float, rho: float) -> float:
    """Fluid steady-state wait under LCFS: (1 - 1/rho) * E[T].

    In the LCFS fluid, a 1/rho fraction is served without waiting and the
    rest abandon after their full patience.
    """
    if rho <= 1.0:
        raise NotOverloadedError(f"rho must exceed 1, got {rho}")
    if patience_mean <= 0:
        raise ValueError(f"patience mean must be positive, got {patience_mean}")
    return (1.0 - 1.0 / rho) * patience_mean


# ---------------------------------------------------------------------- #
# Erlang loss
# ---------------------------------------------------------------------- #


def erlang_blocking(servers: int, offered_load: float) -> float:
    """Blocking probability of an M/GI/s/s system, stable recursion.

    B(0) = 1, B(k) = r B(k-1) / (k + r B(k-1)).  Insensitive to the service
    distribution beyond its mean.
    """
    s = int(servers)
    if s < 1:
        raise ValueError(f"servers must be >= 1, got {servers}")
    r = float(offered_load)
    if r <= 0:
        raise ValueError(f"offered load must be positive, got {offered_load}")
    b = 1.0
    for k in range(1, s + 1):
        rb = r * b
        b = rb / (k + rb)
    return b


def erlang_blocking_integral(servers: int, offered_load: float) -> float:
    """Blocking probability via 1 / Int_0^inf (1 + t/r)^s e^{-t} dt.

    Numerical cross-check for the recursion; the integrand is evaluated in
    log space so large s does not overflow.
    """
    s = int(servers)
    r = float(offered_load)

    def integrand(t):
        return math.exp(s * math.log1p(t / r) - t)

    val, _ = _scipy_quad(integrand, 0.0, np.inf, limit=200)
    return 1.0 / val


def loss_class1_throughput(lam: float, servers: int, g_tau: float) -> float:
    """Rate at which short jobs finish service in the two-class loss system.

    Short jobs see a single-class loss system with offered load equal to the
    server count, so the rate is lam * g_tau * (1 - B(s, s)); scaled by lam
    it approaches g_tau as s grows.
    """
    return lam * g_tau * (1.0 - erlang_blocking(servers, float(servers)))


# ---------------------------------------------------------------------- #
# throughput bound via fractional knapsack
# ---------------------------------------------------------------------- #


class BoundMode(Enum):
    MAX_THROUGHPUT = "max-throughput"
    MIN_WORKLOAD = "min-workload"


@dataclass(frozen=True)
class KnapsackBound:
    """Greedy LP optimum over a service-time grid.

    ``boundary`` is where the greedy selection turns fractional; for a valid
    run the selection is an x-prefix (the indicator structure of the optimum)
    and the boundary cell brackets tau.
    """

    value: float
    boundary_lo: float
    boundary_hi: float
    boundary_fraction: float
    prefix_in_x: bool
    grid_size: int


def throughput_bound_oracle(service: DistributionSpec, tau: float,
                            grid_size: int, mode: BoundMode) -> KnapsackBound:
    """Solve the throughput-bound LP by greedy fractional knapsack on a grid.

    MAX_THROUGHPUT maximizes served probability mass subject to the workload
    budget E[S 1(S <= tau)] and converges to the short-job fraction G(tau);
    MIN_WORKLOAD minimizes workload subject to serving at least mass G(tau)
    and converges to E[S 1(S <= tau)].  Cells are midpoint-weighted; the last
    cell is taken fractionally.  Raises GridTooCoarseError when halving the
    grid moves the estimate by more than 1e-3 relative.
    """
    if grid_size < 100:
        raise ValueError(f"grid_size must be >= 100, got {grid_size}")
    if tau < 0:
        raise ValueError(f"tau must be nonnegative, got {tau}")
    mode = BoundMode(mode)
    value = _greedy_bound(service, tau, grid_size, mode)
    coarse = _greedy_bound(service, tau, max(50, grid_size // 2), mode)
    scale = max(abs(value.value), abs(coarse.value), 1e-12)
    if abs(value.value - coarse.value) > 1e-3 * scale:
        raise GridTooCoarseError(
            f"grid too coarse: estimates {coarse.value:.6g} (n={grid_size // 2}) and "
            f"{value.value:.6g} (n={grid_size}) differ beyond 1e-3 relative"
        )
    return value


def _greedy_bound(service, tau, grid_size, mode):
    if tau == 0.0:
        return KnapsackBound(0.0, 0.0, 0.0, 0.0, True, grid_size)
    upper = 2.0 * tau
    edges = np.linspace(0.0, upper, grid_size + 1)
    mass = np.diff(service.cdf(edges))
    mid = 0.5 * (edges[:-1] + edges[1:])
    weight = mid * mass

    live = mass > 0.0
    idx = np.nonzero(live)[0]
    # value/weight ratio is 1/midpoint, so the greedy order is ascending x
    order = idx[np.argsort(mid[idx], kind="stable")]
    m_ord = mass[order]
    w_ord = weight[order]

    if mode is BoundMode.MAX_THROUGHPUT:
        budget = float(service.truncated_first_moment(tau))
        cost, gain = w_ord, m_ord
    else:
        budget = float(service.cdf(tau))
        cost, gain = m_ord, w_ord

    cum = np.cumsum(cost)
    k = int(np.searchsorted(cum, budget, side="right"))  # cells taken in full
    taken = float(np.sum(gain[:k]))
    if k == 0:
        spent = 0.0
    else:
        spent = float(cum[k - 1])
    if k < len(order) and cost[k] > 0:
        frac = (budget - spent) / float(cost[k])
        frac = min(max(frac, 0.0), 1.0)
        taken += frac * float(gain[k])
        cell = order[k]
    else:
        frac = 0.0
        cell = order[k - 1] if k > 0 else 0

    # greedy order equals grid order on live cells, so selection is an x-prefix
    prefix = bool(np.all(np.diff(order) > 0))
    return KnapsackBound(
        value=taken,
        boundary_lo=float(edges[cell]),
        boundary_hi=float(edges[cell + 1]),
        boundary_fraction=float(frac),
        prefix_in_x=prefix,
        grid_size=grid_size,
    )


# ---------------------------------------------------------------------- #
# combined report
# ---------------------------------------------------------------------- #


@dataclass(frozen=True)
class AsymptoticReport:
    """All large-system quantities for one (service, patience, rho) scenario."""

    threshold: ThresholdResult
    srpt_throughput_per_arrival: float
    srpt_wait: float
    srpt_wait_given_served: float
    srpt_wait_given_abandon: float
    fcfs_fluid_wait: float
    lcfs_fluid_wait: float
    blind_throughput_per_arrival: float
    fcfs_fluid_boundary_wait: float

    CSV_COLUMNS = (
        "tau",
        "g_tau",
        "scaled_capacity",
        "srpt_throughput_per_arrival",
        "srpt_wait",
        "srpt_wait_given_served",
        "srpt_wait_given_abandon",
        "fcfs_fluid_wait",
        "lcfs_fluid_wait",
        "blind_throughput_per_arrival",
        "fcfs_fluid_boundary_wait",
    )

    def to_row(self) -> tuple:
        return (
            self.threshold.tau,
            self.threshold.g_tau,
            self.threshold.scaled_capacity,
            self.srpt_throughput_per_arrival,
            self.srpt_wait,
            self.srpt_wait_given_served,
            self.srpt_wait_given_abandon,
            self.fcfs_fluid_wait,
            self.lcfs_fluid_wait,
            self.blind_throughput_per_arrival,
            self.fcfs_fluid_boundary_wait,
        )


def asymptotic_report(service: DistributionSpec, patience: DistributionSpec,
                      rho: float, mu: float | None = None) -> AsymptoticReport:
    limits = srpt_limits(service, patience.mean(), rho, mu)
    return AsymptoticReport(
        threshold=limits.threshold,
        srpt_throughput_per_arrival=limits.throughput_per_arrival,
        srpt_wait=limits.wait,
        srpt_wait_given_served=limits.wait_given_served,
        srpt_wait_given_abandon=limits.wait_given_abandoned,
        fcfs_fluid_wait=fcfs_fluid_wait(patience, rho),
        lcfs_fluid_wait=lcfs_fluid_wait(patience.mean(), rho),
        blind_throughput_per_arrival=1.0 / rho,
        fcfs_fluid_boundary_wait=fcfs_fluid_boundary(patience, rho),
    )
