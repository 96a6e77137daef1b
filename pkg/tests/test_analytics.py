"""Threshold, limit formulas, Erlang blocking, knapsack bound."""

import math

import numpy as np
import pytest

from srptq import analytics, dists
from srptq.analytics import (
    BoundMode,
    GridTooCoarseError,
    NotOverloadedError,
    QuantileUndefinedError,
    erlang_blocking,
    erlang_blocking_integral,
    fcfs_fluid_boundary,
    fcfs_fluid_wait,
    lcfs_fluid_wait,
    loss_class1_throughput,
    solve_threshold,
    srpt_limits,
    throughput_bound_oracle,
)
from srptq.quadrature import adaptive_simpson

from oracles import threshold_oracle

EXP1 = dists.exponential(1.0)


class TestThreshold:
    def test_exponential_rho_14(self):
        thr = solve_threshold(EXP1, 1.4)
        # independent quadrature + bisection oracle
        assert thr.tau == pytest.approx(threshold_oracle(EXP1, 1.4), abs=1e-6)
        assert thr.tau == pytest.approx(2.51, abs=0.005)
        assert thr.g_tau == pytest.approx(0.9185, abs=5e-4)
        residual = EXP1.truncated_first_moment(thr.tau) - 1.0 / 1.4
        assert abs(residual) <= 1e-10

    def test_near_critical_rho_pushes_tau_out(self):
        thr = solve_threshold(EXP1, 1.0001)
        assert thr.tau > 9.0

    def test_not_overloaded_rejected(self):
        with pytest.raises(NotOverloadedError):
            solve_threshold(EXP1, 0.9)
        with pytest.raises(NotOverloadedError):
            solve_threshold(EXP1, 1.0)

    def test_deterministic_service_rejected(self):
        with pytest.raises(ValueError):
            solve_threshold(dists.deterministic(1.0), 1.4)

    def test_explicit_mu_validated(self):
        thr = solve_threshold(EXP1, 1.4, mu=1.0)
        assert thr.g_tau == pytest.approx(0.9185, abs=5e-4)
        with pytest.raises(ValueError):
            solve_threshold(EXP1, 1.4, mu=2.0)

    @pytest.mark.parametrize("service", [
        dists.weibull(0.4, mean=1.0),
        dists.weibull(1.5, mean=1.0),
        dists.pareto(2.0, mean=1.0),
    ], ids=lambda d: d.label())
    @pytest.mark.parametrize("rho", [1.1, 1.4, 2.0])
    def test_residual_small_across_grid(self, service, rho):
        thr = solve_threshold(service, rho)
        residual = service.truncated_first_moment(thr.tau) - thr.scaled_capacity
        assert abs(residual) <= 1e-10

    @pytest.mark.parametrize("service", [
        EXP1,
        dists.weibull(0.5, mean=1.0),
        dists.weibull(0.9, mean=1.0),
        dists.weibull(1.4, mean=1.0),
        dists.pareto(1.3, mean=1.0),
        dists.pareto(2.0, mean=1.0),
        dists.pareto(3.0, mean=1.0),
    ], ids=lambda d: d.label())
    @pytest.mark.parametrize("rho", [1.1, 1.4, 2.0])
    def test_served_fraction_beats_blind_throughput(self, service, rho):
        assert solve_threshold(service, rho).g_tau > 1.0 / rho


class TestSrptLimits:
    def test_exponential_rho_14(self):
        lim = srpt_limits(EXP1, 1.0, 1.4)
        assert lim.wait == pytest.approx(0.0815, abs=5e-4)
        assert lim.wait_given_abandoned == 1.0
        assert lim.wait_given_served == 0.0
        assert lim.throughput_per_arrival == lim.threshold.g_tau

    def test_abandoned_wait_is_reciprocal_rate(self):
        assert srpt_limits(EXP1, 0.5, 1.4).wait_given_abandoned == 0.5

    def test_depends_on_patience_mean_only(self):
        a = srpt_limits(EXP1, 1.0, 1.4)
        # same mean, wildly different patience families give identical limits
        b = srpt_limits(EXP1, dists.weibull(0.4, mean=1.0).mean(), 1.4)
        c = srpt_limits(EXP1, dists.pareto(1.5, mean=1.0).mean(), 1.4)
        for other in (b, c):
            assert other.wait == pytest.approx(a.wait, abs=1e-12)
            assert other.wait_given_abandoned == pytest.approx(
                a.wait_given_abandoned, abs=1e-12)
            assert other.throughput_per_arrival == a.throughput_per_arrival


class TestBlindFluidWaits:
    def test_fcfs_exponential_closed_form(self):
        w = fcfs_fluid_boundary(EXP1, 1.4)
        assert w == pytest.approx(math.log(1.4), abs=1e-12)
        assert fcfs_fluid_wait(EXP1, 1.4) == pytest.approx(1 - 1 / 1.4, abs=1e-12)

    def test_fcfs_equals_lcfs_for_exponential_patience(self):
        for rho in (1.1, 1.4, 2.0, 3.0):
            assert fcfs_fluid_wait(EXP1, rho) == pytest.approx(
                lcfs_fluid_wait(1.0, rho), abs=1e-12)

    def test_fcfs_approaches_full_patience_mean_at_heavy_overload(self):
        assert fcfs_fluid_wait(EXP1, 1e6) == pytest.approx(1.0, rel=1e-4)

    def test_fcfs_weibull_against_quadrature(self):
        patience = dists.weibull(0.4, mean=1.0)
        w = fcfs_fluid_boundary(patience, 1.4)
        tail = adaptive_simpson(
            lambda x: x * patience.pdf(x) if x > 0 else 0.0, 0.0, w, tol=1e-12)
        expected = tail + w * patience.sf(w)
        assert fcfs_fluid_wait(patience, 1.4) == pytest.approx(expected, rel=1e-9)

    def test_fcfs_monotone_in_weibull_shape(self):
        # FCFS favors the longest-waiting customer, so its fluid wait grows
        # as the patience hazard turns increasing (shape above 1) and shrinks
        # toward zero in the heavily decreasing-hazard region (small shape).
        shapes = np.linspace(1.0, 3.0, 21)
        waits = [fcfs_fluid_wait(dists.weibull(k, mean=1.0), 1.4) for k in shapes]
        assert all(b >= a - 1e-12 for a, b in zip(waits, waits[1:]))
        low = [fcfs_fluid_wait(dists.weibull(k, mean=1.0), 1.4)
               for k in (0.3, 0.4, 0.5, 0.7, 0.9)]
        assert all(b >= a - 1e-12 for a, b in zip(low, low[1:]))

    def test_deterministic_patience_has_no_quantile(self):
        with pytest.raises(QuantileUndefinedError):
            fcfs_fluid_boundary(dists.deterministic(1.0), 1.4)

    def test_lcfs_direct_arithmetic(self):
        assert lcfs_fluid_wait(1.0, 1.4) == pytest.approx(0.285714285714, abs=1e-12)
        assert lcfs_fluid_wait(0.5, 2.0) == pytest.approx(0.25, abs=1e-15)
        assert lcfs_fluid_wait(1.0, 1.0 + 1e-9) == pytest.approx(0.0, abs=1e-8)


class TestErlangBlocking:
    def test_single_server_unit_load(self):
        assert erlang_blocking(1, 1.0) == pytest.approx(0.5, abs=1e-15)

    def test_two_servers_by_hand(self):
        # (2^2/2!) / (1 + 2 + 2)
        assert erlang_blocking(2, 2.0) == pytest.approx(0.4, abs=1e-15)

    @pytest.mark.parametrize("s", [1, 3, 10, 40, 120, 200])
    def test_matches_integral_representation(self, s):
        assert erlang_blocking(s, float(s)) == pytest.approx(
            erlang_blocking_integral(s, float(s)), abs=1e-9)

    def test_integral_handles_general_load(self):
        assert erlang_blocking(5, 3.0) == pytest.approx(
            erlang_blocking_integral(5, 3.0), abs=1e-11)

    def test_class1_throughput_composition(self):
        # lam * G(tau) * (1 - B(1,1))
        assert loss_class1_throughput(1.4, 1, 0.919) == pytest.approx(
            1.4 * 0.919 * 0.5, abs=1e-12)

    def test_scaled_class1_throughput_approaches_served_fraction(self):
        g = 0.9185473085
        scaled = loss_class1_throughput(280.0, 200, g) / 280.0
        assert abs(scaled - g) < 0.06
        scaled_huge = loss_class1_throughput(14000.0, 10000, g) / 14000.0
        assert abs(scaled_huge - g) < 0.01


class TestThroughputBound:
    def setup_method(self):
        self.thr = solve_threshold(EXP1, 1.4)

    def test_max_throughput_converges_to_served_fraction(self):
        b = throughput_bound_oracle(EXP1, self.thr.tau, 100_000,
                                    BoundMode.MAX_THROUGHPUT)
        assert b.value == pytest.approx(self.thr.g_tau, rel=1e-3)
        assert b.prefix_in_x

    def test_min_workload_converges_to_capacity(self):
        b = throughput_bound_oracle(EXP1, self.thr.tau, 100_000,
                                    BoundMode.MIN_WORKLOAD)
        assert b.value == pytest.approx(self.thr.scaled_capacity, rel=1e-3)
        assert b.prefix_in_x

    def test_selection_boundary_brackets_tau(self):
        b = throughput_bound_oracle(EXP1, self.thr.tau, 100_000,
                                    BoundMode.MAX_THROUGHPUT)
        cell = 2.0 * self.thr.tau / 100_000
        assert b.boundary_lo <= self.thr.tau <= b.boundary_hi + cell

    def test_zero_cutoff_gives_zero_bound(self):
        b = throughput_bound_oracle(EXP1, 0.0, 1000, BoundMode.MAX_THROUGHPUT)
        assert b.value == 0.0

    def test_grid_too_coarse_signalled(self):
        # density spike near zero makes midpoint weights inaccurate
        svc = dists.weibull(0.4, mean=1.0)
        tau = solve_threshold(svc, 1.4).tau
        with pytest.raises(GridTooCoarseError):
            throughput_bound_oracle(svc, tau, 200, BoundMode.MAX_THROUGHPUT)

    def test_small_grids_rejected(self):
        with pytest.raises(ValueError):
            throughput_bound_oracle(EXP1, 1.0, 99, BoundMode.MAX_THROUGHPUT)

    def test_upper_bound_within_grid_error(self):
        # never undercuts the analytic optimum by more than the grid slack
        for svc in (EXP1, dists.pareto(2.0, mean=1.0)):
            thr = solve_threshold(svc, 1.4)
            b = throughput_bound_oracle(svc, thr.tau, 50_000,
                                        BoundMode.MAX_THROUGHPUT)
            cell = 2.0 * thr.tau / 50_000
            slack = 2.0 * cell * svc.pdf(max(thr.tau, svc.scale + cell))
            assert b.value >= thr.g_tau - max(slack, 1e-6)


class TestAsymptoticReport:
    def test_row_roundtrip(self):
        rep = analytics.asymptotic_report(EXP1, EXP1, 1.4)
        row = rep.to_row()
        assert len(row) == len(rep.CSV_COLUMNS)
        assert rep.srpt_throughput_per_arrival > rep.blind_throughput_per_arrival
        assert rep.fcfs_fluid_wait == pytest.approx(rep.lcfs_fluid_wait, abs=1e-12)
        assert rep.srpt_wait == pytest.approx((1 - rep.threshold.g_tau), abs=1e-12)
