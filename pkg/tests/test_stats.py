"""Batch-means estimation, pooling, and the convergence sweep."""

import numpy as np
import pytest

from srptq import dists, simcore, stats
from srptq.config import SystemConfig
from srptq.simcore import ArrivalScript, SimTrace, Status
from srptq.stats import InsufficientDataError, estimate, pool

EXP1 = dists.exponential(1.0)


def make_trace(n, wait_value=0.0, status=Status.SERVED, horizon=1000.0):
    """Synthetic trace: n customers spread uniformly, all with one outcome."""
    arrivals = np.linspace(0.0, horizon * 0.9, n)
    sc = ArrivalScript(arrivals, np.ones(n), np.ones(n))
    waits = np.full(n, float(wait_value))
    return SimTrace(
        script=sc, horizon=horizon, servers=1, lam=1.0, discipline="fcfs",
        tau=float("inf"), seed=0,
        wait=waits, remaining=np.zeros(n),
        status=np.full(n, int(status), dtype=np.int8),
        terminal=arrivals + 1.0, klass=np.zeros(n, dtype=np.int8))


def live_metrics(seed=1, horizon=800.0, warmup=80.0, servers=8,
                 discipline="srpt", batches=10):
    cfg = SystemConfig(lam=1.4 * servers, servers=servers, rho=1.4,
                       service=EXP1, patience=EXP1, discipline=discipline,
                       horizon=horizon, warmup=warmup, seeds=(seed,))
    trace = simcore.run(cfg, seed)
    return estimate(trace, warmup, batches)


class TestEstimate:
    def test_all_served_zero_wait_is_exact(self):
        m = estimate(make_trace(400), warmup=0.0, batches=5)
        assert m.wait_overall == (0.0, 0.0)
        assert m.throughput_per_arrival == (1.0, 0.0)
        assert m.abandonment_fraction == (0.0, 0.0)

    def test_constant_waits_have_zero_half_width(self):
        m = estimate(make_trace(400, wait_value=1.0), warmup=0.0, batches=5)
        assert m.wait_overall.value == 1.0
        assert m.wait_overall.half_width == 0.0
        assert m.wait_given_served == (1.0, 0.0)

    def test_insufficient_data_signalled(self):
        with pytest.raises(InsufficientDataError):
            estimate(make_trace(100), warmup=0.0, batches=5)   # 20 per batch

    def test_warmup_above_horizon_rejected(self):
        with pytest.raises(ValueError):
            estimate(make_trace(400), warmup=2000.0, batches=5)

    def test_too_few_batches_rejected(self):
        with pytest.raises(ValueError):
            estimate(make_trace(400), warmup=0.0, batches=4)

    def test_accounting_identity(self):
        for disc in ("srpt", "fcfs", "priority_loss"):
            m = live_metrics(discipline=disc)
            total = (m.throughput_per_arrival.value + m.abandonment_fraction.value
                     + m.lost_fraction.value + m.residual_fraction)
            assert total == pytest.approx(1.0, abs=1e-12)

    def test_warmup_discards_early_arrivals(self):
        tr = make_trace(400)
        m = estimate(tr, warmup=450.0, batches=5)
        assert m.arrivals == int((tr.arrival_time >= 450.0).sum())

    def test_batch_labels_are_exchangeable(self):
        # the half-width is symmetric in the batch values
        vals = np.array([0.2, 0.5, 0.4, 0.9, 0.3, 0.6])
        rng = np.random.default_rng(0)
        base = stats._half_width(vals, 0.95)
        for _ in range(5):
            assert stats._half_width(rng.permutation(vals), 0.95) == base

    def test_abandoned_wait_equals_patience_draws(self):
        m = live_metrics(discipline="srpt", horizon=1500.0)
        assert 0.0 < m.wait_given_abandoned.value < 1.0
        assert m.wait_given_abandoned.half_width > 0.0


class TestPooling:
    def test_single_input_passthrough(self):
        m = live_metrics()
        assert pool([m]) is m

    def test_order_independent(self):
        ms = [live_metrics(seed=s) for s in (1, 2, 3)]
        a = pool(ms)
        b = pool(list(reversed(ms)))
        for name in stats.METRIC_FIELDS:
            assert getattr(a, name) == getattr(b, name)
        assert a.replication_count == b.replication_count == 3

    def test_pooled_value_is_mean_of_replications(self):
        ms = [live_metrics(seed=s) for s in (1, 2, 3)]
        pooled = pool(ms)
        vals = [m.throughput_per_arrival.value for m in ms]
        assert pooled.throughput_per_arrival.value == pytest.approx(np.mean(vals))

    def test_half_width_scaling_with_longer_horizon(self):
        # doubling the horizon should not inflate the half-width (CLT sanity,
        # aggregated over 20 seeds)
        short, long_ = [], []
        for seed in range(20):
            short.append(live_metrics(seed=seed, horizon=700.0, warmup=100.0,
                                      servers=5).wait_overall.half_width)
            long_.append(live_metrics(seed=seed, horizon=1300.0, warmup=100.0,
                                      servers=5).wait_overall.half_width)
        assert np.mean(long_) <= 1.1 * np.mean(short)


class TestConvergenceSweep:
    def setup_method(self):
        self.base = SystemConfig(
            lam=1.4 * 4, servers=4, rho=1.4, service=EXP1, patience=EXP1,
            discipline="srpt", horizon=1200.0, warmup=120.0, seeds=(1, 2, 3))

    def test_single_scale_has_rows_and_no_flags(self):
        rep = stats.convergence_sweep(self.base, [6])
        assert rep.scales == (6,)
        assert not rep.non_shrinking
        assert {r.metric for r in rep.rows} == set(stats._TARGETED)

    def test_targets_come_from_limit_formulas(self):
        rep = stats.convergence_sweep(self.base, [6])
        row = rep.metric(6, "throughput_per_arrival")
        assert row.target == pytest.approx(0.9185473085, abs=1e-9)
        assert rep.metric(6, "wait_given_abandoned").target == 1.0
        assert rep.metric(6, "wait_given_served").target == 0.0

    def test_gap_is_absolute_distance(self):
        rep = stats.convergence_sweep(self.base, [6])
        for row in rep.rows:
            assert row.gap == pytest.approx(abs(row.estimate - row.target))

    def test_rows_cover_scales_in_order(self):
        rep = stats.convergence_sweep(self.base, [4, 10])
        assert rep.scales == (4, 10)
        assert [r.scale for r in rep.rows[:len(stats._TARGETED)]] == [4] * 7

    def test_parallel_workers_match_serial(self):
        serial = stats.convergence_sweep(self.base, [4, 8])
        parallel = stats.convergence_sweep(self.base, [4, 8], workers=2)
        assert serial.rows == parallel.rows

    def test_lambda_rescaled_per_scale(self):
        big = self.base.at_scale(10)
        assert big.lam == pytest.approx(1.4 * 10, rel=1e-12)
        assert big.rho == self.base.rho
