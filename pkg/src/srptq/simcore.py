"""Discrete-event engine for the multiserver queue with abandonment.

Disciplines: SRPT (preemptive), FCFS, LCFS (non-preemptive), and the
two-class preemptive loss discipline with no waiting room.  A coupled-run
harness drives the SRPT queue and the loss queue on identical arrival,
service, and patience draws and checks the pathwise served-count inequality.

Engine mechanics (single-threaded per run; replications use disjoint
streams):

* The event calendar holds only service completions, ordered by
  (time, insertion sequence); arrivals are merged in from the pre-generated
  script, which keeps the calendar small and the run deterministic.
* Queued customers carry an abandonment deadline equal to
  enqueue time + (patience - queue time already used).  Deadlines are not
  calendar events: a customer whose deadline has passed is recognized the
  next time the queue is inspected (or at the horizon sweep) and is recorded
  as having abandoned exactly at the deadline.  Queue membership of an
  expired customer is never observable in between, so per-customer outcomes
  are identical to eager cancellation while doing fewer heap operations.
* Preemption and completion use lazy invalidation: each (re)entry into
  service bumps a per-customer token, and stale heap entries are skipped.
* Under SRPT the in-service customer with the longest remaining work is the
  one with the latest scheduled completion, so a max-heap on completion
  times answers preemption queries without tracking elapsed work.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from enum import Enum, IntEnum
from typing import Iterator

import numpy as np

from . import analytics
from .dists import DistributionSpec, Family, RandomStream

_INF = float("inf")


class Discipline(str, Enum):
    SRPT = "srpt"
    FCFS = "fcfs"
    LCFS = "lcfs"
    PRIORITY_LOSS = "priority_loss"


class Status(IntEnum):
    IN_QUEUE = 1
    IN_SERVICE = 2
    SERVED = 3
    ABANDONED = 4
    LOST = 5


class JobClass(IntEnum):
    SHORT = 0   # service requirement <= tau
    LONG = 1


class CouplingViolationError(RuntimeError):
    """The loss system overtook the original system's served count (engine bug)."""


class UnknownDisciplineError(ValueError):
    pass


# stream roles within one replication seed
_ROLE_ARRIVAL, _ROLE_SERVICE, _ROLE_PATIENCE = 0, 1, 2
_CHUNK = 1 << 14


@dataclass(frozen=True)
class ArrivalScript:
    """Shared randomness for one replication: who arrives when, with what."""

    arrivals: np.ndarray   # strictly increasing epochs within [0, horizon]
    services: np.ndarray
    patiences: np.ndarray

    def __len__(self) -> int:
        return len(self.arrivals)


def generate_script(lam: float, horizon: float, service: DistributionSpec,
                    patience: DistributionSpec, seed: int) -> ArrivalScript:
    """Draw Poisson(lam) arrivals on [0, horizon] with i.i.d. marks.

    Three independent substreams (interarrival, service, patience) derive
    from the seed, so coupled systems can consume identical draws and the
    draw indices stay aligned across disciplines.
    """
    if horizon <= 0:
        raise ValueError(f"nonpositive horizon: {horizon}")
    si = RandomStream(seed, _ROLE_ARRIVAL)
    gaps = []
    last = 0.0
    while last <= horizon:
        u = si.uniforms(_CHUNK)
        chunk = -np.log1p(-u) / lam
        gaps.append(chunk)
        last += float(chunk.sum())
    arrivals = np.cumsum(np.concatenate(gaps))
    arrivals = arrivals[arrivals <= horizon]
    n = len(arrivals)
    services = service.sample_array(RandomStream(seed, _ROLE_SERVICE), n)
    patiences = patience.sample_array(RandomStream(seed, _ROLE_PATIENCE), n)
    return ArrivalScript(arrivals, services, patiences)


@dataclass(frozen=True)
class Customer:
    """Snapshot of one customer's record at the end of a run."""

    id: int
    arrival_time: float
    service_req: float
    remaining_service: float
    patience: float
    queue_time_used: float
    class_label: JobClass
    status: Status


class SimTrace:
    """Per-customer outcome arrays plus run metadata.

    ``wait`` is total accumulated queue time (a preempted-and-resumed
    customer keeps accumulating); for an abandoning customer it equals the
    patience draw exactly.  ``terminal`` is the epoch of leaving the system
    (NaN for customers still present at the horizon).
    """

    def __init__(self, *, script: ArrivalScript, horizon, servers, lam,
                 discipline, tau, seed, wait, remaining, status, terminal,
                 klass):
        self.arrival_time = script.arrivals
        self.service_req = script.services
        self.patience = script.patiences
        self.horizon = float(horizon)
        self.servers = int(servers)
        self.lam = float(lam)
        self.discipline = Discipline(discipline)
        self.tau = float(tau)
        self.seed = int(seed)
        self.wait = wait
        self.remaining = remaining
        self.status = status
        self.terminal = terminal
        self.klass = klass

    def __len__(self) -> int:
        return len(self.arrival_time)

    # -- counters ------------------------------------------------------ #

    def count(self, status: Status, klass: JobClass | None = None) -> int:
        mask = self.status == int(status)
        if klass is not None:
            mask &= self.klass == int(klass)
        return int(mask.sum())

    @property
    def in_system_at_horizon(self) -> int:
        return self.count(Status.IN_QUEUE) + self.count(Status.IN_SERVICE)

    def served_epochs(self, klass: JobClass | None = None) -> np.ndarray:
        mask = self.status == int(Status.SERVED)
        if klass is not None:
            mask &= self.klass == int(klass)
        return np.sort(self.terminal[mask])

    def time_average_in_system(self) -> float:
        """Exact time average of the headcount, from presence intervals."""
        leave = np.where(np.isnan(self.terminal), self.horizon, self.terminal)
        return float(np.sum(leave - self.arrival_time)) / self.horizon

    # -- record access -------------------------------------------------- #

    def customer(self, i: int) -> Customer:
        return Customer(
            id=i,
            arrival_time=float(self.arrival_time[i]),
            service_req=float(self.service_req[i]),
            remaining_service=float(self.remaining[i]),
            patience=float(self.patience[i]),
            queue_time_used=float(self.wait[i]),
            class_label=JobClass(int(self.klass[i])),
            status=Status(int(self.status[i])),
        )

    def customers(self) -> Iterator[Customer]:
        return (self.customer(i) for i in range(len(self)))

    def same_as(self, other: "SimTrace") -> bool:
        return (
            np.array_equal(self.arrival_time, other.arrival_time)
            and np.array_equal(self.service_req, other.service_req)
            and np.array_equal(self.patience, other.patience)
            and np.array_equal(self.wait, other.wait)
            and np.array_equal(self.status, other.status)
            and np.array_equal(self.terminal, other.terminal, equal_nan=True)
            and np.array_equal(self.klass, other.klass)
        )

    def to_csv(self, path) -> None:
        """One line per customer: id, arrival, S, T, wait, status, class."""
        with open(path, "w", newline="\n") as fh:
            fh.write("id,arrival_time,service_req,patience,wait,status,class\n")
            for i in range(len(self)):
                fh.write(
                    f"{i},{self.arrival_time[i]:.12g},{self.service_req[i]:.12g},"
                    f"{self.patience[i]:.12g},{self.wait[i]:.12g},"
                    f"{Status(int(self.status[i])).name},"
                    f"{JobClass(int(self.klass[i])).name}\n"
                )


@dataclass(frozen=True)
class CoupledCounters:
    """Served-count step processes of the coupled pair, on merged epochs.

    n_l1[i] counts short jobs served in the loss system by times[i]
    (right-continuous); n_o[i] counts all jobs served in the original SRPT
    system.  The pathwise guarantee is n_l1 <= n_o everywhere.
    """

    times: np.ndarray
    n_l1: np.ndarray
    n_o: np.ndarray

    @property
    def violations(self) -> int:
        return int(np.sum(self.n_l1 > self.n_o))


# ---------------------------------------------------------------------- #
# public entry points
# ---------------------------------------------------------------------- #


def run(config, seed: int, *, script: ArrivalScript | None = None,
        tau: float | None = None, debug_invariants: bool = False) -> SimTrace:
    """Simulate one replication under the configured discipline.

    ``tau`` controls the short/long class labels (and the loss discipline's
    priority split); when omitted it is solved from the config for rho > 1
    and set to +inf otherwise, making every job short.
    """
    if config.horizon <= 0:
        raise ValueError(f"nonpositive horizon: {config.horizon}")
    try:
        disc = Discipline(config.discipline)
    except ValueError:
        raise UnknownDisciplineError(f"unknown discipline: {config.discipline!r}") from None
    if tau is None:
        tau = _default_tau(config)
    if script is None:
        script = generate_script(config.lam, config.horizon, config.service,
                                 config.patience, seed)
    if disc is Discipline.PRIORITY_LOSS:
        fields = _run_loss_kernel(script, config.servers, config.horizon, tau)
    else:
        fields = _run_queue_kernel(script, config.servers, config.horizon,
                                   disc, debug_invariants)
    return _build_trace(script, config, disc, tau, seed, fields)


def run_loss(config, tau: float, seed: int, *,
             script: ArrivalScript | None = None) -> SimTrace:
    """Simulate the two-class preemptive loss system with cutoff ``tau``."""
    if config.horizon <= 0:
        raise ValueError(f"nonpositive horizon: {config.horizon}")
    if script is None:
        script = generate_script(config.lam, config.horizon, config.service,
                                 config.patience, seed)
    fields = _run_loss_kernel(script, config.servers, config.horizon, tau)
    return _build_trace(script, config, Discipline.PRIORITY_LOSS, tau, seed, fields)


def run_coupled(config, tau: float, seed: int,
                *, debug_invariants: bool = False):
    """Drive SRPT and the loss system on one shared script.

    Returns (srpt_trace, loss_trace, counters) and raises
    CouplingViolationError if the loss system's short-job served count ever
    exceeds the SRPT system's total served count: that inequality holds path
    by path, so a violation means an engine defect.
    """
    script = generate_script(config.lam, config.horizon, config.service,
                             config.patience, seed)
    q_fields = _run_queue_kernel(script, config.servers, config.horizon,
                                 Discipline.SRPT, debug_invariants)
    l_fields = _run_loss_kernel(script, config.servers, config.horizon, tau)
    srpt_trace = _build_trace(script, config, Discipline.SRPT, tau, seed, q_fields)
    loss_trace = _build_trace(script, config, Discipline.PRIORITY_LOSS, tau, seed, l_fields)

    t_l1 = loss_trace.served_epochs(JobClass.SHORT)
    t_o = srpt_trace.served_epochs()
    times = np.union1d(t_l1, t_o)
    counters = CoupledCounters(
        times=times,
        n_l1=np.searchsorted(t_l1, times, side="right"),
        n_o=np.searchsorted(t_o, times, side="right"),
    )
    if counters.violations:
        first = int(np.argmax(counters.n_l1 > counters.n_o))
        raise CouplingViolationError(
            f"coupling violation at t={counters.times[first]:.6f}: "
            f"n_L1={counters.n_l1[first]} > n_O={counters.n_o[first]} (seed {seed})"
        )
    return srpt_trace, loss_trace, counters


def _default_tau(config) -> float:
    if config.rho > 1.0 and config.service.family is not Family.DETERMINISTIC:
        return analytics.solve_threshold(config.service, config.rho).tau
    return _INF


def _build_trace(script, config, disc, tau, seed, fields):
    wait, remaining, status, terminal = fields
    klass = np.where(script.services <= tau, int(JobClass.SHORT),
                     int(JobClass.LONG)).astype(np.int8)
    return SimTrace(
        script=script, horizon=config.horizon, servers=config.servers,
        lam=config.lam, discipline=disc, tau=tau, seed=seed,
        wait=np.asarray(wait), remaining=np.asarray(remaining),
        status=np.asarray(status, dtype=np.int8),
        terminal=np.asarray(terminal), klass=klass,
    )


# ---------------------------------------------------------------------- #
# queueing kernel (SRPT / FCFS / LCFS)
# ---------------------------------------------------------------------- #

_IN_QUEUE = int(Status.IN_QUEUE)
_IN_SERVICE = int(Status.IN_SERVICE)
_SERVED = int(Status.SERVED)
_ABANDONED = int(Status.ABANDONED)
_LOST = int(Status.LOST)


def _run_queue_kernel(script, s, horizon, disc, debug=False):
    arr = script.arrivals.tolist()
    svc = script.services.tolist()
    pat = script.patiences.tolist()
    n = len(arr)
    horizon = float(horizon)
    srpt = disc is Discipline.SRPT
    lcfs = disc is Discipline.LCFS

    status = [0] * n
    token = [0] * n
    used = [0.0] * n
    enq = [0.0] * n          # start of the current queueing episode
    deadline = [0.0] * n
    comp_time = [0.0] * n    # scheduled completion of the current service episode
    remaining = svc[:]       # untouched until a preemption freezes progress
    wait = [0.0] * n
    terminal = [float("nan")] * n

    cal = []     # (completion, seq, customer, token)
    qheap = []   # (key, customer, deadline, token); key depends on discipline
    insrv = []   # (-completion, seq, customer, token); SRPT only
    heappush, heappop = heapq.heappush, heapq.heappop
    busy = 0
    seq = 0
    i = 0
    # tighter compaction in debug mode keeps the O(heap) invariant scans cheap
    qcap = 64 if debug else 1024
    icap = 64 if debug else max(1024, 4 * s + 64)

    if debug:
        check = _make_queue_checker(s, srpt, status, token, remaining,
                                    comp_time, qheap, insrv)

    while True:
        ta = arr[i] if i < n else _INF
        if cal and cal[0][0] <= ta:
            # ---- service completion ----
            if cal[0][0] > horizon:
                break
            t, _, ci, tok = heappop(cal)
            if token[ci] != tok or status[ci] != _IN_SERVICE:
                continue
            status[ci] = _SERVED
            wait[ci] = used[ci]
            remaining[ci] = 0.0
            terminal[ci] = t
            busy -= 1
            # admit the next queued customer, skipping expired deadlines
            while qheap:
                _, cj, dl, qtok = qheap[0]
                if qtok != token[cj] or status[cj] != _IN_QUEUE:
                    heappop(qheap)
                    continue
                if dl < t:
                    heappop(qheap)
                    status[cj] = _ABANDONED
                    wait[cj] = pat[cj]
                    terminal[cj] = dl
                    continue
                heappop(qheap)
                used[cj] += t - enq[cj]
                token[cj] += 1
                status[cj] = _IN_SERVICE
                comp = t + remaining[cj]
                comp_time[cj] = comp
                seq += 1
                heappush(cal, (comp, seq, cj, token[cj]))
                if srpt:
                    heappush(insrv, (-comp, seq, cj, token[cj]))
                busy += 1
                break
            if debug:
                check(t, busy)
        elif i < n:
            # ---- arrival ----
            ci = i
            i += 1
            if busy < s:
                status[ci] = _IN_SERVICE
                comp = ta + svc[ci]
                comp_time[ci] = comp
                seq += 1
                heappush(cal, (comp, seq, ci, token[ci]))
                if srpt:
                    heappush(insrv, (-comp, seq, ci, token[ci]))
                busy += 1
            elif srpt:
                # preempt the longest-remaining job iff strictly longer
                while True:
                    negcomp, _, cj, itok = insrv[0]
                    if itok == token[cj] and status[cj] == _IN_SERVICE:
                        break
                    heappop(insrv)
                longest = -negcomp - ta
                if longest > svc[ci]:
                    heappop(insrv)
                    token[cj] += 1          # invalidates completion event
                    remaining[cj] = longest
                    status[cj] = _IN_QUEUE
                    enq[cj] = ta
                    dl = ta + (pat[cj] - used[cj])
                    deadline[cj] = dl
                    heappush(qheap, (longest, cj, dl, token[cj]))
                    status[ci] = _IN_SERVICE
                    comp = ta + svc[ci]
                    comp_time[ci] = comp
                    seq += 1
                    heappush(cal, (comp, seq, ci, token[ci]))
                    heappush(insrv, (-comp, seq, ci, token[ci]))
                else:
                    status[ci] = _IN_QUEUE
                    enq[ci] = ta
                    dl = ta + pat[ci]
                    deadline[ci] = dl
                    heappush(qheap, (svc[ci], ci, dl, token[ci]))
            else:
                status[ci] = _IN_QUEUE
                enq[ci] = ta
                dl = ta + pat[ci]
                deadline[ci] = dl
                key = -ci if lcfs else ci
                heappush(qheap, (key, ci, dl, token[ci]))
            # stale heap entries sink and would pile up on long runs; compact.
            # Pop order depends only on entry keys, so rebuilds are transparent.
            if len(qheap) > qcap:
                live = []
                for entry in qheap:
                    cj = entry[1]
                    if entry[3] != token[cj] or status[cj] != _IN_QUEUE:
                        continue
                    if entry[2] < ta:
                        status[cj] = _ABANDONED
                        wait[cj] = pat[cj]
                        terminal[cj] = entry[2]
                        continue
                    live.append(entry)
                qheap[:] = live
                heapq.heapify(qheap)
                qcap = max(1024, 4 * len(qheap))
            if srpt and len(insrv) > icap:
                insrv[:] = [e for e in insrv
                            if token[e[2]] == e[3] and status[e[2]] == _IN_SERVICE]
                heapq.heapify(insrv)
            if debug:
                check(ta, busy)
        else:
            break

    # horizon sweep: resolve everything still in the structures
    for ci in range(n):
        st = status[ci]
        if st == _IN_QUEUE:
            if deadline[ci] < horizon:
                status[ci] = _ABANDONED
                wait[ci] = pat[ci]
                terminal[ci] = deadline[ci]
            else:
                wait[ci] = used[ci] + (horizon - enq[ci])
        elif st == _IN_SERVICE:
            remaining[ci] = comp_time[ci] - horizon
            wait[ci] = used[ci]
    return wait, remaining, status, terminal


def _make_queue_checker(s, srpt, status, token, remaining, comp_time,
                        qheap, insrv):
    """Event-epoch invariant probe for debug runs (O(heap) per event)."""

    def check(now, busy):
        assert 0 <= busy <= s, f"{busy} in service with {s} servers at t={now}"
        if not srpt:
            return
        in_service = [c for (_, _, c, tk) in insrv
                      if token[c] == tk and status[c] == _IN_SERVICE]
        assert len(in_service) == busy, "in-service heap out of sync"
        live_queue = [c for (_, c, dl, tk) in qheap
                      if token[c] == tk and status[c] == _IN_QUEUE and dl >= now]
        if live_queue:
            assert busy == s, "nonempty queue with an idle server"
            max_in_service = max(comp_time[c] - now for c in in_service)
            min_queued = min(remaining[c] for c in live_queue)
            assert max_in_service <= min_queued + 1e-9, (
                f"service/queue boundary violated at t={now}: "
                f"{max_in_service} > {min_queued}"
            )

    return check


# ---------------------------------------------------------------------- #
# two-class preemptive loss kernel
# ---------------------------------------------------------------------- #


def _run_loss_kernel(script, s, horizon, tau):
    arr = script.arrivals.tolist()
    svc = script.services.tolist()
    n = len(arr)
    horizon = float(horizon)

    status = [0] * n
    token = [0] * n
    comp_time = [0.0] * n
    remaining = svc[:]
    wait = [0.0] * n                  # no waiting room: always zero
    terminal = [float("nan")] * n

    cal = []
    long_srv = []   # (-completion, seq, customer, token) for long jobs in service
    heappush, heappop = heapq.heappush, heapq.heappop
    busy = 0
    n_long = 0      # long jobs currently in service
    seq = 0
    i = 0
    lcap = max(1024, 4 * s + 64)

    def begin_service(ci, t):
        nonlocal busy, n_long, seq
        status[ci] = _IN_SERVICE
        comp = t + svc[ci]
        comp_time[ci] = comp
        seq += 1
        heappush(cal, (comp, seq, ci, token[ci]))
        if svc[ci] > tau:
            heappush(long_srv, (-comp, seq, ci, token[ci]))
            n_long += 1
        busy += 1

    while True:
        ta = arr[i] if i < n else _INF
        if cal and cal[0][0] <= ta:
            if cal[0][0] > horizon:
                break
            t, _, ci, tok = heappop(cal)
            if token[ci] != tok or status[ci] != _IN_SERVICE:
                continue
            status[ci] = _SERVED
            remaining[ci] = 0.0
            terminal[ci] = t
            busy -= 1
            if svc[ci] > tau:
                n_long -= 1
        elif i < n:
            ci = i
            i += 1
            if busy < s:
                begin_service(ci, ta)
            elif svc[ci] <= tau and n_long > 0:
                # short arrival evicts the longest-remaining long job
                while True:
                    negcomp, _, cj, jtok = long_srv[0]
                    if jtok == token[cj] and status[cj] == _IN_SERVICE:
                        break
                    heappop(long_srv)
                heappop(long_srv)
                token[cj] += 1
                status[cj] = _LOST
                remaining[cj] = -negcomp - ta
                terminal[cj] = ta
                busy -= 1
                n_long -= 1
                begin_service(ci, ta)
            else:
                status[ci] = _LOST
                terminal[ci] = ta
            if len(long_srv) > lcap:
                long_srv[:] = [e for e in long_srv
                               if token[e[2]] == e[3] and status[e[2]] == _IN_SERVICE]
                heapq.heapify(long_srv)
        else:
            break

    for ci in range(n):
        if status[ci] == _IN_SERVICE:
            remaining[ci] = comp_time[ci] - horizon
    return wait, remaining, status, terminal
