"""Real-time placement of discrete jobs and the one-day fleet simulator.

Two placement policies are provided. ``tracking`` follows a planned schedule
by sending each job to the admissible cell whose placed share lags its
target share the most. ``greedy`` runs each job immediately on the cheapest
in-range cluster that still has room.

In ``soft`` mode every placed job runs in its slot and VCC exceedances are
logged. In ``hard`` mode each cluster executes at most ``min(v, v_bar)`` per
hour from a FIFO queue; what does not fit waits for the next hour.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from carbonsched.core import ProblemConfig, plan_cost

TIE_TOL = 1e-12
FIT_TOL = 1e-12


@dataclass(frozen=True)
class Job:
    """A job of ``volume`` compute units, class ``c``, submitted at hour ``k`` (both 1-based)."""

    id: int
    c: int
    k: int
    volume: float

    def __post_init__(self):
        if not self.volume > 0:
            raise ValueError(f"job {self.id}: volume must be positive, got {self.volume}")


class PlacementError(ValueError):
    pass


@dataclass
class PlacementState:
    """Absolute placed volume per ``(k, c, t, d)`` and running per-``(k, c)`` totals."""

    Y_abs: np.ndarray
    cum_volume: np.ndarray

    @classmethod
    def empty(cls, config: ProblemConfig) -> "PlacementState":
        return cls(np.zeros(config.dims), np.zeros((config.K, config.C)))


def _candidates(config: ProblemConfig, k0: int, c0: int) -> tuple[np.ndarray, np.ndarray]:
    cells = np.argwhere(config.window_mask[k0, c0])
    if cells.size == 0:
        raise PlacementError(f"class {c0 + 1} has no admissible cell at hour {k0 + 1}")
    return cells[:, 0], cells[:, 1]


def _check_job(job: Job, config: ProblemConfig):
    if not 1 <= job.k <= config.K:
        raise PlacementError(f"job {job.id}: submit hour {job.k} outside 1..{config.K}")
    if not 1 <= job.c <= config.C:
        raise PlacementError(f"job {job.id}: class {job.c} outside 1..{config.C}")


def place_job(state: PlacementState, job: Job, Y_star: np.ndarray, config: ProblemConfig) -> tuple[int, int]:
    """Place ``job`` by the tracking rule and update ``state``; returns 1-based ``(d, t)``.

    Candidates are ordered by execution hour, then cluster, and the first one
    within ``TIE_TOL`` of the best score wins.
    """
    _check_job(job, config)
    k0, c0 = job.k - 1, job.c - 1
    ts, ds = _candidates(config, k0, c0)
    target = Y_star[k0, c0, ts, ds]
    placed = state.cum_volume[k0, c0]
    score = target if placed <= 0 else target - state.Y_abs[k0, c0, ts, ds] / placed
    best = int(np.flatnonzero(score >= score.max() - TIE_TOL)[0])
    t0, d0 = int(ts[best]), int(ds[best])
    state.Y_abs[k0, c0, t0, d0] += job.volume
    state.cum_volume[k0, c0] += job.volume
    return d0 + 1, t0 + 1


def greedy_place(job: Job, prices: np.ndarray, remaining_capacity: np.ndarray, config: ProblemConfig) -> tuple[int, int]:
    """Cheapest in-range cluster at the submit hour with room for the job; returns 1-based ``(d, t)``.

    If no cluster has room the one with the most slack is returned and the
    caller decides what overflow means.
    """
    _check_job(job, config)
    k0 = job.k - 1
    clusters = np.array(config.classes[job.c - 1].allowed_clusters) - 1
    room = remaining_capacity[k0, clusters]
    fits = room >= job.volume - FIT_TOL
    if fits.any():
        cand = clusters[fits]
        price = prices[k0, cand]
        d0 = int(cand[np.flatnonzero(price == price.min())[0]])
    else:
        d0 = int(clusters[np.flatnonzero(room == room.max())[0]])
    return d0 + 1, job.k


@dataclass
class SimTrace:
    """Outcome of one simulated day (arrays are 0-based ``(T, D)``).

    ``outcome`` lists every job volume under ``executed``, ``queued`` or
    ``unserved`` so conservation can be checked with exact summation.
    """

    executed: np.ndarray
    queue_length: np.ndarray
    queue_volume: np.ndarray
    placements: list[tuple[int, int, int]] = field(default_factory=list)
    violations: list[tuple[int, int, float, float]] = field(default_factory=list)
    submitted_volume: float = 0.0
    final_queue_volume: float = 0.0
    unserved_volume: float = 0.0
    mode: str = "soft"
    policy: str = "tracking"
    realized_cost: float = 0.0
    outcome: dict[str, list[float]] = field(default_factory=lambda: {"executed": [], "queued": [], "unserved": []})

    @property
    def executed_volume(self) -> float:
        if self.outcome["executed"]:
            return math.fsum(self.outcome["executed"])
        return float(np.sum(self.executed))

    def conservation_gap(self) -> float:
        """Submitted minus executed, queued and unserved volume; exact (fsum) for simulated traces."""
        parts = self.outcome["executed"] + self.outcome["queued"] + self.outcome["unserved"]
        if parts:
            return self.submitted_volume - math.fsum(parts)
        return self.submitted_volume - (self.executed_volume + self.final_queue_volume + self.unserved_volume)

    def summary(self) -> dict:
        return {
            "policy": self.policy,
            "mode": self.mode,
            "realized_cost": self.realized_cost,
            "submitted_volume": self.submitted_volume,
            "executed_volume": self.executed_volume,
            "final_queue_volume": self.final_queue_volume,
            "unserved_volume": self.unserved_volume,
            "violations": len(self.violations),
            "max_violation": max((load - cap for _, _, load, cap in self.violations), default=0.0),
            "max_queue_length": int(self.queue_length.max(initial=0)),
            "jobs": len(self.placements),
        }


def realized_cost(trace: SimTrace, config: ProblemConfig) -> float:
    """Cost function applied to the executed load."""
    return plan_cost(trace.executed, config)


def simulate_day(
    stream: list[Job],
    policy: str,
    mode: str,
    v: np.ndarray,
    config: ProblemConfig,
    Y_star: np.ndarray | None = None,
) -> SimTrace:
    """Place and execute one day of jobs.

    ``v`` is the VCC; greedy runs usually pass the true capacity. Greedy
    checks room against the true capacity, and in soft mode a job that fits
    nowhere still runs on the cluster with most slack and is logged as a
    violation.
    """
    if policy not in ("tracking", "greedy"):
        raise ValueError(f"unknown policy {policy!r}")
    if mode not in ("soft", "hard"):
        raise ValueError(f"unknown mode {mode!r}")
    if policy == "tracking" and Y_star is None:
        raise ValueError("tracking policy needs a planned schedule")
    T, D = config.T, config.D
    v = np.asarray(v, dtype=float)
    if v.shape != (T, D):
        raise ValueError(f"v has shape {v.shape}, expected {(T, D)}")
    last_k = 0
    for job in stream:
        if job.k < last_k:
            raise ValueError(f"stream is not sorted by submit hour at job {job.id}")
        last_k = job.k

    state = PlacementState.empty(config)
    remaining = config.true_capacity.copy()
    due: list[list[list[Job]]] = [[[] for _ in range(D)] for _ in range(T)]
    placements = []
    for job in stream:
        if policy == "tracking":
            d, t = place_job(state, job, Y_star, config)
        else:
            d, t = greedy_place(job, config.carbon_price, remaining, config)
            remaining[t - 1, d - 1] -= job.volume
        placements.append((job.id, d, t))
        due[t - 1][d - 1].append(job)

    executed = np.zeros((T, D))
    qlen = np.zeros((T, D), dtype=int)
    qvol = np.zeros((T, D))
    violations = []
    outcome: dict[str, list[float]] = {"executed": [], "queued": [], "unserved": []}
    if mode == "soft":
        for t in range(T):
            for d in range(D):
                outcome["executed"].extend(job.volume for job in due[t][d])
                executed[t, d] = sum(job.volume for job in due[t][d])
                if executed[t, d] > v[t, d] + FIT_TOL:
                    violations.append((t + 1, d + 1, float(executed[t, d]), float(v[t, d])))
    else:
        cap = np.minimum(v, config.true_capacity)
        # best capacity still to come, used to drop jobs that can never run
        future_cap = np.maximum.accumulate(cap[::-1], axis=0)[::-1]
        for d in range(D):
            queue: deque[Job] = deque()
            for t in range(T):
                queue.extend(due[t][d])
                room = cap[t, d]
                while queue:
                    head = queue[0]
                    if head.volume <= room + FIT_TOL:
                        room -= head.volume
                        executed[t, d] += head.volume
                        outcome["executed"].append(head.volume)
                        queue.popleft()
                    elif head.volume > future_cap[t, d] + FIT_TOL:
                        outcome["unserved"].append(head.volume)
                        queue.popleft()
                    else:
                        break
                qlen[t, d] = len(queue)
                qvol[t, d] = sum(job.volume for job in queue)
            outcome["queued"].extend(job.volume for job in queue)

    trace = SimTrace(
        executed=executed,
        queue_length=qlen,
        queue_volume=qvol,
        placements=placements,
        violations=violations,
        submitted_volume=math.fsum(job.volume for job in stream),
        final_queue_volume=math.fsum(outcome["queued"]),
        unserved_volume=math.fsum(outcome["unserved"]),
        mode=mode,
        policy=policy,
        outcome=outcome,
    )
    trace.realized_cost = realized_cost(trace, config)
    return trace
