"""Project networks, precedence algorithms and schedule NPV."""
from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np


class InfeasibleDeadlineError(ValueError):
    """Raised when the earliest project completion exceeds the deadline."""


@dataclass(frozen=True)
class Activity:
    id: int
    fixed_cost: float = 0.0
    var_cost: float = 0.0
    revenue: float = 0.0
    d_min: int = 0
    d_max: int = 0

    def cash(self, duration: int) -> float:
        """Cash flow realized at the start when the activity lasts ``duration``."""
        return self.fixed_cost + duration * self.var_cost + self.revenue

    @property
    def duration_support(self) -> tuple[int, int]:
        return (self.d_min, self.d_max)


@dataclass(frozen=True)
class Scenario:
    prob: float
    durations: tuple[int, ...]
    cash_flows: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "durations", tuple(int(d) for d in self.durations))
        object.__setattr__(self, "cash_flows", tuple(float(c) for c in self.cash_flows))


@dataclass(frozen=True)
class ProjectNetwork:
    """Activity-on-node DAG with dummy start ``0`` and dummy end ``n_nodes - 1``.

    Arcs are deduplicated and stored sorted; transitive arcs are allowed.
    """

    activities: tuple[Activity, ...]
    arcs: tuple[tuple[int, int], ...]
    beta: float
    deadline: int

    def __post_init__(self):
        object.__setattr__(self, "activities", tuple(self.activities))
        arcs = sorted({(int(i), int(j)) for i, j in self.arcs})
        object.__setattr__(self, "arcs", tuple(arcs))

    @property
    def n_nodes(self) -> int:
        return len(self.activities)

    @property
    def end(self) -> int:
        return len(self.activities) - 1

    @cached_property
    def predecessors(self) -> tuple[tuple[int, ...], ...]:
        preds: list[list[int]] = [[] for _ in self.activities]
        for i, j in self.arcs:
            if 0 <= j < len(preds):
                preds[j].append(i)
        return tuple(tuple(p) for p in preds)

    @cached_property
    def successors(self) -> tuple[tuple[int, ...], ...]:
        succs: list[list[int]] = [[] for _ in self.activities]
        for i, j in self.arcs:
            if 0 <= i < len(succs):
                succs[i].append(j)
        return tuple(tuple(s) for s in succs)

    @cached_property
    def topological_order(self) -> tuple[int, ...]:
        order = topological_order(self.n_nodes, self.arcs)
        if order is None:
            raise ValueError("precedence graph contains a cycle")
        return tuple(order)

    @property
    def d_max(self) -> np.ndarray:
        return np.array([a.d_max for a in self.activities], dtype=np.int64)

    @property
    def d_min(self) -> np.ndarray:
        return np.array([a.d_min for a in self.activities], dtype=np.int64)

    def cash_for(self, durations: Sequence[int]) -> np.ndarray:
        return np.array([a.cash(int(d)) for a, d in zip(self.activities, durations)])


@dataclass(frozen=True)
class Schedule:
    start_times: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "start_times", tuple(int(t) for t in self.start_times))

    def as_array(self) -> np.ndarray:
        return np.asarray(self.start_times, dtype=np.int64)


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok


def topological_order(n_nodes: int, arcs) -> list[int] | None:
    """Kahn's algorithm with smallest-id tie breaking; ``None`` on a cycle."""
    indeg = [0] * n_nodes
    succ: list[list[int]] = [[] for _ in range(n_nodes)]
    for i, j in arcs:
        succ[i].append(j)
        indeg[j] += 1
    ready = sorted(v for v in range(n_nodes) if indeg[v] == 0)
    order = []
    heapq.heapify(ready)
    while ready:
        v = heapq.heappop(ready)
        order.append(v)
        for w in succ[v]:
            indeg[w] -= 1
            if indeg[w] == 0:
                heapq.heappush(ready, w)
    return order if len(order) == n_nodes else None


def _reachable(start: int, adj: Sequence[Sequence[int]]) -> set[int]:
    seen = {start}
    stack = [start]
    while stack:
        v = stack.pop()
        for w in adj[v]:
            if w not in seen:
                seen.add(w)
                stack.append(w)
    return seen


def validate_network(net: ProjectNetwork) -> ValidationReport:
    report = ValidationReport()
    v = report.violations
    n = net.n_nodes
    if n < 2:
        v.append("network needs dummy start and end activities")
        return report
    for idx, act in enumerate(net.activities):
        if act.id != idx:
            v.append(f"activity ids not dense: position {idx} has id {act.id}")
        if act.d_min < 0 or act.d_min > act.d_max:
            v.append(f"activity {idx}: invalid duration support [{act.d_min},{act.d_max}]")
    for dummy in (0, n - 1):
        a = net.activities[dummy]
        if (a.d_min, a.d_max) != (0, 0):
            v.append(f"dummy activity {dummy} must have duration support [0,0]")
    for i, j in net.arcs:
        if not (0 <= i < n and 0 <= j < n):
            v.append(f"arc ({i},{j}) references unknown activity")
        elif i == j:
            v.append(f"cycle: self-loop on activity {i}")
    if v:
        return report
    if topological_order(n, net.arcs) is None:
        v.append("cycle: precedence arcs do not form a DAG")
        return report
    if net.predecessors[0]:
        v.append(f"start dummy 0 has predecessors {list(net.predecessors[0])}")
    if net.successors[n - 1]:
        v.append(f"end dummy {n - 1} has successors {list(net.successors[n - 1])}")
    from_start = _reachable(0, net.successors)
    to_end = _reachable(n - 1, net.predecessors)
    for j in range(1, n - 1):
        if j not in from_start or j not in to_end:
            v.append(f"dangling activity {j}: not on a path from 0 to {n - 1}")
    if not 0.0 < net.beta < 1.0:
        v.append(f"beta={net.beta} outside (0,1)")
    if not v:
        es = earliest_starts(net, net.d_max)
        if es[-1] > net.deadline:
            v.append(
                f"deadline {net.deadline} below worst-case makespan {int(es[-1])}"
            )
    return report


def earliest_starts(net: ProjectNetwork, durations: Sequence[int]) -> np.ndarray:
    es = np.zeros(net.n_nodes, dtype=np.int64)
    for j in net.topological_order:
        for i in net.predecessors[j]:
            es[j] = max(es[j], es[i] + int(durations[i]))
    return es


def cpm_bounds(
    net: ProjectNetwork, durations: Sequence[int], deadline: int | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Forward/backward CPM pass; latest start of the end dummy is ``deadline``."""
    if deadline is None:
        deadline = net.deadline
    d = [int(x) for x in durations]
    es = earliest_starts(net, d)
    if es[-1] > deadline:
        raise InfeasibleDeadlineError(
            f"earliest completion {int(es[-1])} exceeds deadline {deadline}"
        )
    ls = np.full(net.n_nodes, deadline, dtype=np.int64)
    for i in reversed(net.topological_order):
        for j in net.successors[i]:
            ls[i] = min(ls[i], ls[j] - d[i])
    ls[-1] = deadline
    return es, ls


def schedule_npv(sched: Schedule | Sequence[int], cash_flows: Sequence[float], beta: float) -> float:
    t = sched.start_times if isinstance(sched, Schedule) else sched
    return float(sum(float(c) * beta ** int(s) for c, s in zip(cash_flows, t)))


def precedence_feasible(
    net: ProjectNetwork, start_times: Sequence[int], durations: Sequence[int], deadline: int | None = None
) -> bool:
    if deadline is None:
        deadline = net.deadline
    if start_times[0] != 0 or min(start_times) < 0:
        return False
    if start_times[-1] > deadline:
        return False
    return all(start_times[j] >= start_times[i] + durations[i] for i, j in net.arcs)


def example1() -> tuple[ProjectNetwork, list[Scenario]]:
    """Five-node two-scenario example network (delta=40, beta=0.9)."""
    acts = (
        Activity(0),
        Activity(1, fixed_cost=-90.0, d_min=1, d_max=1),
        Activity(2, fixed_cost=-5500.0, d_min=5, d_max=5),
        Activity(3, fixed_cost=-90.0, d_min=1, d_max=10),
        Activity(4, revenue=10000.0),
    )
    net = ProjectNetwork(acts, ((0, 1), (1, 2), (1, 3), (2, 4), (3, 4)), beta=0.9, deadline=40)
    cash = (0.0, -90.0, -5500.0, -90.0, 10000.0)
    scenarios = [
        Scenario(0.5, (0, 1, 5, 1, 0), cash),
        Scenario(0.5, (0, 1, 5, 10, 0), cash),
    ]
    return net, scenarios
