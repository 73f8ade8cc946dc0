"""Exact max-NPV scheduling for known durations and cash flows.

Substituting x_j = beta**t_j turns every precedence constraint t_b - t_a >= w into the
linear constraint x_b <= beta**w * x_a, so the problem is a linear program whose vertices
are spanning trees of tight constraints and hence have integer start times. The solver
starts at the earliest-start schedule and repeatedly shifts a set of activities that is
closed under tight constraints (found by a max-weight closure / min-cut) as far as the
first non-tight constraint allows. When no improving closed set exists the point is
LP-optimal, therefore globally optimal over integer schedules.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from ..project import ProjectNetwork, Schedule, schedule_npv

FIX = "fix"
MIN = "min"


class InfeasibleProblemError(ValueError):
    pass


class LimitExceededError(ValueError):
    pass


@dataclass(frozen=True)
class DetProblem:
    network: ProjectNetwork
    durations: tuple[int, ...]
    cash: tuple[float, ...]
    extra_constraints: tuple[tuple[int, str, int], ...] = field(default_factory=tuple)
    deadline: int | None = None  # None -> network deadline

    def __post_init__(self):
        object.__setattr__(self, "durations", tuple(int(d) for d in self.durations))
        object.__setattr__(self, "cash", tuple(float(c) for c in self.cash))
        cons = []
        for j, kind, t in self.extra_constraints:
            if kind not in (FIX, MIN):
                raise ValueError(f"unknown constraint kind {kind!r}")
            cons.append((int(j), kind, int(t)))
        object.__setattr__(self, "extra_constraints", tuple(cons))

    @property
    def horizon(self) -> int:
        return self.network.deadline if self.deadline is None else int(self.deadline)

    def with_constraints(self, extra) -> "DetProblem":
        return DetProblem(self.network, self.durations, self.cash, self.extra_constraints + tuple(extra), self.deadline)


def _bounds(p: DetProblem) -> tuple[list[int], dict[int, int]]:
    """Per-activity lower bounds and fixed starts (start dummy fixed at 0)."""
    n = p.network.n_nodes
    lb = [0] * n
    fixed: dict[int, int] = {0: 0}
    for j, kind, t in p.extra_constraints:
        if kind == FIX:
            if fixed.get(j, t) != t:
                raise InfeasibleProblemError(f"activity {j} fixed at two different times")
            fixed[j] = t
        else:
            lb[j] = max(lb[j], t)
    return lb, fixed


def earliest_schedule(p: DetProblem) -> np.ndarray:
    """Least solution of all lower-bound constraints; raises if an upper bound is violated."""
    net = p.network
    d = p.durations
    lb, fixed = _bounds(p)
    t = np.zeros(net.n_nodes, dtype=np.int64)
    for j in net.topological_order:
        v = lb[j]
        for i in net.predecessors[j]:
            v = max(v, int(t[i]) + d[i])
        if j in fixed:
            if v > fixed[j]:
                raise InfeasibleProblemError(f"activity {j} cannot start at {fixed[j]} (earliest {v})")
            v = fixed[j]
        t[j] = v
    if t[net.end] > p.horizon:
        raise InfeasibleProblemError(f"earliest completion {int(t[net.end])} exceeds deadline {p.horizon}")
    return t


def latest_schedule(p: DetProblem) -> np.ndarray:
    """Greatest start times compatible with the deadline, fixes and successors (ignores lower bounds)."""
    net = p.network
    d = p.durations
    _, fixed = _bounds(p)
    ls = np.full(net.n_nodes, p.horizon, dtype=np.int64)
    for i in reversed(net.topological_order):
        for j in net.successors[i]:
            ls[i] = min(ls[i], ls[j] - d[i])
        if i in fixed:
            ls[i] = min(ls[i], fixed[i])
    return ls


def _constraints(p: DetProblem) -> list[tuple[int, int, int]]:
    """Difference constraints (a, b, w) meaning t_b - t_a >= w."""
    net = p.network
    d = p.durations
    lb, fixed = _bounds(p)
    cons = [(i, j, d[i]) for i, j in net.arcs]
    for j in range(1, net.n_nodes):
        cons.append((0, j, lb[j]))
    for j, v in fixed.items():
        if j:
            cons.append((0, j, v))
            cons.append((j, 0, -v))
    cons.append((net.end, 0, -p.horizon))
    return cons


def _max_closure(weights: np.ndarray, closure_edges: list[tuple[int, int]], forbidden: int) -> tuple[set[int], float]:
    """Maximum-weight set S with (u in S => v in S) for every (u, v) edge, excluding ``forbidden``.

    Solved as a min s-t cut with Edmonds-Karp; returns (S, weight(S)).
    """
    n = len(weights)
    src, snk = n, n + 1
    cap = [dict() for _ in range(n + 2)]

    def add(u, v, c):
        cap[u][v] = cap[u].get(v, 0.0) + c
        cap[v].setdefault(u, 0.0)

    for j, w in enumerate(weights):
        if j == forbidden:
            add(j, snk, math.inf)
        elif w > 0:
            add(src, j, float(w))
        elif w < 0:
            add(j, snk, float(-w))
    for u, v in closure_edges:
        add(u, v, math.inf)
    scale = float(np.abs(weights).sum()) or 1.0
    tiny = 1e-13 * scale
    while True:
        parent = {src: None}
        q = deque([src])
        while q and snk not in parent:
            u = q.popleft()
            for v, c in cap[u].items():
                if c > tiny and v not in parent:
                    parent[v] = u
                    q.append(v)
        if snk not in parent:
            break
        flow = math.inf
        v = snk
        while parent[v] is not None:
            u = parent[v]
            flow = min(flow, cap[u][v])
            v = u
        v = snk
        while parent[v] is not None:
            u = parent[v]
            cap[u][v] -= flow
            cap[v][u] += flow
            v = u
    side = {v for v in parent if v < n}
    return side, float(sum(weights[j] for j in side))


def _improve(t: np.ndarray, cash: np.ndarray, beta: float, cons, max_iter: int = 100_000) -> np.ndarray:
    t = t.copy()
    for _ in range(max_iter):
        w = cash * beta ** t.astype(np.float64)
        tol = 1e-12 * max(1.0, float(np.abs(w).sum()))
        slack = [t[b] - t[a] - c for a, b, c in cons]
        tight = [(a, b) for (a, b, _), s in zip(cons, slack) if s == 0]
        # later shift: closed under tight successors, total discounted cash negative
        later, val = _max_closure(-w, tight, forbidden=0)
        if later and val > tol:
            delta = min(s for (a, b, _), s in zip(cons, slack) if a in later and b not in later)
            t[list(later)] += delta
            continue
        # earlier shift: closed under tight predecessors, total discounted cash positive
        earlier, val = _max_closure(w, [(b, a) for a, b in tight], forbidden=0)
        if earlier and val > tol:
            delta = min(s for (a, b, _), s in zip(cons, slack) if b in earlier and a not in earlier)
            t[list(earlier)] -= delta
            continue
        return t
    raise RuntimeError("max-NPV improvement did not converge")


def solve_det_npv(p: DetProblem) -> tuple[Schedule, float]:
    net = p.network
    cash = np.asarray(p.cash, dtype=np.float64)
    if len(cash) != net.n_nodes or len(p.durations) != net.n_nodes:
        raise ValueError("durations/cash length must equal the number of nodes")
    t0 = earliest_schedule(p)
    t = _improve(t0, cash, net.beta, _constraints(p))
    return Schedule(t), schedule_npv(t, cash, net.beta)


def brute_force_det_npv(p: DetProblem, max_activities: int = 5, max_deadline: int = 20) -> tuple[Schedule, float]:
    """Depth-first enumeration of integer start times in topological order.

    Branches whose optimistic completion cannot beat the incumbent are cut; the bound
    uses each remaining activity's best value over its static [earliest, latest] window,
    so the search stays exact.
    """
    net = p.network
    if net.n_nodes - 2 > max_activities or p.horizon > max_deadline:
        raise LimitExceededError(
            f"brute force limited to {max_activities} activities and deadline {max_deadline}"
        )
    beta = net.beta
    d = p.durations
    cash = p.cash
    lb, fixed = _bounds(p)
    es = earliest_schedule(p)
    ls = latest_schedule(p)
    order = net.topological_order
    best_tail = [0.0] * (len(order) + 1)
    for k in range(len(order) - 1, -1, -1):
        j = order[k]
        lo, hi = int(es[j]), int(ls[j])
        best_tail[k] = best_tail[k + 1] + max(cash[j] * beta**lo, cash[j] * beta**hi)
    t = [0] * net.n_nodes
    best = [-math.inf, None]

    def dfs(k: int, acc: float) -> None:
        if k == len(order):
            if acc > best[0]:
                best[0], best[1] = acc, list(t)
            return
        if acc + best_tail[k] <= best[0]:
            return
        j = order[k]
        lo = max([lb[j]] + [t[i] + d[i] for i in net.predecessors[j]])
        hi = int(ls[j])
        if j in fixed:
            lo, hi = max(lo, fixed[j]), min(hi, fixed[j])
        for v in range(lo, hi + 1):
            t[j] = v
            dfs(k + 1, acc + cash[j] * beta**v)

    dfs(0, 0.0)
    if best[1] is None:
        raise InfeasibleProblemError("no feasible schedule")
    return Schedule(best[1]), schedule_npv(best[1], cash, beta)
