"""Perfect-information bound, rigid schedule and the event-driven DYN heuristic."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..env import NOOP, EnvConfig, EnvState, SchedulingEnv
from ..instances import Instance
from ..project import Schedule, Scenario, schedule_npv
from .detsolver import FIX, MIN, DetProblem, InfeasibleProblemError, earliest_schedule, solve_det_npv


class InconsistentHistoryError(ValueError):
    pass


def consistent(scenario_durations, state: EnvState | None) -> bool:
    if state is None:
        return True
    d = scenario_durations
    for j in state.finished:
        if d[j] != state.elapsed[j]:
            return False
    for j in state.active:
        if d[j] <= state.elapsed[j]:
            return False
    return True


def history_constraints(state: EnvState | None) -> list[tuple[int, str, int]]:
    """Started activities keep their start; unstarted ones cannot start before now."""
    if state is None:
        return []
    cons = []
    for j in range(1, len(state.status)):
        if state.start_times[j] >= 0:
            cons.append((j, FIX, int(state.start_times[j])))
        elif state.t > 0:
            cons.append((j, MIN, int(state.t)))
    return cons


def posterior(scenarios, state: EnvState | None) -> tuple[list[Scenario], np.ndarray]:
    kept = [s for s in scenarios if consistent(s.durations, state)]
    if not kept:
        raise InconsistentHistoryError("no scenario is consistent with the observed history")
    p = np.array([s.prob for s in kept])
    return kept, p / p.sum()


@dataclass
class EvPiDetail:
    value: float
    probs: np.ndarray
    values: np.ndarray
    schedules: list


def ev_pi_detail(
    instance: Instance,
    state: EnvState | None = None,
    extra=(),
    scenarios=None,
    infeasible: str = "raise",
) -> EvPiDetail:
    """Probability-weighted deterministic optima of the scenarios consistent with ``state``.

    With ``infeasible="-inf"`` a scenario with no feasible completion scores minus infinity
    instead of raising.
    """
    scen = scenarios if scenarios is not None else instance.scenarios
    if not scen:
        raise ValueError("ev_pi needs a scenario set (sample one for omega2 instances)")
    kept, probs = posterior(scen, state)
    cons = tuple(history_constraints(state)) + tuple(extra)
    net = instance.network
    values, scheds = [], []
    for s in kept:
        try:
            sched, v = solve_det_npv(DetProblem(net, s.durations, s.cash_flows, cons))
        except InfeasibleProblemError:
            if infeasible == "raise":
                raise
            sched, v = None, -math.inf
        values.append(v)
        scheds.append(sched)
    values = np.array(values)
    total = -math.inf if np.isneginf(values).any() else float(np.dot(probs, values))
    return EvPiDetail(total, probs, values, scheds)


def ev_pi(instance: Instance, state: EnvState | None = None, extra=(), scenarios=None) -> float:
    return ev_pi_detail(instance, state, extra, scenarios).value


# --- rigid ---------------------------------------------------------------------


@dataclass
class RigidResult:
    schedule: Schedule
    value: float
    worst_durations: tuple[int, ...]
    mean_cash: tuple[float, ...]


def rigid_inputs(instance: Instance) -> tuple[np.ndarray, np.ndarray]:
    net = instance.network
    if instance.scenarios:
        d = np.max([s.durations for s in instance.scenarios], axis=0)
        c = np.sum([s.prob * np.asarray(s.cash_flows) for s in instance.scenarios], axis=0)
    else:
        d = net.d_max
        c = np.array([a.fixed_cost + 0.5 * (a.d_min + a.d_max) * a.var_cost + a.revenue for a in net.activities])
    return d.astype(np.int64), c.astype(np.float64)


def solve_rigid(instance: Instance) -> RigidResult:
    """One start-time vector feasible for worst-case durations, maximizing expected NPV."""
    d, c = rigid_inputs(instance)
    sched, _ = solve_det_npv(DetProblem(instance.network, d, c))
    beta = instance.network.beta
    if instance.scenarios:
        value = sum(s.prob * schedule_npv(sched, s.cash_flows, beta) for s in instance.scenarios)
    else:
        value = schedule_npv(sched, c, beta)
    return RigidResult(sched, float(value), tuple(int(x) for x in d), tuple(float(x) for x in c))


# --- DYN -----------------------------------------------------------------------


@dataclass
class DynResult:
    schedule: Schedule
    npv: float
    failure: bool
    decisions: list


def sample_consistent_scenarios(instance: Instance, state: EnvState, k: int, rng: np.random.Generator) -> list[Scenario]:
    """Equiprobable duration draws on each activity's support that agree with what has been observed."""
    net = instance.network
    lo = net.d_min.copy()
    hi = net.d_max.copy()
    for j in state.finished:
        lo[j] = hi[j] = state.elapsed[j]
    for j in state.active:
        lo[j] = max(lo[j], state.elapsed[j] + 1)
        hi[j] = max(hi[j], lo[j])
    draws = rng.integers(lo, hi + 1, size=(k, net.n_nodes))
    return [Scenario(1.0 / k, row, net.cash_for(row)) for row in draws]


def _worst_case_feasible(instance: Instance, state: EnvState, extra) -> bool:
    net = instance.network
    d = net.d_max.copy()
    for j in state.finished:
        d[j] = state.elapsed[j]
    for j in state.active:
        d[j] = max(d[j], state.elapsed[j] + 1)
    try:
        earliest_schedule(DetProblem(net, d, np.zeros(net.n_nodes), tuple(history_constraints(state)) + tuple(extra)))
    except InfeasibleProblemError:
        return False
    return True


def _solve_all(instance, state, scen, extra) -> tuple[np.ndarray, list]:
    net = instance.network
    cons = tuple(history_constraints(state)) + tuple(extra)
    vals = np.empty(len(scen))
    scheds = []
    for k, s in enumerate(scen):
        try:
            sched, vals[k] = solve_det_npv(DetProblem(net, s.durations, s.cash_flows, cons))
        except InfeasibleProblemError:
            sched, vals[k] = None, -math.inf
        scheds.append(sched)
    return vals, scheds


def _expect(probs, vals) -> float:
    return -math.inf if np.isneginf(vals).any() else float(np.dot(probs, vals))


def start_or_delay_values(instance, state, scen, probs, j, base=None) -> tuple[float, float]:
    """Conditioned EV|PI of starting ``j`` now versus at ``t+1`` or later.

    Each scenario's unconstrained optimum already answers one side (it starts ``j`` either
    now or later), so only the other side needs a fresh solve.
    """
    net = instance.network
    t = state.t
    hist = tuple(history_constraints(state))
    if base is None:
        base = _solve_all(instance, state, scen, ())
    now = np.empty(len(scen))
    later = np.empty(len(scen))
    for k, s in enumerate(scen):
        bval, bsched = base[0][k], base[1][k]
        if bsched is None:
            now[k] = later[k] = -math.inf
            continue
        starts_now = bsched.start_times[j] == t
        other = (j, MIN, t + 1) if starts_now else (j, FIX, t)
        try:
            oval = solve_det_npv(DetProblem(net, s.durations, s.cash_flows, hist + (other,)))[1]
        except InfeasibleProblemError:
            oval = -math.inf
        now[k], later[k] = (bval, oval) if starts_now else (oval, bval)
    return _expect(probs, now), _expect(probs, later)


def run_dyn(
    instance: Instance,
    scenario: int | None = None,
    durations=None,
    rng: np.random.Generator | None = None,
    n_samples: int = 30,
) -> DynResult:
    """Simulate the start-or-delay heuristic against one realization.

    The realization is scenario index ``scenario`` (omega1), explicit ``durations``, or
    online draws from ``rng``. Each eligible activity (in id order) starts now when the
    conditioned perfect-information value of starting now is at least that of starting
    at t+1 or later.
    """
    env = SchedulingEnv(instance, EnvConfig(allow_idle=True))
    if scenario is not None:
        state = env.reset(selector="fixed", scenario=scenario)
    elif durations is not None:
        state = env.reset(selector="given", durations=durations)
    else:
        if rng is None:
            raise ValueError("run_dyn needs a scenario, durations or an rng")
        state = env.reset(rng, "online")
    sampled = not instance.scenarios
    if sampled and rng is None:
        rng = np.random.default_rng(0)
    npv = 0.0
    decisions = []
    while True:
        scen = sample_consistent_scenarios(instance, state, n_samples, rng) if sampled else instance.scenarios
        kept, probs = posterior(scen, state)
        considered: set[int] = set()
        base = None
        while True:
            todo = [j for j in env.eligible(state) if j not in considered]
            if not todo:
                break
            j = todo[0]
            considered.add(j)
            if base is None:
                base = _solve_all(instance, state, kept, ())
            v_now, v_delay = start_or_delay_values(instance, state, kept, probs, j, base)
            if sampled and v_delay > -math.inf and not _worst_case_feasible(instance, state, [(j, MIN, state.t + 1)]):
                v_delay = -math.inf
            start = v_now >= v_delay
            decisions.append((state.t, j, v_now, v_delay, start))
            if start:
                out = env.step(state, j, rng)
                npv += env.discounted_value(out)
                state = out.next_state
                base = None
                if out.done:
                    return DynResult(Schedule(state.start_times), npv, False, decisions)
        out = env.step(state, NOOP, rng)
        npv += env.discounted_value(out)
        state = out.next_state
        if out.done:
            return DynResult(Schedule(state.start_times), npv, True, decisions)
