"""Discrete-time scheduling MDP: state bookkeeping, feasible actions, transitions, rewards.

Action ``0`` advances the clock by one period; action ``j >= 1`` starts activity ``j``.
The start dummy is executed automatically on reset and is never an action.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import IO

import numpy as np

from .instances import Instance

NOT_STARTED, IN_PROGRESS, COMPLETED = 0, 1, 2
NOOP = 0

SEMI_MDP = "semi-mdp"
LITERAL = "literal"


class InfeasibleActionError(ValueError):
    pass


@dataclass(frozen=True)
class EnvConfig:
    reward_mode: str = SEMI_MDP
    penalty: float | None = None  # None -> default breach penalty of the instance
    allow_idle: bool = False
    duration_scale: int = 10  # normalizer for elapsed-time features

    def as_dict(self) -> dict:
        return {
            "reward_mode": self.reward_mode,
            "penalty": self.penalty,
            "allow_idle": self.allow_idle,
            "duration_scale": self.duration_scale,
        }


@dataclass
class EnvState:
    t: int
    active: frozenset
    unstarted: frozenset
    finished: frozenset
    elapsed: np.ndarray
    start_times: np.ndarray
    status: np.ndarray
    hidden_durations: np.ndarray  # -1 until drawn (online mode)
    hidden_cash: np.ndarray  # nan until realized (online mode)
    scenario: int | None = None

    def key(self) -> tuple:
        """Observable state identity (time, status, elapsed)."""
        return (self.t, self.status.tobytes(), self.elapsed.tobytes())

    def copy(self) -> "EnvState":
        return EnvState(
            self.t,
            self.active,
            self.unstarted,
            self.finished,
            self.elapsed.copy(),
            self.start_times.copy(),
            self.status.copy(),
            self.hidden_durations.copy(),
            self.hidden_cash.copy(),
            self.scenario,
        )


@dataclass
class StepOutcome:
    next_state: EnvState
    reward: float
    elapsed_time: int
    completed: frozenset
    done: bool
    failure: bool
    raw_cash: float = 0.0
    decision_time: int = 0


def default_penalty(instance: Instance) -> float:
    net = instance.network
    dscale = max(10, int(net.d_max.max()))
    return 2.0 * sum(abs(a.fixed_cost) + dscale * abs(a.var_cost) + abs(a.revenue) for a in net.activities)


class SchedulingEnv:
    """Stateless transition machinery bound to one instance; states are passed explicitly."""

    def __init__(self, instance: Instance, config: EnvConfig | None = None):
        self.instance = instance
        self.net = instance.network
        self.config = config or EnvConfig()
        if self.config.reward_mode not in (SEMI_MDP, LITERAL):
            raise ValueError(f"unknown reward mode {self.config.reward_mode!r}")
        self.n = self.net.n_nodes
        self.end = self.n - 1
        self.beta = self.net.beta
        self.deadline = self.net.deadline
        self.penalty = default_penalty(instance) if self.config.penalty is None else float(self.config.penalty)
        self._preds = [np.array(p, dtype=np.int64) for p in self.net.predecessors]
        self.n_features = 1 + 3 * self.n
        self.n_actions = self.n
        lo = np.array([a.d_min for a in self.net.activities])
        hi = np.array([a.d_max for a in self.net.activities])
        self._lo, self._hi = lo, hi

    # -- reset ---------------------------------------------------------------
    def reset(
        self,
        rng: np.random.Generator | None = None,
        selector: str = "uniform",
        scenario: int | None = None,
        durations=None,
    ) -> EnvState:
        """Initial state.

        ``selector`` is ``"fixed"`` (use ``scenario``), ``"uniform"`` (draw a scenario),
        ``"online"`` (draw each duration when its activity starts) or ``"given"``
        (explicit ``durations``; cash by the activity cost rule).
        """
        n = self.n
        dur = np.full(n, -1, dtype=np.int64)
        cash = np.full(n, np.nan)
        scen_idx = None
        scenarios = self.instance.scenarios
        if selector == "fixed":
            if not scenarios:
                raise ValueError("fixed scenario selection requires an omega1 instance")
            if scenario is None or not 0 <= scenario < len(scenarios):
                raise IndexError(f"scenario index {scenario} out of range")
            scen_idx = scenario
        elif selector == "uniform":
            if scenarios:
                probs = np.array([s.prob for s in scenarios])
                scen_idx = int(rng.choice(len(scenarios), p=probs))
            else:
                selector = "online"
        elif selector == "given":
            dur = np.asarray(durations, dtype=np.int64).copy()
            cash = self.net.cash_for(dur)
        elif selector != "online":
            raise ValueError(f"unknown scenario selector {selector!r}")
        if scen_idx is not None:
            sc = scenarios[scen_idx]
            dur = np.array(sc.durations, dtype=np.int64)
            cash = np.array(sc.cash_flows, dtype=np.float64)
        dur[0] = 0
        if np.isnan(cash[0]):
            cash[0] = self.net.activities[0].cash(0)
        status = np.zeros(n, dtype=np.int64)
        status[0] = COMPLETED
        start = np.full(n, -1, dtype=np.int64)
        start[0] = 0
        return EnvState(
            t=0,
            active=frozenset(),
            unstarted=frozenset(range(1, n)),
            finished=frozenset({0}),
            elapsed=np.zeros(n, dtype=np.int64),
            start_times=start,
            status=status,
            hidden_durations=dur,
            hidden_cash=cash,
            scenario=scen_idx,
        )

    # -- actions -------------------------------------------------------------
    def eligible(self, state: EnvState) -> list[int]:
        st = state.status
        return [
            j
            for j in sorted(state.unstarted)
            if not len(self._preds[j]) or (st[self._preds[j]] == COMPLETED).all()
        ]

    def feasible_actions(self, state: EnvState) -> list[int]:
        acts = self.eligible(state)
        if state.active or (self.config.allow_idle and state.unstarted):
            acts.insert(0, NOOP)
        return acts

    def feasible_mask(self, state: EnvState) -> np.ndarray:
        mask = np.zeros(self.n_actions, dtype=bool)
        mask[self.feasible_actions(state)] = True
        return mask

    # -- transition ----------------------------------------------------------
    def step(self, state: EnvState, action: int, rng: np.random.Generator | None = None) -> StepOutcome:
        action = int(action)
        if action != NOOP:
            if action not in state.unstarted or action not in self.eligible(state):
                raise InfeasibleActionError(f"activity {action} cannot start at t={state.t}")
            return self._start(state, action, rng)
        if not state.active and not (self.config.allow_idle and state.unstarted):
            raise InfeasibleActionError(f"no-op with no activity in progress at t={state.t}")
        return self._advance(state)

    def _start(self, state: EnvState, j: int, rng) -> StepOutcome:
        s = state.copy()
        t = s.t
        if s.hidden_durations[j] < 0:
            if rng is None:
                raise ValueError("online duration sampling needs an rng")
            s.hidden_durations[j] = int(rng.integers(self._lo[j], self._hi[j] + 1))
        if np.isnan(s.hidden_cash[j]):
            s.hidden_cash[j] = self.net.activities[j].cash(int(s.hidden_durations[j]))
        cash = float(s.hidden_cash[j])
        s.start_times[j] = t
        s.unstarted = state.unstarted - {j}
        completed = frozenset()
        if s.hidden_durations[j] == 0:
            s.status[j] = COMPLETED
            s.finished = state.finished | {j}
            completed = frozenset({j})
        else:
            s.status[j] = IN_PROGRESS
            s.active = state.active | {j}
        done = j == self.end
        reward = cash if self.config.reward_mode == SEMI_MDP else cash * self.beta**t
        return StepOutcome(s, reward, 0, completed, done, False, cash, t)

    def _advance(self, state: EnvState) -> StepOutcome:
        s = state.copy()
        t = s.t
        s.t = t + 1
        done_now = []
        for j in state.active:
            s.elapsed[j] += 1
            if s.elapsed[j] >= s.hidden_durations[j]:
                s.status[j] = COMPLETED
                done_now.append(j)
        completed = frozenset(done_now)
        if completed:
            s.active = state.active - completed
            s.finished = state.finished | completed
        reward = 0.0
        failure = False
        if s.t > self.deadline:
            failure = True
            reward = -self.penalty
            if self.config.reward_mode == LITERAL:
                reward *= self.beta**t
        return StepOutcome(s, reward, 1, completed, failure, failure, 0.0, t)

    def discount(self, outcome: StepOutcome) -> float:
        """Bootstrap discount for the transition: beta**dt (semi-MDP) or beta (literal)."""
        if self.config.reward_mode == SEMI_MDP:
            return self.beta**outcome.elapsed_time
        return self.beta

    # -- observation ---------------------------------------------------------
    def encode_state(self, state: EnvState) -> np.ndarray:
        n = self.n
        out = np.empty(1 + 3 * n)
        out[0] = state.t / self.deadline
        out[1 : 1 + n] = state.status / 2.0
        out[1 + n : 1 + 2 * n] = state.elapsed / float(self.config.duration_scale)
        out[1 + 2 * n :] = (state.start_times + 1) / float(self.deadline + 1)
        return out

    def discounted_value(self, outcome: StepOutcome) -> float:
        """NPV contribution of one step: beta**t times the undiscounted reward."""
        raw = outcome.reward
        if self.config.reward_mode == LITERAL:
            return raw
        return raw * self.beta**outcome.decision_time


def rollout(env: SchedulingEnv, state: EnvState, policy, rng=None, trace: list | None = None):
    """Run ``policy(state, feasible) -> action`` to termination.

    Returns ``(final_state, npv, failure)`` where ``npv`` includes a discounted breach penalty.
    """
    total = 0.0
    failure = False
    while True:
        feas = env.feasible_actions(state)
        a = policy(state, feas)
        out = env.step(state, a, rng)
        total += env.discounted_value(out)
        if trace is not None:
            trace.append(
                {
                    "t": out.decision_time,
                    "action": int(a),
                    "reward": out.reward,
                    "dt": out.elapsed_time,
                    "completed": sorted(int(c) for c in out.completed),
                }
            )
        state = out.next_state
        if out.done:
            failure = out.failure
            return state, total, failure


def write_trace(trace: list[dict], fh: IO[str]) -> None:
    for rec in trace:
        fh.write(json.dumps(rec) + "\n")
