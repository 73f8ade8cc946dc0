"""Exact finite-horizon backward induction over observable scheduling states."""
from __future__ import annotations

import sys
from dataclasses import dataclass

import numpy as np

from ..env import EnvConfig, EnvState, SchedulingEnv
from ..instances import Instance
from .evpi import posterior


class StateSpaceLimitError(RuntimeError):
    pass


@dataclass
class MdpResult:
    value: float
    policy: dict  # observable state key -> optimal action
    values: dict  # observable state key -> V*
    n_states: int

    def act(self, state: EnvState, feasible: list[int]) -> int:
        return self.policy[state.key()]


def _with_hidden(state: EnvState, scenario) -> EnvState:
    s = state.copy()
    s.hidden_durations = np.array(scenario.durations, dtype=np.int64)
    s.hidden_cash = np.array(scenario.cash_flows, dtype=np.float64)
    return s


def transition_law(env: SchedulingEnv, state: EnvState, action: int) -> dict:
    """Next observable state key -> (probability, representative next state, expected NPV contribution)."""
    kept, probs = posterior(env.instance.scenarios, state)
    law: dict = {}
    for sc, p in zip(kept, probs):
        out = env.step(_with_hidden(state, sc), action)
        key = (out.next_state.key(), out.done)
        if key in law:
            q, rep, val, _ = law[key]
            law[key] = (q + p, rep, val + p * env.discounted_value(out), out)
        else:
            law[key] = (p, out.next_state, p * env.discounted_value(out), out)
    return {k: (q, rep, val / q) for k, (q, rep, val, _) in law.items()}


def exact_mdp_enpv(
    instance: Instance,
    env_config: EnvConfig | None = None,
    max_states: int = 1_000_000,
) -> MdpResult:
    """Optimal non-anticipative expected NPV by memoized backward induction.

    Values are NPV contributions discounted to time zero, so Q*(s,a) is the expected
    discounted cash of the transition plus V*(s'), with the expectation taken over the
    scenarios consistent with the observation. Idling with nothing in progress is allowed
    by default so the policy class contains every fixed schedule.
    """
    if not instance.scenarios:
        raise ValueError("exact MDP needs an omega1 instance")
    env = SchedulingEnv(instance, env_config or EnvConfig(allow_idle=True))
    values: dict = {}
    policy: dict = {}

    def solve(state: EnvState) -> float:
        key = state.key()
        if key in values:
            return values[key]
        if len(values) >= max_states:
            raise StateSpaceLimitError(f"more than {max_states} observable states")
        best, best_a = -np.inf, None
        for a in env.feasible_actions(state):
            q = 0.0
            for (_, done), (p, nxt, contrib) in transition_law(env, state, a).items():
                q += p * (contrib + (0.0 if done else solve(nxt)))
            if q > best:
                best, best_a = q, a
        values[key] = best
        policy[key] = best_a
        return best

    limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(limit, 10_000))
    try:
        root = env.reset(selector="fixed", scenario=0)
        v = solve(root)
    finally:
        sys.setrecursionlimit(limit)
    return MdpResult(float(v), policy, values, len(values))
