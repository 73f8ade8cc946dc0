"""DDQN training loop with replay, epsilon-greedy exploration, target sync and greedy evaluation."""
from __future__ import annotations

import csv
import hashlib
import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .env import SEMI_MDP, EnvConfig, EnvState, SchedulingEnv, rollout
from .instances import Instance
from .mlp import (
    CheckpointError,
    MlpParams,
    adam_init,
    adam_step,
    mlp_backward,
    mlp_forward,
    mlp_init,
    q_network_dims,
)

DDQN, DQN, NO_TARGET = "ddqn", "dqn", "no-target"
VARIANTS = (DDQN, DQN, NO_TARGET)
LOG_FIELDS = ("episode", "return", "epsilon", "mean_loss", "buffer_size", "wall_time_s")


class DimensionMismatchError(CheckpointError):
    pass


@dataclass
class Transition:
    state_features: np.ndarray
    action: int
    reward: float
    delta_t: int
    next_state_features: np.ndarray
    next_feasible_mask: np.ndarray
    done: bool


@dataclass
class Batch:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    delta_t: np.ndarray
    next_states: np.ndarray
    next_masks: np.ndarray
    done: np.ndarray

    @classmethod
    def from_transitions(cls, transitions) -> "Batch":
        return cls(
            np.array([tr.state_features for tr in transitions], dtype=np.float64),
            np.array([tr.action for tr in transitions], dtype=np.int64),
            np.array([tr.reward for tr in transitions], dtype=np.float64),
            np.array([tr.delta_t for tr in transitions], dtype=np.int64),
            np.array([tr.next_state_features for tr in transitions], dtype=np.float64),
            np.array([tr.next_feasible_mask for tr in transitions], dtype=bool),
            np.array([tr.done for tr in transitions], dtype=bool),
        )


class ReplayBuffer:
    """Fixed-capacity FIFO ring of transitions stored column-wise."""

    def __init__(self, capacity: int, n_features: int, n_actions: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._s = np.zeros((capacity, n_features))
        self._a = np.zeros(capacity, dtype=np.int64)
        self._r = np.zeros(capacity)
        self._dt = np.zeros(capacity, dtype=np.int64)
        self._s2 = np.zeros((capacity, n_features))
        self._m2 = np.zeros((capacity, n_actions), dtype=bool)
        self._done = np.zeros(capacity, dtype=bool)
        self._next = 0
        self._size = 0

    def __len__(self) -> int:
        return self._size

    def push(self, tr: Transition) -> None:
        k = self._next
        self._s[k] = tr.state_features
        self._a[k] = tr.action
        self._r[k] = tr.reward
        self._dt[k] = tr.delta_t
        self._s2[k] = tr.next_state_features
        self._m2[k] = tr.next_feasible_mask
        self._done[k] = tr.done
        self._next = (k + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def _slot(self, age_rank: int) -> int:
        # age_rank 0 is the oldest stored record
        start = self._next if self._size == self.capacity else 0
        return (start + age_rank) % self.capacity

    def get(self, age_rank: int) -> Transition:
        if not 0 <= age_rank < self._size:
            raise IndexError(age_rank)
        k = self._slot(age_rank)
        return Transition(
            self._s[k].copy(), int(self._a[k]), float(self._r[k]), int(self._dt[k]),
            self._s2[k].copy(), self._m2[k].copy(), bool(self._done[k]),
        )

    def sample_indices(self, batch_size: int, rng: np.random.Generator) -> np.ndarray:
        """Uniform draw with replacement over stored slots."""
        if self._size == 0:
            raise ValueError("cannot sample from an empty buffer")
        return rng.integers(0, self._size, size=batch_size)

    def batch(self, idx: np.ndarray) -> Batch:
        return Batch(self._s[idx], self._a[idx], self._r[idx], self._dt[idx], self._s2[idx], self._m2[idx], self._done[idx])

    def sample(self, batch_size: int, rng: np.random.Generator) -> Batch:
        return self.batch(self.sample_indices(batch_size, rng))


@dataclass
class AgentConfig:
    variant: str = DDQN
    episodes: int = 20000
    batch_size: int = 256
    target_update_every: int = 1000
    lr: float = 1e-5
    beta: float = 0.9
    epsilon_start: float = 1.0
    epsilon_end: float = 0.01
    epsilon_decay_fraction: float = 0.8
    reward_mode: str = SEMI_MDP
    buffer_capacity: int = 50000
    hidden: tuple[int, ...] = (256, 512, 256)
    seed: int = 0

    def validate(self) -> None:
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.episodes < 1 or self.batch_size < 1 or self.target_update_every < 1:
            raise ValueError("episodes, batch_size and target_update_every must be positive")
        if not 0.0 < self.epsilon_decay_fraction <= 1.0:
            raise ValueError("epsilon_decay_fraction must lie in (0,1]")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "AgentConfig":
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        if "hidden" in known:
            known["hidden"] = tuple(int(h) for h in known["hidden"])
        return cls(**known)


def epsilon_at(episode: int, cfg: AgentConfig) -> float:
    horizon = cfg.epsilon_decay_fraction * cfg.episodes
    if episode >= horizon:
        return cfg.epsilon_end
    frac = episode / horizon
    return cfg.epsilon_start + frac * (cfg.epsilon_end - cfg.epsilon_start)


def masked_argmax(q: np.ndarray, feasible: np.ndarray) -> int:
    if not feasible.any():
        raise ValueError("no feasible action")
    return int(np.argmax(np.where(feasible, q, -np.inf)))


def select_action(q_values, feasible, epsilon: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy over the feasible set.

    ``q_values`` may be a callable so the network is only evaluated when exploiting;
    the rng is consumed identically either way until the branch.
    """
    feasible = np.asarray(feasible, dtype=bool)
    idx = np.flatnonzero(feasible)
    if idx.size == 0:
        raise ValueError("no feasible action")
    if rng.random() < epsilon:
        return int(idx[rng.integers(idx.size)])
    q = q_values() if callable(q_values) else q_values
    return masked_argmax(np.asarray(q, dtype=np.float64), feasible)


def compute_targets(
    batch: Batch | list,
    online: MlpParams,
    target: MlpParams,
    variant: str = DDQN,
    beta: float = 0.9,
    reward_mode: str = SEMI_MDP,
) -> np.ndarray:
    if not isinstance(batch, Batch):
        batch = Batch.from_transitions(batch)
    y = batch.rewards.astype(np.float64).copy()
    live = ~batch.done
    if not live.any():
        return y
    masks = batch.next_masks[live]
    if not masks.any(axis=1).all():
        raise ValueError("empty feasible mask on a non-terminal transition")
    s2 = batch.next_states[live]
    if reward_mode == SEMI_MDP:
        gamma = beta ** batch.delta_t[live].astype(np.float64)
    else:
        gamma = np.full(int(live.sum()), beta)
    rows = np.arange(len(s2))
    if variant == DQN:
        q_t = np.where(masks, mlp_forward(target, s2), -np.inf)
        boot = q_t.max(axis=1)
    else:
        q_on = mlp_forward(online, s2)
        best = np.argmax(np.where(masks, q_on, -np.inf), axis=1)
        if variant == DDQN:
            boot = mlp_forward(target, s2)[rows, best]
        elif variant == NO_TARGET:
            boot = q_on[rows, best]
        else:
            raise ValueError(f"unknown variant {variant!r}")
    y[live] += gamma * boot
    return y


@dataclass
class TrainLog:
    rows: list[dict] = field(default_factory=list)
    gradient_steps: int = 0
    env_steps: int = 0
    target_syncs: int = 0
    buffer_size: int = 0

    @property
    def returns(self) -> np.ndarray:
        return np.array([r["return"] for r in self.rows])

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=LOG_FIELDS, lineterminator="\n")
            w.writeheader()
            for r in self.rows:
                w.writerow({k: _fmt(r[k]) for k in LOG_FIELDS})


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return "" if np.isnan(v) else repr(v)
    return v


def env_config_hash(cfg: EnvConfig) -> str:
    return hashlib.sha256(json.dumps(cfg.as_dict(), sort_keys=True).encode()).hexdigest()[:16]


def train(
    instance: Instance,
    cfg: AgentConfig,
    rng: np.random.Generator | None = None,
    env_config: EnvConfig | None = None,
    record_wall_time: bool = False,
    on_sync: Callable[[MlpParams, MlpParams, int], None] | None = None,
) -> tuple[MlpParams, TrainLog]:
    """Run the DDQN (or ablation variant) loop; deterministic given ``cfg.seed`` or ``rng``."""
    cfg.validate()
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    env_config = env_config or EnvConfig(reward_mode=cfg.reward_mode)
    env = SchedulingEnv(instance, env_config)
    params = mlp_init(q_network_dims(env.n, cfg.hidden), rng)
    target = params.copy()
    adam = adam_init(params, lr=cfg.lr)
    buf = ReplayBuffer(cfg.buffer_capacity, env.n_features, env.n_actions)
    log = TrainLog()
    beta = instance.network.beta
    t0 = time.perf_counter()
    no_mask = np.zeros(env.n_actions, dtype=bool)
    for ep in range(cfg.episodes):
        eps = epsilon_at(ep, cfg)
        state = env.reset(rng, "uniform")
        feats = env.encode_state(state)
        mask = env.feasible_mask(state)
        ep_return = 0.0
        losses = []
        while True:
            a = select_action(lambda: mlp_forward(params, feats)[0], mask, eps, rng)
            out = env.step(state, a, rng)
            log.env_steps += 1
            ep_return += env.discounted_value(out)
            nxt = out.next_state
            nfeats = env.encode_state(nxt)
            nmask = no_mask if out.done else env.feasible_mask(nxt)
            buf.push(Transition(feats, a, out.reward, out.elapsed_time, nfeats, nmask, out.done))
            if len(buf) >= cfg.batch_size:
                batch = buf.sample(cfg.batch_size, rng)
                y = compute_targets(batch, params, target, cfg.variant, beta, env_config.reward_mode)
                grads, loss = mlp_backward(params, batch.states, batch.actions, y)
                params, adam = adam_step(params, grads, adam)
                losses.append(loss)
                log.gradient_steps += 1
                if cfg.variant != NO_TARGET and log.gradient_steps % cfg.target_update_every == 0:
                    target = params.copy()
                    log.target_syncs += 1
                    if on_sync is not None:
                        on_sync(params, target, log.gradient_steps)
            if out.done:
                break
            state, feats, mask = nxt, nfeats, nmask
        log.rows.append(
            {
                "episode": ep,
                "return": float(ep_return),
                "epsilon": float(eps),
                "mean_loss": float(np.mean(losses)) if losses else float("nan"),
                "buffer_size": len(buf),
                "wall_time_s": round(time.perf_counter() - t0, 3) if record_wall_time else None,
            }
        )
    log.buffer_size = len(buf)
    return params, log


def greedy_policy(params: MlpParams, env: SchedulingEnv):
    def policy(state: EnvState, feasible: list[int]) -> int:
        mask = np.zeros(env.n_actions, dtype=bool)
        mask[feasible] = True
        return masked_argmax(mlp_forward(params, env.encode_state(state))[0], mask)

    return policy


@dataclass
class EvalResult:
    mean: float
    std: float  # standard error of the mean (0 for exact scenario enumeration)
    values: list[float]
    weights: list[float]
    failures: int = 0


def check_dimensions(params: MlpParams, env: SchedulingEnv) -> None:
    dims = params.layer_dims
    if dims[0] != env.n_features or dims[-1] != env.n_actions:
        raise DimensionMismatchError(
            f"network maps {dims[0]}->{dims[-1]} but instance needs {env.n_features}->{env.n_actions}"
        )


def evaluate_policy(
    policy,
    instance: Instance,
    env: SchedulingEnv,
    n_episodes: int = 1000,
    rng: np.random.Generator | None = None,
    durations: np.ndarray | None = None,
) -> EvalResult:
    """Omega1: one rollout per scenario, probability weighted. Otherwise sampled episodes,
    either on pre-drawn ``durations`` rows or with online sampling from ``rng``."""
    values, weights = [], []
    failures = 0
    if instance.scenarios:
        for k, sc in enumerate(instance.scenarios):
            _, npv, fail = rollout(env, env.reset(selector="fixed", scenario=k), policy, rng)
            values.append(npv)
            weights.append(sc.prob)
            failures += fail
        mean = float(np.dot(values, weights))
        return EvalResult(mean, 0.0, values, weights, failures)
    if durations is not None:
        starts = [env.reset(selector="given", durations=row) for row in durations]
    else:
        if rng is None:
            raise ValueError("sampled evaluation needs an rng or pre-drawn durations")
        starts = [None] * n_episodes
    for s0 in starts:
        s = env.reset(rng, "online") if s0 is None else s0
        _, npv, fail = rollout(env, s, policy, rng)
        values.append(npv)
        failures += fail
    n = len(values)
    weights = [1.0 / n] * n
    arr = np.asarray(values)
    std = float(arr.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return EvalResult(float(arr.mean()), std, values, weights, failures)


def evaluate(
    params: MlpParams,
    instance: Instance,
    n_episodes: int = 1000,
    rng: np.random.Generator | None = None,
    env_config: EnvConfig | None = None,
    durations: np.ndarray | None = None,
) -> EvalResult:
    env = SchedulingEnv(instance, env_config)
    check_dimensions(params, env)
    return evaluate_policy(greedy_policy(params, env), instance, env, n_episodes, rng, durations)


# --- tabular sanity learner ----------------------------------------------------


class StateSpaceLimitError(RuntimeError):
    pass


@dataclass
class TabularResult:
    q: dict
    greedy_value: float
    n_states: int

    def policy(self, env: SchedulingEnv):
        def act(state: EnvState, feasible: list[int]) -> int:
            row = self.q.get(state.key())
            if row is None:
                return feasible[0]
            return max(feasible, key=lambda a: (row[a], -a))

        return act


def tabular_q(
    instance: Instance,
    n_episodes: int,
    rng: np.random.Generator | None = None,
    epsilon: Callable[[int], float] | float = 0.2,
    alpha_power: float = 1.0,
    env_config: EnvConfig | None = None,
    max_states: int = 100_000,
) -> TabularResult:
    """Q-learning on observable states with step size 1/visits**alpha_power and discount beta**dt."""
    rng = rng or np.random.default_rng(0)
    env_config = env_config or EnvConfig()
    env = SchedulingEnv(instance, env_config)
    n_act = env.n_actions
    q: dict = {}
    visits: dict = {}
    eps_fn = epsilon if callable(epsilon) else (lambda _ep, e=float(epsilon): e)

    def row(key):
        r = q.get(key)
        if r is None:
            if len(q) >= max_states:
                raise StateSpaceLimitError(f"more than {max_states} states visited")
            r = q[key] = np.zeros(n_act)
            visits[key] = np.zeros(n_act, dtype=np.int64)
        return r

    for ep in range(n_episodes):
        eps = eps_fn(ep)
        state = env.reset(rng, "uniform")
        while True:
            key = state.key()
            qs = row(key)
            mask = env.feasible_mask(state)
            a = select_action(qs, mask, eps, rng)
            out = env.step(state, a, rng)
            target = out.reward
            if not out.done:
                nq = row(out.next_state.key())
                nmask = env.feasible_mask(out.next_state)
                gamma = env.discount(out)
                target += gamma * nq[nmask].max()
            visits[key][a] += 1
            lr = 1.0 / visits[key][a] ** alpha_power
            qs[a] += lr * (target - qs[a])
            if out.done:
                break
            state = out.next_state
    res = TabularResult(q, 0.0, len(q))
    res.greedy_value = evaluate_policy(res.policy(env), instance, env, rng=rng).mean
    return res
