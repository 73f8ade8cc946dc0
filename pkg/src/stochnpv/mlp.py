"""Fully connected ReLU Q-network in numpy: forward, masked MSE backprop, Adam, checkpoints."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

CHECKPOINT_VERSION = "1"
HIDDEN = (256, 512, 256)


class CheckpointError(ValueError):
    pass


@dataclass
class MlpParams:
    weights: list[np.ndarray]  # layer l maps (batch, dims[l]) -> (batch, dims[l+1])
    biases: list[np.ndarray]

    @property
    def layer_dims(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def arrays(self) -> list[np.ndarray]:
        return [*self.weights, *self.biases]

    def copy(self) -> "MlpParams":
        return MlpParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def n_params(self) -> int:
        return sum(a.size for a in self.arrays())

    def all_finite(self) -> bool:
        return all(np.isfinite(a).all() for a in self.arrays())


@dataclass
class AdamState:
    first_moment: list[np.ndarray]
    second_moment: list[np.ndarray]
    step_count: int = 0
    lr: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def copy(self) -> "AdamState":
        return AdamState(
            [m.copy() for m in self.first_moment],
            [v.copy() for v in self.second_moment],
            self.step_count,
            self.lr,
            self.beta1,
            self.beta2,
            self.eps,
        )


def q_network_dims(n_nodes: int, hidden: Sequence[int] = HIDDEN) -> list[int]:
    return [1 + 3 * n_nodes, *hidden, n_nodes]


def mlp_init(dims: Sequence[int], rng: np.random.Generator) -> MlpParams:
    """He-uniform weights (bound sqrt(6/fan_in)), zero biases."""
    dims = [int(d) for d in dims]
    if len(dims) < 2 or min(dims) < 1:
        raise ValueError(f"invalid layer dims {dims}")
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpParams(weights, biases)


def _forward(params: MlpParams, x: np.ndarray):
    pre, acts = [], [x]
    h = x
    last = len(params.weights) - 1
    for l, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ w + b
        pre.append(z)
        h = z if l == last else np.maximum(z, 0.0)
        acts.append(h)
    return pre, acts


def mlp_forward(params: MlpParams, inputs: np.ndarray) -> np.ndarray:
    x = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    if x.shape[1] != params.weights[0].shape[0]:
        raise ValueError(f"input width {x.shape[1]} != {params.weights[0].shape[0]}")
    h = x
    last = len(params.weights) - 1
    for l, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = h @ w + b
        if l != last:
            np.maximum(h, 0.0, out=h)
    return h


def mlp_backward(params: MlpParams, inputs, action_indices, targets) -> tuple[MlpParams, float]:
    """Gradient of mean((y - Q(s, a))^2) over the batch; only the taken action's output carries error."""
    x = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    a = np.asarray(action_indices, dtype=np.int64)
    y = np.asarray(targets, dtype=np.float64)
    if not np.isfinite(y).all():
        raise ValueError("non-finite target")
    if not (len(x) == len(a) == len(y)):
        raise ValueError("batch shapes disagree")
    batch = len(x)
    pre, acts = _forward(params, x)
    rows = np.arange(batch)
    err = acts[-1][rows, a] - y
    loss = float(np.mean(err**2))
    delta = np.zeros_like(acts[-1])
    delta[rows, a] = 2.0 * err / batch
    gw = [None] * len(params.weights)
    gb = [None] * len(params.biases)
    for l in range(len(params.weights) - 1, -1, -1):
        gw[l] = acts[l].T @ delta
        gb[l] = delta.sum(axis=0)
        if l:
            delta = (delta @ params.weights[l].T) * (pre[l - 1] > 0)
    return MlpParams(gw, gb), loss


def adam_init(params: MlpParams, lr: float = 1e-5, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> AdamState:
    zeros = [np.zeros_like(p) for p in params.arrays()]
    return AdamState(zeros, [z.copy() for z in zeros], 0, lr, beta1, beta2, eps)


def adam_step(params: MlpParams, grads: MlpParams, state: AdamState) -> tuple[MlpParams, AdamState]:
    step = state.step_count + 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**step
    c2 = 1.0 - b2**step
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(params.arrays(), grads.arrays(), state.first_moment, state.second_moment):
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        new_p.append(p - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps))
        new_m.append(m)
        new_v.append(v)
    k = len(params.weights)
    out = MlpParams(new_p[:k], new_p[k:])
    return out, AdamState(new_m, new_v, step, state.lr, b1, b2, state.eps)


def _loss(params: MlpParams, x, a, y) -> float:
    q = mlp_forward(params, x)
    return float(np.mean((q[np.arange(len(x)), a] - y) ** 2))


def grad_check(
    params: MlpParams,
    inputs,
    action_indices,
    targets,
    h: float = 1e-5,
    backward: Callable = mlp_backward,
) -> float:
    """Max relative error between ``backward`` and central differences over every parameter."""
    x = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    a = np.asarray(action_indices, dtype=np.int64)
    y = np.asarray(targets, dtype=np.float64)
    grads, _ = backward(params, x, a, y)
    probe = params.copy()
    worst = 0.0
    for arr, g in zip(probe.arrays(), grads.arrays()):
        flat = arr.reshape(-1)
        gflat = np.asarray(g).reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + h
            up = _loss(probe, x, a, y)
            flat[k] = orig - h
            down = _loss(probe, x, a, y)
            flat[k] = orig
            num = (up - down) / (2.0 * h)
            ana = gflat[k]
            denom = max(abs(ana), abs(num), 1e-8)
            worst = max(worst, abs(ana - num) / denom)
    return worst


# --- checkpoints -------------------------------------------------------------


def _to_lists(arrs):
    return [a.tolist() for a in arrs]


def write_checkpoint(path: str | Path, params: MlpParams, adam: AdamState | None, metadata: dict | None = None) -> None:
    doc = {
        "version": CHECKPOINT_VERSION,
        "layer_dims": params.layer_dims,
        "weights": _to_lists(params.weights),
        "biases": _to_lists(params.biases),
        "adam": None
        if adam is None
        else {
            "step_count": adam.step_count,
            "lr": adam.lr,
            "beta1": adam.beta1,
            "beta2": adam.beta2,
            "eps": adam.eps,
            "first_moment": _to_lists(adam.first_moment),
            "second_moment": _to_lists(adam.second_moment),
        },
        "metadata": dict(metadata or {}, layer_dims=params.layer_dims),
    }
    Path(path).write_text(json.dumps(doc) + "\n", encoding="utf-8")


def read_checkpoint(path: str | Path, expected_dims: Sequence[int] | None = None):
    """Load ``(params, adam_state_or_None, metadata)``; dimension guard on ``expected_dims``."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"line {exc.lineno}: {exc.msg}") from exc
    if str(doc.get("version")) != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {doc.get('version')!r}")
    params = MlpParams(
        [np.array(w, dtype=np.float64) for w in doc["weights"]],
        [np.array(b, dtype=np.float64) for b in doc["biases"]],
    )
    if params.layer_dims != list(doc["layer_dims"]):
        raise CheckpointError("stored layer_dims disagree with weight shapes")
    if expected_dims is not None:
        exp = list(expected_dims)
        got = params.layer_dims
        if exp[0] != got[0] or exp[-1] != got[-1]:
            raise CheckpointError(
                f"dimension mismatch: checkpoint maps {got[0]}->{got[-1]}, instance needs {exp[0]}->{exp[-1]}"
            )
    adam = None
    if doc.get("adam") is not None:
        ad = doc["adam"]
        adam = AdamState(
            [np.array(m, dtype=np.float64) for m in ad["first_moment"]],
            [np.array(v, dtype=np.float64) for v in ad["second_moment"]],
            int(ad["step_count"]),
            float(ad["lr"]),
            float(ad["beta1"]),
            float(ad["beta2"]),
            float(ad["eps"]),
        )
    return params, adam, doc.get("metadata", {})
