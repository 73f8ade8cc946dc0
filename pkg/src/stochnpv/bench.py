"""Gap metric, experiment orchestration and CSV result files."""
from __future__ import annotations

import csv
import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .agent import DDQN, DQN, NO_TARGET, AgentConfig, evaluate, train
from .baselines.detsolver import DetProblem, solve_det_npv
from .baselines.evpi import ev_pi, run_dyn, solve_rigid
from .instances import OMEGA1, OMEGA2, GenConfig, Instance, generate_instance, read_instance
from .project import schedule_npv

EXP1, EXP2, ABLATION = "exp1", "exp2", "ablation"
RESULT_FIELDS = (
    "instance_id", "family", "n", "n_scenarios", "policy", "enpv", "n_star",
    "gap_pct", "train_episodes", "seed", "wall_time_s", "status",
)
SUMMARY_FIELDS = ("n", "n_scenarios", "policy", "mean_gap_pct", "count")
CURVE_FIELDS = ("instance_id", "seed", "episode", "variant", "reward", "reward_ma100")

# reference mean gap percentages, kept for side-by-side reporting only
REFERENCE_GAPS = {
    EXP1: {(30, 10): {"rigid": 96.22, "dyn": 5.90, "ddqn": 3.57}},
    EXP2: {(10, None): {"rigid": 69.62, "dyn": 36.56, "ddqn": 25.65}},
}


class ZeroBenchmarkError(ZeroDivisionError):
    pass


def compute_gap(n_max: float, n_star: float) -> float:
    if abs(n_star) < 1e-12:
        raise ZeroBenchmarkError("gap undefined for a zero benchmark value")
    return 100.0 * (n_star - n_max) / n_star


@dataclass
class ExperimentConfig:
    experiment: str = EXP1
    instance_paths: list[str] = field(default_factory=list)
    sizes: list[int] = field(default_factory=lambda: [5, 10])
    scenario_counts: list[int] = field(default_factory=lambda: [2])
    instances_per_cell: int = 3
    agent: AgentConfig = field(default_factory=AgentConfig)
    variants: list[str] = field(default_factory=lambda: [DDQN])
    baselines: list[str] = field(default_factory=lambda: ["rigid", "dyn"])
    eval_episodes: int = 1000
    dyn_episodes: int | None = None  # None -> eval_episodes
    dyn_samples: int = 30
    seeds: list[int] = field(default_factory=lambda: [0])
    out_dir: str = "results"
    record_wall_time: bool = False

    @property
    def family(self) -> str:
        return OMEGA2 if self.experiment == EXP2 else OMEGA1

    def validate(self) -> None:
        if self.experiment not in (EXP1, EXP2, ABLATION):
            raise ValueError(f"unknown experiment {self.experiment!r}")
        self.agent.validate()
        bad = [v for v in self.variants if v not in (DDQN, DQN, NO_TARGET)]
        if bad:
            raise ValueError(f"unknown variants {bad}")
        bad = [b for b in self.baselines if b not in ("rigid", "dyn")]
        if bad:
            raise ValueError(f"unknown baselines {bad}")
        if self.eval_episodes < 1 or not self.seeds:
            raise ValueError("eval_episodes must be positive and seeds nonempty")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["agent"] = self.agent.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown config fields {sorted(unknown)}")
        d = dict(d)
        if "agent" in d:
            d["agent"] = AgentConfig.from_dict(d["agent"])
        return cls(**d)


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValueError(f"config line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return ExperimentConfig.from_dict(doc)


def sweep_instances(cfg: ExperimentConfig, root_seed: int) -> list[tuple[str, Instance]]:
    if cfg.instance_paths:
        out = [(Path(p).stem, read_instance(p)) for p in cfg.instance_paths]
    else:
        counts = cfg.scenario_counts if cfg.family == OMEGA1 else [0]
        out = []
        seeds = iter(np.random.SeedSequence(root_seed).generate_state(
            len(cfg.sizes) * len(counts) * cfg.instances_per_cell))
        for n in cfg.sizes:
            for s in counts:
                for k in range(cfg.instances_per_cell):
                    gc = GenConfig(family=cfg.family, n_nondummy=n, n_scenarios=max(s, 1), seed=int(next(seeds)))
                    tag = f"s{s}_" if cfg.family == OMEGA1 else ""
                    out.append((f"{cfg.family}_n{n}_{tag}{k:03d}", generate_instance(gc)))
    want = cfg.family if cfg.experiment != ABLATION else None
    for name, inst in out:
        if want is not None and inst.family != want:
            raise ValueError(f"{cfg.experiment} requires {want} instances; {name} is {inst.family}")
    return out


def sample_eval_durations(instance: Instance, n: int, rng: np.random.Generator) -> np.ndarray:
    net = instance.network
    d = rng.integers(net.d_min, net.d_max + 1, size=(n, net.n_nodes))
    return d


def _perfect_info_values(instance: Instance, durations: np.ndarray) -> np.ndarray:
    net = instance.network
    return np.array([solve_det_npv(DetProblem(net, row, net.cash_for(row)))[1] for row in durations])


@dataclass
class ExperimentResult:
    rows: list[dict]
    summary: list[dict]
    curves: list[dict]


def _row(name, inst, policy, enpv, n_star, episodes, seed, wall, status="ok") -> dict:
    gap = compute_gap(enpv, n_star) if enpv is not None and status == "ok" else None
    return {
        "instance_id": name,
        "family": inst.family,
        "n": inst.network.n_nodes - 2,
        "n_scenarios": len(inst.scenarios) if inst.scenarios else 0,
        "policy": policy,
        "enpv": enpv,
        "n_star": n_star,
        "gap_pct": gap,
        "train_episodes": episodes,
        "seed": seed,
        "wall_time_s": wall,
        "status": status,
    }


def moving_average(x: np.ndarray, window: int = 100) -> np.ndarray:
    c = np.cumsum(np.insert(np.asarray(x, dtype=np.float64), 0, 0.0))
    idx = np.arange(1, len(x) + 1)
    lo = np.maximum(idx - window, 0)
    return (c[idx] - c[lo]) / (idx - lo)


def evaluate_instance(name: str, inst: Instance, cfg: ExperimentConfig, root_seed: int, curves: list) -> list[dict]:
    rows = []
    clock = time.perf_counter
    omega1 = bool(inst.scenarios)
    eval_rng = np.random.default_rng([root_seed, 1])
    durations = None
    if omega1:
        n_star = ev_pi(inst)
        n_star_dyn = n_star
    else:
        durations = sample_eval_durations(inst, cfg.eval_episodes, eval_rng)
        pi = _perfect_info_values(inst, durations)
        n_star = float(pi.mean())
        n_dyn = cfg.dyn_episodes or cfg.eval_episodes
        n_star_dyn = float(pi[:n_dyn].mean())

    def timed(fn):
        t0 = clock()
        val = fn()
        return val, (round(clock() - t0, 3) if cfg.record_wall_time else None)

    baselines = cfg.baselines if cfg.experiment != ABLATION else []
    if "rigid" in baselines:
        try:
            def rigid():
                r = solve_rigid(inst)
                if omega1:
                    return r.value
                return float(np.mean([schedule_npv(r.schedule, inst.network.cash_for(d), inst.network.beta) for d in durations]))

            val, wall = timed(rigid)
            rows.append(_row(name, inst, "rigid", val, n_star, 0, root_seed, wall))
        except Exception as exc:  # noqa: BLE001 - flagged row, run continues
            rows.append(_row(name, inst, "rigid", None, n_star, 0, root_seed, None, f"error: {exc}"))
    if "dyn" in baselines:
        try:
            def dyn():
                if omega1:
                    return sum(s.prob * run_dyn(inst, scenario=k).npv for k, s in enumerate(inst.scenarios))
                rng = np.random.default_rng([root_seed, 2])
                n_dyn = cfg.dyn_episodes or cfg.eval_episodes
                return float(np.mean([run_dyn(inst, durations=d, rng=rng, n_samples=cfg.dyn_samples).npv for d in durations[:n_dyn]]))

            val, wall = timed(dyn)
            rows.append(_row(name, inst, "dyn", val, n_star_dyn, 0, root_seed, wall))
        except Exception as exc:  # noqa: BLE001
            rows.append(_row(name, inst, "dyn", None, n_star_dyn, 0, root_seed, None, f"error: {exc}"))
    variants = [DDQN, DQN, NO_TARGET] if cfg.experiment == ABLATION else cfg.variants
    for seed in cfg.seeds:
        for variant in variants:
            acfg = AgentConfig.from_dict(dict(cfg.agent.to_dict(), variant=variant, seed=seed))
            try:
                t0 = clock()
                params, log = train(inst, acfg)
                res = evaluate(params, inst, cfg.eval_episodes, np.random.default_rng([seed, 3]), durations=durations)
                wall = round(clock() - t0, 3) if cfg.record_wall_time else None
                rows.append(_row(name, inst, variant, res.mean, n_star, acfg.episodes, seed, wall))
                if cfg.experiment == ABLATION:
                    ret = log.returns
                    ma = moving_average(ret)
                    curves.extend(
                        {"instance_id": name, "seed": seed, "episode": e, "variant": variant,
                         "reward": float(ret[e]), "reward_ma100": float(ma[e])}
                        for e in range(len(ret))
                    )
            except Exception as exc:  # noqa: BLE001
                rows.append(_row(name, inst, variant, None, n_star, acfg.episodes, seed, None, f"error: {exc}"))
    return rows


def summarize(rows: list[dict]) -> list[dict]:
    cells: dict = {}
    for r in rows:
        if r["gap_pct"] is None:
            continue
        cells.setdefault((r["n"], r["n_scenarios"], r["policy"]), []).append(r["gap_pct"])
    return [
        {"n": n, "n_scenarios": s, "policy": p, "mean_gap_pct": float(np.mean(g)), "count": len(g)}
        for (n, s, p), g in sorted(cells.items())
    ]


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return v


def write_csv(path: Path, fields, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _cell(r[k]) for k in fields})


def run_experiment(cfg: ExperimentConfig, root_seed: int = 0, write: bool = True) -> ExperimentResult:
    cfg.validate()
    rows: list[dict] = []
    curves: list[dict] = []
    for name, inst in sweep_instances(cfg, root_seed):
        rows.extend(evaluate_instance(name, inst, cfg, root_seed, curves))
    rows.sort(key=lambda r: (r["instance_id"], r["policy"], r["seed"]))
    summary = summarize(rows)
    result = ExperimentResult(rows, summary, curves)
    if write:
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(out / "results.csv", RESULT_FIELDS, rows)
        write_csv(out / "summary.csv", SUMMARY_FIELDS, summary)
        if cfg.experiment == ABLATION:
            write_csv(out / "ablation_curves.csv", CURVE_FIELDS, curves)
        ref = {f"n{k[0]}_s{k[1]}": v for k, v in REFERENCE_GAPS.get(cfg.experiment, {}).items()}
        (out / "reference.json").write_text(json.dumps(ref, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return result
