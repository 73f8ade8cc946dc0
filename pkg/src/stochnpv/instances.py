"""Random instance generation, Monte-Carlo deadlines and the JSON instance format."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .project import (
    Activity,
    ProjectNetwork,
    Scenario,
    earliest_starts,
    example1,
    validate_network,
)

FORMAT_VERSION = "1"
OMEGA1 = "omega1"
OMEGA2 = "omega2"

DurationSampler = Callable[[np.random.Generator, int], np.ndarray]


class InstanceFormatError(ValueError):
    pass


class VersionMismatchError(InstanceFormatError):
    pass


@dataclass(frozen=True)
class GenConfig:
    family: str = OMEGA1
    n_nondummy: int = 5
    n_scenarios: int = 2
    arc_prob: float = 0.2
    duration_range: tuple[int, int] = (1, 10)
    fixed_cost_range: tuple[float, float] = (-10.0, -1.0)
    var_cost_range: tuple[float, float] = (-10.0, -1.0)
    revenue_range: tuple[float, float] = (0.0, 100.0)
    mc_replications: int = 10000
    deadline_quantile: float = 0.90
    beta: float = 0.9
    seed: int = 0

    def validate(self) -> None:
        if self.family not in (OMEGA1, OMEGA2):
            raise ValueError(f"unknown family {self.family!r}")
        if not 0.0 <= self.arc_prob <= 1.0:
            raise ValueError("arc_prob must lie in [0,1]")
        if self.n_nondummy < 1:
            raise ValueError("n_nondummy must be >= 1")
        if self.family == OMEGA1 and self.n_scenarios < 1:
            raise ValueError("omega1 requires n_scenarios >= 1")
        lo, hi = self.duration_range
        if not 0 <= lo <= hi:
            raise ValueError("duration_range must be a nonempty nonnegative interval")
        for name in ("fixed_cost_range", "var_cost_range", "revenue_range"):
            a, b = getattr(self, name)
            if a > b:
                raise ValueError(f"{name} is empty")
        if not 0.0 < self.deadline_quantile <= 1.0:
            raise ValueError("deadline_quantile must lie in (0,1]")
        if self.mc_replications < 1:
            raise ValueError("mc_replications must be >= 1")


@dataclass(frozen=True)
class Instance:
    network: ProjectNetwork
    scenarios: tuple[Scenario, ...] | None
    family: str
    provenance: dict = field(default_factory=dict, compare=True, hash=False)

    @property
    def n_nodes(self) -> int:
        return self.network.n_nodes

    def scenario_probs(self) -> np.ndarray:
        return np.array([s.prob for s in self.scenarios or ()])


@dataclass
class ArcStats:
    eligible_pairs: int = 0
    direct_arcs: int = 0


def _random_dag(n: int, p: float, rng: np.random.Generator, stats: ArcStats | None = None):
    """Arcs over non-dummies 1..n added pairwise with probability ``p`` plus implied transitive arcs."""
    label = rng.permutation(n) + 1
    reach = np.zeros((n + 2, n + 2), dtype=bool)
    arcs: set[tuple[int, int]] = set()
    for a in range(n):
        for b in range(a + 1, n):
            i, j = int(label[a]), int(label[b])
            if reach[j, i] or reach[i, j]:
                continue
            if stats is not None:
                stats.eligible_pairs += 1
            if rng.random() < p:
                if stats is not None:
                    stats.direct_arcs += 1
                tails = np.flatnonzero(reach[:, i]).tolist() + [i]
                heads = np.flatnonzero(reach[j, :]).tolist() + [j]
                for u in tails:
                    for w in heads:
                        reach[u, w] = True
                        arcs.add((u, w))
    has_pred = {j for _, j in arcs}
    has_succ = {i for i, _ in arcs}
    for j in range(1, n + 1):
        if j not in has_pred:
            arcs.add((0, j))
        if j not in has_succ:
            arcs.add((j, n + 1))
    return arcs


def uniform_duration_sampler(net: ProjectNetwork, lo: int, hi: int) -> DurationSampler:
    """Independent integer uniform durations on ``lo..hi`` for non-dummies; dummies 0."""
    mask = np.zeros(net.n_nodes, dtype=bool)
    mask[1:-1] = True

    def sample(rng: np.random.Generator, size: int) -> np.ndarray:
        d = rng.integers(lo, hi + 1, size=(size, net.n_nodes))
        return np.where(mask, d, 0)

    return sample


def makespans(net: ProjectNetwork, durations: np.ndarray) -> np.ndarray:
    """Earliest-start makespans for a batch of duration vectors (rows)."""
    es = np.zeros_like(durations)
    for j in net.topological_order:
        for i in net.predecessors[j]:
            np.maximum(es[:, j], es[:, i] + durations[:, i], out=es[:, j])
    return es[:, net.end]


def estimate_deadline(
    net: ProjectNetwork,
    duration_sampler: DurationSampler,
    cfg: GenConfig,
    rng: np.random.Generator | None = None,
) -> int:
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    d = duration_sampler(rng, cfg.mc_replications)
    spans = makespans(net, np.asarray(d, dtype=np.int64))
    q = np.quantile(spans, cfg.deadline_quantile, method="inverted_cdf")
    return int(math.ceil(q))


def _json_ready(obj):
    return json.loads(json.dumps(obj))


def generate_instance(cfg: GenConfig, stats: ArcStats | None = None, max_tries: int = 100) -> Instance:
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    n = cfg.n_nondummy
    lo, hi = cfg.duration_range
    for _ in range(max_tries):
        arcs = _random_dag(n, cfg.arc_prob, rng, stats)
        fixed = np.round(rng.uniform(*cfg.fixed_cost_range, size=n), 2)
        var = np.round(rng.uniform(*cfg.var_cost_range, size=n), 2)
        rev = np.round(rng.uniform(*cfg.revenue_range, size=n), 2)
        scenarios = None
        if cfg.family == OMEGA1:
            draws = rng.integers(lo, hi + 1, size=(cfg.n_scenarios, n))
            supports = [(int(draws[:, k].min()), int(draws[:, k].max())) for k in range(n)]
        else:
            supports = [(lo, hi)] * n
        acts = [Activity(0)]
        for k in range(n):
            acts.append(
                Activity(
                    k + 1,
                    fixed_cost=float(fixed[k]),
                    var_cost=float(var[k]),
                    revenue=float(rev[k]),
                    d_min=supports[k][0],
                    d_max=supports[k][1],
                )
            )
        acts.append(Activity(n + 1))
        draft = ProjectNetwork(tuple(acts), tuple(arcs), cfg.beta, deadline=0)
        if cfg.family == OMEGA1:
            prob = 1.0 / cfg.n_scenarios
            scenarios = []
            for row in draws:
                d = [0, *(int(x) for x in row), 0]
                scenarios.append(Scenario(prob, d, [a.cash(x) for a, x in zip(acts, d)]))
            scenarios = tuple(scenarios)
        sampler = uniform_duration_sampler(draft, lo, hi)
        mc = estimate_deadline(draft, sampler, cfg, rng)
        worst = int(earliest_starts(draft, draft.d_max)[-1])
        net = ProjectNetwork(draft.activities, draft.arcs, cfg.beta, max(mc, worst))
        if validate_network(net):
            prov = _json_ready({"seed": cfg.seed, "config": asdict(cfg)})
            return Instance(net, scenarios, cfg.family, prov)
    raise RuntimeError(f"instance generation failed after {max_tries} attempts")


def example1_instance() -> Instance:
    net, scen = example1()
    return Instance(net, tuple(scen), OMEGA1, {"seed": None, "config": {"name": "example1"}})


# --- codec -----------------------------------------------------------------


def instance_to_dict(inst: Instance) -> dict:
    net = inst.network
    doc = {
        "version": FORMAT_VERSION,
        "family": inst.family,
        "beta": net.beta,
        "deadline": net.deadline,
        "activities": [
            {
                "id": a.id,
                "fixed_cost": a.fixed_cost,
                "var_cost": a.var_cost,
                "revenue": a.revenue,
                "d_min": a.d_min,
                "d_max": a.d_max,
            }
            for a in sorted(net.activities, key=lambda a: a.id)
        ],
        "arcs": [[i, j] for i, j in sorted(net.arcs)],
    }
    if inst.scenarios is not None:
        doc["scenarios"] = [
            {"prob": s.prob, "durations": list(s.durations), "cash_flows": list(s.cash_flows)}
            for s in inst.scenarios
        ]
    doc["provenance"] = inst.provenance
    return doc


def dumps_instance(inst: Instance) -> str:
    # float repr is the shortest string that round-trips exactly
    return json.dumps(instance_to_dict(inst), indent=1) + "\n"


def write_instance(inst: Instance, path: str | Path) -> None:
    Path(path).write_text(dumps_instance(inst), encoding="utf-8")


def _req(obj: dict, key: str, where: str):
    if not isinstance(obj, dict) or key not in obj:
        raise InstanceFormatError(f"{where}: missing field {key!r}")
    return obj[key]


def instance_from_dict(doc: dict) -> Instance:
    version = _req(doc, "version", "document")
    if str(version) != FORMAT_VERSION:
        raise VersionMismatchError(f"unsupported instance format version {version!r}")
    family = _req(doc, "family", "document")
    if family not in (OMEGA1, OMEGA2):
        raise InstanceFormatError(f"document: field 'family' has unknown value {family!r}")
    beta = float(_req(doc, "beta", "document"))
    deadline = int(_req(doc, "deadline", "document"))
    acts = []
    for k, a in enumerate(_req(doc, "activities", "document")):
        where = f"activities[{k}]"
        acts.append(
            Activity(
                int(_req(a, "id", where)),
                fixed_cost=float(_req(a, "fixed_cost", where)),
                var_cost=float(_req(a, "var_cost", where)),
                revenue=float(_req(a, "revenue", where)),
                d_min=int(_req(a, "d_min", where)),
                d_max=int(_req(a, "d_max", where)),
            )
        )
    acts.sort(key=lambda a: a.id)
    arcs = []
    for k, arc in enumerate(_req(doc, "arcs", "document")):
        if not isinstance(arc, list) or len(arc) != 2:
            raise InstanceFormatError(f"arcs[{k}]: expected a pair [i, j]")
        arcs.append((int(arc[0]), int(arc[1])))
    net = ProjectNetwork(tuple(acts), tuple(arcs), beta, deadline)
    scenarios = None
    if "scenarios" in doc and doc["scenarios"] is not None:
        scenarios = []
        for k, s in enumerate(doc["scenarios"]):
            where = f"scenarios[{k}]"
            durations = _req(s, "durations", where)
            cash = _req(s, "cash_flows", where)
            if len(durations) != len(acts) or len(cash) != len(acts):
                raise InstanceFormatError(f"{where}: vectors must have {len(acts)} entries")
            scenarios.append(Scenario(float(_req(s, "prob", where)), durations, cash))
        total = math.fsum(s.prob for s in scenarios)
        if abs(total - 1.0) > 1e-12:
            raise InstanceFormatError(f"probabilities must sum to 1 (got {total!r})")
        scenarios = tuple(scenarios)
    if family == OMEGA1 and not scenarios:
        raise InstanceFormatError("document: omega1 instance requires 'scenarios'")
    report = validate_network(net)
    if not report:
        raise InstanceFormatError("invalid network: " + "; ".join(report.violations))
    return Instance(net, scenarios, family, doc.get("provenance", {}))


def loads_instance(text: str) -> Instance:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceFormatError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return instance_from_dict(doc)


def read_instance(path: str | Path) -> Instance:
    return loads_instance(Path(path).read_text(encoding="utf-8"))
