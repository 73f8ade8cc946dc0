"""Command-line entry point: instance generation, oracles, baselines, training, experiments."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .agent import VARIANTS, AgentConfig, check_dimensions, env_config_hash, evaluate, train
from .baselines.detsolver import DetProblem, solve_det_npv
from .baselines.evpi import run_dyn, solve_rigid
from .baselines.mdp import StateSpaceLimitError, exact_mdp_enpv
from .bench import ABLATION, EXP1, EXP2, ExperimentConfig, compute_gap, load_config, run_experiment, sample_eval_durations
from .env import EnvConfig, SchedulingEnv
from .instances import OMEGA1, OMEGA2, GenConfig, InstanceFormatError, generate_instance, read_instance, write_instance
from .mlp import CheckpointError, q_network_dims, read_checkpoint, write_checkpoint


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=0, help="root seed for all randomness")
    p.add_argument("--out", default=None, help="output file or directory")
    p.add_argument("--config", default=None, help="experiment config file (JSON)")
    p.add_argument("--eval-episodes", type=int, default=None)
    return p


def build_parser() -> Parser:
    common = _common()
    parser = Parser(prog="stochnpv", description="Stochastic project NPV scheduling with DDQN")
    sub = parser.add_subparsers(dest="command", parser_class=Parser)
    sub.required = True

    g = sub.add_parser("gen", parents=[common], help="generate random instances")
    g.add_argument("--family", choices=[OMEGA1, OMEGA2], default=OMEGA1)
    g.add_argument("--n", type=int, default=5, help="non-dummy activities")
    g.add_argument("--scenarios", type=int, default=2)
    g.add_argument("--count", type=int, default=1)
    g.add_argument("--arc-prob", type=float, default=0.2)
    g.add_argument("--mc", type=int, default=10000, help="Monte-Carlo replications for the deadline")

    o = sub.add_parser("oracle", parents=[common], help="print perfect-information and exact values")
    o.add_argument("--instance", required=True)
    o.add_argument("--max-states", type=int, default=1_000_000)

    b = sub.add_parser("baseline", parents=[common], help="run the rigid or DYN policy")
    b.add_argument("--instance", required=True)
    b.add_argument("--policy", choices=["rigid", "dyn"], required=True)

    t = sub.add_parser("train", parents=[common], help="train a Q-network agent")
    t.add_argument("--instance", required=True)
    t.add_argument("--variant", choices=VARIANTS, default="ddqn")
    t.add_argument("--episodes", type=int, default=None)
    t.add_argument("--reward-mode", choices=["semi-mdp", "literal"], default="semi-mdp")
    t.add_argument("--record-wall-time", action="store_true")

    e = sub.add_parser("eval", parents=[common], help="greedy evaluation of a checkpoint")
    e.add_argument("--instance", required=True)
    e.add_argument("--checkpoint", required=True)

    for name in ("exp1", "exp2", "ablate"):
        x = sub.add_parser(name, parents=[common], help=f"run {name}")
        x.add_argument("--instances", nargs="*", default=None)
        x.add_argument("--sizes", type=int, nargs="*", default=None)
        x.add_argument("--scenario-counts", type=int, nargs="*", default=None)
        x.add_argument("--per-cell", type=int, default=None)
        x.add_argument("--episodes", type=int, default=None)
        x.add_argument("--seeds", type=int, nargs="*", default=None)
        x.add_argument("--record-wall-time", action="store_true")
    return parser


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def cmd_gen(a) -> int:
    out = Path(a.out or "instances_out")
    out.mkdir(parents=True, exist_ok=True)
    seeds = np.random.SeedSequence(a.seed).generate_state(a.count)
    for k, s in enumerate(seeds):
        cfg = GenConfig(family=a.family, n_nondummy=a.n, n_scenarios=a.scenarios, arc_prob=a.arc_prob,
                        mc_replications=a.mc, seed=int(s))
        inst = generate_instance(cfg)
        tag = f"_s{a.scenarios}" if a.family == OMEGA1 else ""
        path = out / f"{a.family}_n{a.n}{tag}_{k:03d}.json"
        write_instance(inst, path)
        print(path)
    return 0


def cmd_oracle(a) -> int:
    inst = read_instance(a.instance)
    net = inst.network
    if inst.scenarios:
        total = 0.0
        for k, s in enumerate(inst.scenarios):
            sched, v = solve_det_npv(DetProblem(net, s.durations, s.cash_flows))
            total += s.prob * v
            print(f"scenario {k} prob {s.prob:g} optimum {_fmt(v)} schedule {list(sched.start_times)}")
        print(f"ev_pi {_fmt(total)}")
        rigid = solve_rigid(inst)
        print(f"rigid {_fmt(rigid.value)} schedule {list(rigid.schedule.start_times)}")
        try:
            mdp = exact_mdp_enpv(inst, max_states=a.max_states)
            print(f"exact_mdp {_fmt(mdp.value)} states {mdp.n_states}")
        except StateSpaceLimitError as exc:
            print(f"exact_mdp skipped: {exc}")
    else:
        n = a.eval_episodes or 1000
        d = sample_eval_durations(inst, n, np.random.default_rng(a.seed))
        vals = [solve_det_npv(DetProblem(net, row, net.cash_for(row)))[1] for row in d]
        print(f"n_star {_fmt(float(np.mean(vals)))} episodes {n}")
        rigid = solve_rigid(inst)
        print(f"rigid {_fmt(rigid.value)} schedule {list(rigid.schedule.start_times)}")
    return 0


def cmd_baseline(a) -> int:
    inst = read_instance(a.instance)
    if a.policy == "rigid":
        r = solve_rigid(inst)
        print(f"enpv {_fmt(r.value)} schedule {list(r.schedule.start_times)}")
        return 0
    if inst.scenarios:
        total = 0.0
        for k, s in enumerate(inst.scenarios):
            r = run_dyn(inst, scenario=k)
            total += s.prob * r.npv
            print(f"scenario {k} npv {_fmt(r.npv)} schedule {list(r.schedule.start_times)}")
        print(f"enpv {_fmt(total)}")
    else:
        n = a.eval_episodes or 100
        rng = np.random.default_rng(a.seed)
        vals = [run_dyn(inst, rng=rng).npv for _ in range(n)]
        print(f"enpv {_fmt(float(np.mean(vals)))} episodes {n}")
    return 0


def cmd_train(a) -> int:
    inst = read_instance(a.instance)
    cfg = AgentConfig(variant=a.variant, reward_mode=a.reward_mode, seed=a.seed)
    if a.episodes is not None:
        cfg = AgentConfig.from_dict(dict(cfg.to_dict(), episodes=a.episodes))
    env_cfg = EnvConfig(reward_mode=cfg.reward_mode)
    params, log = train(inst, cfg, env_config=env_cfg, record_wall_time=a.record_wall_time)
    out = Path(a.out or "train_out")
    out.mkdir(parents=True, exist_ok=True)
    meta = {
        "episodes": cfg.episodes,
        "gradient_steps": log.gradient_steps,
        "env_config_hash": env_config_hash(env_cfg),
        "env_config": env_cfg.as_dict(),
        "agent_config": cfg.to_dict(),
        "instance": str(a.instance),
    }
    write_checkpoint(out / "checkpoint.json", params, None, meta)
    log.write_csv(out / "train_log.csv")
    print(out / "checkpoint.json")
    print(out / "train_log.csv")
    return 0


def cmd_eval(a) -> int:
    inst = read_instance(a.instance)
    params, _, meta = read_checkpoint(a.checkpoint, q_network_dims(inst.n_nodes))
    env_cfg = EnvConfig(**meta["env_config"]) if "env_config" in meta else EnvConfig()
    check_dimensions(params, SchedulingEnv(inst, env_cfg))
    n = a.eval_episodes or 1000
    res = evaluate(params, inst, n, np.random.default_rng(a.seed), env_cfg)
    doc = {"enpv": res.mean, "std_err": res.std, "values": res.values, "weights": res.weights, "failures": res.failures}
    if inst.scenarios:
        from .baselines.evpi import ev_pi

        star = ev_pi(inst)
        doc["n_star"] = star
        doc["gap_pct"] = compute_gap(res.mean, star)
    text = json.dumps(doc, indent=1) + "\n"
    if a.out:
        Path(a.out).parent.mkdir(parents=True, exist_ok=True)
        Path(a.out).write_text(text, encoding="utf-8")
    print(f"enpv {_fmt(res.mean)} std_err {res.std:.4f}" + (f" gap_pct {doc['gap_pct']:.2f}" if "gap_pct" in doc else ""))
    return 0


def cmd_experiment(a, experiment: str) -> int:
    cfg = load_config(a.config) if a.config else ExperimentConfig()
    cfg.experiment = experiment
    agent = cfg.agent.to_dict()
    if a.episodes is not None:
        agent["episodes"] = a.episodes
    cfg.agent = AgentConfig.from_dict(agent)
    if a.instances is not None:
        cfg.instance_paths = list(a.instances)
    if a.sizes:
        cfg.sizes = list(a.sizes)
    if a.scenario_counts:
        cfg.scenario_counts = list(a.scenario_counts)
    if a.per_cell is not None:
        cfg.instances_per_cell = a.per_cell
    if a.seeds:
        cfg.seeds = list(a.seeds)
    if a.eval_episodes is not None:
        cfg.eval_episodes = a.eval_episodes
    if a.out:
        cfg.out_dir = a.out
    cfg.record_wall_time = cfg.record_wall_time or a.record_wall_time
    res = run_experiment(cfg, root_seed=a.seed)
    for row in res.summary:
        print(f"n={row['n']} scenarios={row['n_scenarios']} {row['policy']}: gap {row['mean_gap_pct']:.2f}% ({row['count']})")
    print(Path(cfg.out_dir) / "results.csv")
    return 0


VALIDATION_ERRORS = (UsageError, InstanceFormatError, CheckpointError, ValueError, FileNotFoundError)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        a = parser.parse_args(argv)
        if a.eval_episodes is not None and a.eval_episodes < 1:
            parser.error("--eval-episodes must be positive")
        handlers = {
            "gen": cmd_gen,
            "oracle": cmd_oracle,
            "baseline": cmd_baseline,
            "train": cmd_train,
            "eval": cmd_eval,
            "exp1": lambda ns: cmd_experiment(ns, EXP1),
            "exp2": lambda ns: cmd_experiment(ns, EXP2),
            "ablate": lambda ns: cmd_experiment(ns, ABLATION),
        }
        return handlers[a.command](a)
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
