"""Acceptance criteria; each test records a one-line result printed in the terminal summary."""
import subprocess
import sys
import time

import numpy as np
import pytest
from scipy import stats

from conftest import random_small_omega1, record
from stochnpv.agent import DDQN, DQN, NO_TARGET, AgentConfig, Batch, compute_targets, evaluate, train
from stochnpv.baselines.detsolver import DetProblem, InfeasibleProblemError, brute_force_det_npv, solve_det_npv
from stochnpv.baselines.evpi import ev_pi, solve_rigid
from stochnpv.baselines.mdp import exact_mdp_enpv
from stochnpv.bench import EXP2, ABLATION, ExperimentConfig, compute_gap, run_experiment
from stochnpv.env import SchedulingEnv
from stochnpv.instances import (
    OMEGA2,
    ArcStats,
    GenConfig,
    estimate_deadline,
    example1_instance,
    generate_instance,
    uniform_duration_sampler,
)
from stochnpv.mlp import grad_check, mlp_init
from stochnpv.project import example1, schedule_npv

from test_baselines import random_det_problem


def test_criterion_1_example1_oracles():
    t0 = time.perf_counter()
    inst = example1_instance()
    net = inst.network
    s1, s2 = inst.scenarios
    v2 = solve_det_npv(DetProblem(net, s2.durations, s2.cash_flows))[1]
    v1 = solve_det_npv(DetProblem(net, s1.durations, s1.cash_flows))[1]
    b1 = brute_force_det_npv(DetProblem(net, s1.durations, s1.cash_flows), max_deadline=net.deadline)[1]
    evpi = ev_pi(inst)
    gap = compute_gap(129.77, 132.72)
    elapsed = time.perf_counter() - t0
    record(1, f"sc2={v2:.4f} sc1={v1:.4f} brute={b1:.4f} ev_pi={evpi:.4f} gap={gap:.4f} time={elapsed:.3f}s")
    assert abs(v2 - 44.18) <= 0.01
    assert abs(evpi - 132.72) <= 0.02
    assert v1 == b1 and abs(v1 - 221.27) <= 0.01
    assert abs(gap - 2.22) <= 0.01
    assert elapsed < 1.0


def test_criterion_2_oracle_equivalence():
    t0 = time.perf_counter()
    rng = np.random.default_rng(20240601)
    worst, checked = 0.0, 0
    while checked < 200:
        p = random_det_problem(rng, max_acts=4, max_deadline=15)
        try:
            bv = brute_force_det_npv(p)[1]
        except InfeasibleProblemError:
            continue
        worst = max(worst, abs(solve_det_npv(p)[1] - bv))
        checked += 1
    elapsed = time.perf_counter() - t0
    record(2, f"200 instances, max |diff|={worst:.2e}, time={elapsed:.1f}s")
    assert worst <= 1e-9
    assert elapsed < 120


def test_criterion_3_bound_sandwich():
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    violations = 0
    for _ in range(50):
        inst = random_small_omega1(rng, max_acts=3, max_support=4, n_scen=int(rng.integers(2, 4)))
        lo = solve_rigid(inst).value
        mid = exact_mdp_enpv(inst).value
        hi = ev_pi(inst)
        violations += not (lo <= mid + 1e-6 and mid <= hi + 1e-6)
    elapsed = time.perf_counter() - t0
    record(3, f"50 instances, violations={violations}, time={elapsed:.1f}s")
    assert violations == 0
    assert elapsed < 600


def test_criterion_4_return_identity():
    worst = 0.0
    for seed in range(10):
        inst = generate_instance(GenConfig(n_nondummy=5, n_scenarios=3, seed=seed, mc_replications=500))
        env = SchedulingEnv(inst)
        rng = np.random.default_rng(seed)
        beta = inst.network.beta
        for _ in range(1000):
            s = env.reset(rng)
            cash_return = 0.0
            while True:
                feas = env.feasible_actions(s)
                out = env.step(s, feas[int(rng.integers(len(feas)))], rng)
                cash_return += out.raw_cash * beta**out.decision_time
                s = out.next_state
                if out.done:
                    break
            started = s.start_times >= 0
            npv = schedule_npv(s.start_times[started], s.hidden_cash[started], beta)
            worst = max(worst, abs(cash_return - npv))
    record(4, f"10000 rollouts, max |return - npv|={worst:.2e}")
    assert worst < 1e-9


def test_criterion_5_gradient_check():
    t0 = time.perf_counter()
    worst = 0.0
    for seed in range(50):
        rng = np.random.default_rng(seed)
        n_in, n_out = int(rng.integers(2, 8)), int(rng.integers(2, 6))
        dims = [n_in, int(rng.integers(3, 9)), int(rng.integers(3, 9)), n_out]
        params = mlp_init(dims, rng)
        for b in params.biases:
            b[:] = rng.normal(0, 0.1, size=b.shape)
        batch = int(rng.integers(1, 8))
        x = rng.normal(size=(batch, n_in))
        worst = max(worst, grad_check(params, x, rng.integers(0, n_out, batch), rng.normal(size=batch)))
    elapsed = time.perf_counter() - t0
    record(5, f"50 networks, max rel err={worst:.2e}, time={elapsed:.1f}s")
    assert worst < 1e-4
    assert elapsed < 60


def test_criterion_6_ddqn_le_dqn():
    rng = np.random.default_rng(6)
    worst = -np.inf
    total = 0
    for _ in range(100):
        online = mlp_init([6, 16, 5], rng)
        target = mlp_init([6, 16, 5], rng)
        m = 100
        b = Batch(rng.normal(size=(m, 6)), rng.integers(0, 5, m), rng.normal(0, 100, m), rng.integers(0, 2, m),
                  rng.normal(size=(m, 6)), rng.random((m, 5)) < 0.5, rng.random(m) < 0.1)
        b.next_masks[np.arange(m), rng.integers(0, 5, m)] = True
        diff = compute_targets(b, online, target, DDQN) - compute_targets(b, online, target, DQN)
        worst = max(worst, float(diff.max()))
        total += m
    record(6, f"{total} transitions, max(y_ddqn - y_dqn)={worst:.2e}")
    assert worst <= 1e-12


@pytest.mark.slow
def test_criterion_7_learning_example1():
    inst = example1_instance()
    target = max(0.95 * exact_mdp_enpv(inst).value, solve_rigid(inst).value + 1)
    values, minutes = [], []
    for seed in range(5):
        t0 = time.perf_counter()
        params, _ = train(inst, AgentConfig(seed=seed))
        values.append(evaluate(params, inst).mean)
        minutes.append((time.perf_counter() - t0) / 60)
    med = float(np.median(values))
    record(7, f"median ENPV={med:.2f} target={target:.2f} values={np.round(values, 2).tolist()} max minutes/seed={max(minutes):.1f}")
    assert med >= target
    assert max(minutes) < 10


def _trend_instances(tmp_path, count=3):
    paths = []
    from stochnpv.instances import write_instance

    for k in range(count):
        inst = generate_instance(GenConfig(family=OMEGA2, n_nondummy=10, seed=1000 + k))
        p = tmp_path / f"omega2_n10_{k}.json"
        write_instance(inst, p)
        paths.append(str(p))
    return paths


@pytest.mark.slow
def test_criterion_8_trend_omega2(tmp_path):
    t0 = time.perf_counter()
    cfg = ExperimentConfig(experiment=EXP2, instance_paths=_trend_instances(tmp_path), agent=AgentConfig(),
                           eval_episodes=1000, dyn_episodes=100, out_dir=str(tmp_path / "out"))
    res = run_experiment(cfg)
    gaps = {row["policy"]: row["mean_gap_pct"] for row in res.summary}
    hours = (time.perf_counter() - t0) / 3600
    record(8, f"gaps ddqn={gaps.get('ddqn')} dyn={gaps.get('dyn')} rigid={gaps.get('rigid')} hours={hours:.2f}")
    assert gaps["ddqn"] < gaps["dyn"] < gaps["rigid"]
    assert hours <= 4


@pytest.mark.slow
def test_criterion_9_ablation(tmp_path):
    cfg = ExperimentConfig(experiment=ABLATION, instance_paths=_trend_instances(tmp_path, 1), agent=AgentConfig(),
                           eval_episodes=100, seeds=[0, 1, 2, 3, 4], out_dir=str(tmp_path / "out"))
    res = run_experiment(cfg)
    curves = {}
    for c in res.curves:
        curves.setdefault((c["seed"], c["variant"]), []).append(c["reward"])
    tail_std = {v: np.mean([np.std(curves[(s, v)][int(0.75 * len(curves[(s, v)])):]) for s in cfg.seeds]) for v in (DDQN, NO_TARGET)}
    wins = sum(np.mean(curves[(s, DDQN)][-100:]) >= np.mean(curves[(s, DQN)][-100:]) for s in cfg.seeds)
    record(9, f"tail std no-target={tail_std[NO_TARGET]:.2f} ddqn={tail_std[DDQN]:.2f}; ddqn>=dqn in {wins}/5 seeds")
    assert tail_std[NO_TARGET] > tail_std[DDQN]
    assert wins >= 3


def test_criterion_10_generator_statistics():
    net, _ = example1()
    d = uniform_duration_sampler(net, 1, 10)(np.random.default_rng(10), 100_000)[:, 1]
    pval = stats.chisquare(np.bincount(d, minlength=11)[1:]).pvalue
    st = ArcStats()
    for seed in range(1000):
        generate_instance(GenConfig(n_nondummy=6, seed=seed, mc_replications=10), stats=st)
    freq = st.direct_arcs / st.eligible_pairs

    def two_point(rng, size):
        out = np.zeros((size, 5), dtype=np.int64)
        out[:, 1], out[:, 2] = 1, 5
        out[:, 3] = np.where(rng.random(size) < 0.5, 1, 10)
        return out

    dl = estimate_deadline(net, two_point, GenConfig(deadline_quantile=0.9))
    record(10, f"chi2 p={pval:.3f} arc freq={freq:.4f} deadline={dl}")
    assert pval > 0.001
    assert abs(freq - 0.2) <= 0.02
    assert dl == 11


def _cli(*args):
    return subprocess.run([sys.executable, "-m", "stochnpv", *args], capture_output=True, text=True)


def test_criterion_11_determinism(tmp_path):
    from stochnpv.instances import write_instance

    ex = tmp_path / "example1.json"
    write_instance(example1_instance(), ex)
    blobs = []
    for run in ("a", "b"):
        out = tmp_path / run
        r1 = _cli("gen", "--family", "omega1", "--n", "5", "--scenarios", "2", "--count", "3", "--seed", "7", "--out", str(out / "gen"))
        r2 = _cli("train", "--instance", str(ex), "--episodes", "40", "--seed", "3", "--out", str(out / "train"))
        r3 = _cli("eval", "--instance", str(ex), "--checkpoint", str(out / "train" / "checkpoint.json"),
                  "--seed", "3", "--out", str(out / "eval.json"))
        assert r1.returncode == r2.returncode == r3.returncode == 0, (r1.stderr, r2.stderr, r3.stderr)
        files = sorted(p for p in out.rglob("*") if p.is_file())
        blobs.append({p.relative_to(out): p.read_bytes() for p in files})
    same = blobs[0] == blobs[1]
    record(11, f"{len(blobs[0])} files byte-identical={same}")
    assert same
