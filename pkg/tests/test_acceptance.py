"""Acceptance checks, one test per criterion; each prints a PASS/FAIL line.

The benchmark criteria (6 to 9) run at full scale and take minutes; they are
marked ``slow`` so ``pytest -m "not slow"`` skips them.
"""
import math
import time

import numpy as np
import pytest

from lsb.cli import main
from lsb.envs import Pinball, load_pinball_layout, make_env
from lsb.envs.pinball import reflect
from lsb.harness import bench_configs, fine_q_reference, pooled_se, run_experiment
from lsb.learners import ActorCriticState, CriticFeatures, actor_critic_step, compatible_features, td_error
from lsb.mdp import default_horizon, substream
from lsb.oracle import (ExactLearner, evaluate_flat_policy_exact, evaluate_skills_smdp, flat_policy, make_learner,
                        random_instance, random_sigma, sigma_from_skill_set, skill_set_value, suite_instance,
                        verify_lemma1, verify_lemma2)
from lsb.policy_eval import IndexFeatures
from lsb.skills import PolynomialFeatures, Skill, SkillSet, TabularFeatures, execute_skill, softmax


def report(capsys, n, ok, detail):
    with capsys.disabled():
        print(f"\ncriterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


# ---------------------------------------------------------------- 1 to 3

def test_criterion_01_theorem1_bound(capsys):
    t0 = time.perf_counter()
    code = main(["oracle-verify", "--suite", "theorem1", "--instances", "100", "--seed", "0", "--epsilon", "0.1"])
    elapsed = time.perf_counter() - t0
    summary = capsys.readouterr().out.strip().splitlines()[-1]
    ok = code == 0 and "holds=true 100/100" in summary and elapsed < 120
    report(capsys, 1, ok, f"{summary.split(' time=')[0]} in {elapsed:.1f}s (limit 120s)")


def test_criterion_02_lemma2_contraction(capsys):
    worst_exact = worst_sub = -math.inf
    for k in range(100):
        inst, rng = suite_instance(0, k)
        rep = verify_lemma2(inst, None, ExactLearner(), 10)
        worst_exact = max(worst_exact, max(b - 0.9 * a for a, b in zip(rep.gaps, rep.gaps[1:])))
        sub = verify_lemma2(inst, None, make_learner(("softmax", "mixture", "noisy")[k % 3]), 10, rng)
        worst_sub = max(worst_sub, max(sub.margins))
    ok = worst_exact <= 1e-9 and worst_sub <= 1e-9
    report(capsys, 2, ok, f"exact max(gap'-0.9 gap)={worst_exact:.2e}, suboptimal max margin={worst_sub:.2e}")


def test_criterion_03_lemma1_single_updates(capsys):
    violations = 0
    for k in range(100):
        inst, rng = suite_instance(1, k)
        learner = make_learner(("exact", "softmax", "mixture", "noisy")[k % 4])
        rep = verify_lemma1(inst, None, random_sigma(inst, rng), int(rng.integers(inst.m)), learner, rng)
        violations += not rep.holds
    report(capsys, 3, violations == 0, f"{violations} violations over 100 updates")


# --------------------------------------------------------------------- 4

def hierarchical_return(env, partition, skill_set, s, horizon, rng):
    total, disc, t = 0.0, 1.0, 0
    while t < horizon:
        res = execute_skill(env, partition, skill_set[partition.class_of(s)], s, horizon - t, rng)
        total += disc * res.discounted_reward
        disc *= env.gamma ** res.duration
        t += res.duration
        s = res.exit_state
        if res.terminated_episode:
            break
    return total


def test_criterion_04_hierarchical_flat_equivalence(capsys):
    worst_exact, worst_z = 0.0, 0.0
    for k in range(50):
        rng = substream(40, k)
        inst = random_instance(rng, int(rng.integers(4, 13)), int(rng.integers(1, 4)), gamma=0.9)
        feats = TabularFeatures(inst.n_states, inst.n_actions)
        ss = SkillSet(tuple(Skill(rng.normal(size=feats.dim), i, feats) for i in range(inst.m)))
        V_flat = skill_set_value(inst, ss)
        V_skill = evaluate_skills_smdp(inst, sigma_from_skill_set(inst, ss))
        assert np.allclose(V_flat, evaluate_flat_policy_exact(inst, flat_policy(inst, sigma_from_skill_set(inst, ss))))
        worst_exact = max(worst_exact, float(np.max(np.abs(V_flat - V_skill))))
        env, part = inst.env(), inst.partition()
        H = default_horizon(inst.gamma)
        returns = np.array([hierarchical_return(env, part, ss, 0, H, substream(41, k, j)) for j in range(2000)])
        se = returns.std(ddof=1) / math.sqrt(len(returns))
        worst_z = max(worst_z, abs(returns.mean() - V_flat[0]) / se)
    ok = worst_exact <= 1e-8 and worst_z <= 3.0
    report(capsys, 4, ok, f"max |V_flat - V_skill|={worst_exact:.2e}, max MC deviation={worst_z:.2f} SE")


# --------------------------------------------------------------------- 5

def test_criterion_05_actor_critic_checks(capsys):
    n, A = 2, 2
    critic, actor = CriticFeatures(IndexFeatures(n), A, per_action=True), TabularFeatures(n, A)
    omega = np.zeros(n * A)
    omega[critic.index(0, 1)] = 0.5
    omega[critic.index(1, 0)] = 0.25
    ac = ActorCriticState(omega, np.zeros(n * A))
    # r + gamma sum_b pi(b|s') Q(s', b) - Q(s, a)
    pi1 = softmax(actor.logits(ac.theta, 1))
    hand = 1.0 + 0.9 * (pi1[0] * 0.25 + pi1[1] * 0.0) - 0.5
    delta_ok = td_error(ac, (0, 1, 1, 1.0), 0.9, critic, actor) == pytest.approx(hand, abs=1e-15)

    poly = PolynomialFeatures([[0.0, 1.0], [0.0, 1.0]], 4)
    worst_mean = 0.0
    for k in range(100):
        rng = substream(50, k)
        theta, s = rng.normal(0, 3, poly.dim), tuple(rng.random(2))
        pi = softmax(poly.logits(theta, s))
        total = sum(pi[a] * compatible_features(theta, poly, s, a) for a in range(4))
        worst_mean = max(worst_mean, float(np.max(np.abs(total))))

    worst_rel = 0.0
    for k in range(20):
        rng = substream(51, k)
        n, A = int(rng.integers(2, 6)), int(rng.integers(2, 5))
        actor, critic = TabularFeatures(n, A), CriticFeatures(IndexFeatures(n), A, per_action=True)
        ac = ActorCriticState(rng.normal(size=n * A), rng.normal(size=n * A), alpha=0.5, beta_rate=0.1)
        s, nxt, rew = int(rng.integers(n)), rng.integers(n, size=A), rng.random(A)
        deltas = np.array([td_error(ac, (s, a, int(nxt[a]), rew[a]), 0.9, critic, actor) for a in range(A)])
        pi = softmax(actor.logits(ac.theta, s))
        direction = sum(pi[a] * (actor_critic_step(ac, (s, a, int(nxt[a]), rew[a]), 0.9, critic, actor).theta
                                 - ac.theta) / ac.beta_rate for a in range(A))
        h = 1e-6
        J = lambda th: float(softmax(actor.logits(th, s)) @ deltas)  # noqa: E731
        fd = np.array([(J(ac.theta + h * e) - J(ac.theta - h * e)) / (2 * h) for e in np.eye(n * A)])
        worst_rel = max(worst_rel, float(np.linalg.norm(direction - fd) / max(np.linalg.norm(fd), 1e-8)))
    ok = delta_ok and worst_mean <= 1e-10 and worst_rel <= 1e-4
    report(capsys, 5, ok, f"delta exact={delta_ok}, max |sum pi psi|={worst_mean:.1e}, "
                          f"max FD rel. error={worst_rel:.1e}")


# ---------------------------------------------------------------- 6 to 9

@pytest.fixture(scope="module")
def puddle_bench():
    results = {label: run_experiment(cfg) for label, cfg in bench_configs("pw")}
    ref = fine_q_reference(bench_configs("pw")[0][1])
    return results, ref


def final(res):
    _, mean, se, _ = res.summary()[-1]
    return mean, se


@pytest.mark.slow
def test_criterion_06_puddle_world_two_iterations(capsys, puddle_bench):
    results, (ref, _) = puddle_bench
    (m, s), (m0, s0) = final(results["lsb_2x2"]), final(results["mono"])
    z = (m - m0) / pooled_se(s, s0)
    ok = m >= 0.9 * ref and z >= 3.0
    report(capsys, 6, ok, f"2x2 {m:.4f}+-{s:.4f}, fine-Q {ref:.4f} (ratio {m / ref:.3f}), "
                          f"mono {m0:.4f}+-{s0:.4f}, z={z:.1f}")


@pytest.mark.slow
def test_criterion_07_partition_sweep_ordering(capsys, puddle_bench):
    results, _ = puddle_bench
    m0, s0 = final(results["mono"])
    zs = {}
    for label in ("lsb_2x2", "lsb_3x3", "lsb_4x4"):
        m, s = final(results[label])
        zs[label] = (m - m0) / pooled_se(s, s0)
    ok = min(zs.values()) >= 3.0
    report(capsys, 7, ok, "return over 1x1 in pooled SE: " + ", ".join(f"{k}={v:.1f}" for k, v in zs.items()))


@pytest.mark.slow
def test_criterion_08_mountain_car_goal_first(capsys):
    cfg = dict(bench_configs("mc"))["lsb_goal_first"]
    rows = run_experiment(cfg).summary()
    (_, m1, s1, _), (_, m3, s3, _) = rows[1], rows[3]
    gap = abs(m1 - m3) / pooled_se(s1, s3)
    report(capsys, 8, gap <= 1.0, f"iteration 1 {m1:.4f}+-{s1:.4f}, iteration 3 {m3:.4f}+-{s3:.4f}, "
                                  f"|diff|={gap:.2f} pooled SE")


@pytest.mark.slow
def test_criterion_09_pinball_maze(capsys):
    cfgs = dict(bench_configs("maze"))
    assert cfgs["lsb"].nn_points == 1000 and cfgs["lsb"].dims == (4, 1, 1, 1)
    (m, s), (m0, s0) = final(run_experiment(cfgs["lsb"])), final(run_experiment(cfgs["mono"]))
    z = (m - m0) / pooled_se(s, s0)
    report(capsys, 9, z >= 3.0, f"lsb {m:.4f}+-{s:.4f}, mono {m0:.4f}+-{s0:.4f}, z={z:.1f}")


# -------------------------------------------------------------------- 10

def test_criterion_10_physics(capsys):
    wall = ("ball 0.02\nstart 0.2 0.5\ntarget 0.1 0.1 0.02\ndrag 1.0\n"
            "polygon 0.6 0.2 0.7 0.2 0.7 0.8 0.6 0.8\n")
    env = Pinball(load_pinball_layout(wall))
    s = (0.55, 0.45, 0.6, 0.6)
    for _ in range(4):
        s = env.step(s, 4)[0]
    angle_err = abs(math.atan2(0.6, 0.6) - math.atan2(s[3], -s[2]))
    s = (0.55, 0.5, 0.8, 0.0)
    for _ in range(5):
        s = env.step(s, 4)[0]
    angle_err = max(angle_err, abs(math.atan2(s[3], s[2]) - math.pi))
    for v, n, expected in (((1.0, -1.0), (0.0, 1.0), math.pi / 4), ((0.3, 0.0), (-1.0, 0.0), math.pi)):
        w = reflect(v, n)
        angle_err = max(angle_err, abs(math.atan2(w[1], w[0]) - expected))

    worst_pen = 0.0
    for name in ("maze_world", "pinball_world"):
        env = Pinball(name)
        rng = substream(60)
        s = env.sample_state(rng)
        for _ in range(100_000):
            s, _, done = env.step(s, int(rng.integers(5)))
            worst_pen = max(worst_pen, env.layout.ball_radius - env.clearance(s[0], s[1]))
            if done:
                s = env.sample_state(rng)

    lo, hi = math.inf, -math.inf
    for name in ("mountain_car", "puddle_world", "pinball_maze", "pinball_world"):
        env = make_env(name)
        rng = substream(61)
        for _ in range(100_000):
            _, r, _ = env.step(env.sample_state(rng), int(rng.integers(env.action_count)), rng)
            lo, hi = min(lo, r), max(hi, r)
    ok = angle_err < 1e-9 and worst_pen <= 1e-6 and 0.0 <= lo and hi <= 1.0
    report(capsys, 10, ok, f"angle error {angle_err:.1e}, max penetration {max(worst_pen, 0.0):.1e}, "
                           f"rewards in [{lo:.3f}, {hi:.3f}]")


# -------------------------------------------------------------------- 11

def test_criterion_11_determinism(capsys, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("env.name = puddle_world\npartition.dims = (2, 2)\nlsb.iterations = 2\n"
                   "evaluator.episodes = 20\nlearner.steps = 2000\nscore.episodes = 20\nexperiment.trials = 2\n")
    logs = []
    for k in range(2):
        out = tmp_path / f"out{k}"
        assert main(["run", "--config", str(cfg), "--seed", "11", "--out", str(out)]) == 0
        logs.append((out / "runlog.csv").read_bytes())
    capsys.readouterr()
    report(capsys, 11, logs[0] == logs[1] and len(logs[0]) > 0, f"runlog.csv {len(logs[0])} bytes, identical")
