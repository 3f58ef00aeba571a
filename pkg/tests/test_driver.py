import numpy as np
import pytest

from lsb.driver import LsbConfig, LsbUpdateError, goal_first_order, min_iterations, run_lsb
from lsb.learners import ActorCriticLearner
from lsb.mdp import substream, sup_gap
from lsb.oracle import (ExactEvaluator, ExactSkillSolver, chain_instance, optimal_values, random_instance,
                        skill_set_value)
from lsb.skills import SkillSet, TabularFeatures

EXACT = dict(evaluator=ExactEvaluator(), learner=ExactSkillSolver())


def run_exact(inst, K, order="index", evaluation="per_update", seed=0, **kw):
    cfg = LsbConfig(K, order=order, evaluation=evaluation, **EXACT)
    feats = TabularFeatures(inst.n_states, inst.n_actions)
    return run_lsb(inst.env(), inst.partition(), cfg, seed, features=feats, **kw)


@pytest.mark.parametrize("k", range(5))
def test_single_class_exact_solve_is_optimal(k):
    inst = random_instance(substream(90, k), 10, 1)
    res = run_exact(inst, 1)
    V_star = optimal_values(inst)[0]
    assert sup_gap(V_star, skill_set_value(inst, res.skill_set)).sup_gap <= 1e-9


def test_chain_goal_class_first():
    inst = chain_instance(0.5, labels=(0, 1, 1))
    res = run_exact(inst, 1, order=(1, 0))
    V = skill_set_value(inst, res.skill_set)
    assert V[1] == pytest.approx(1.0, abs=1e-12) and V[0] == pytest.approx(0.5, abs=1e-12)
    assert sup_gap(optimal_values(inst)[0], V).sup_gap <= 1e-12


def test_chain_start_class_first():
    inst = chain_instance(0.5, labels=(0, 1, 1))
    V_star = optimal_values(inst)[0]
    gaps = [sup_gap(V_star, skill_set_value(inst, run_exact(inst, K, order=(0, 1)).skill_set)).sup_gap
            for K in (1, 2)]
    # under the uniform start skills s1 already looks better than s0, so s0 turns right in sweep 1
    assert gaps[0] <= 1e-12 and gaps[1] <= 1e-12


@pytest.mark.parametrize("epsilon, gamma, K", [(0.5, 0.5, 2), (0.1, 0.9, 44), (2.0, 0.5, 1), (10.0, 0.9, 1)])
def test_min_iterations_examples(epsilon, gamma, K):
    assert min_iterations(epsilon, gamma) == K


def test_min_iterations_against_definition():
    rng = substream(91)
    for _ in range(200):
        eps, g = float(rng.uniform(1e-4, 5.0)), float(rng.uniform(0.05, 0.995))
        K = min_iterations(eps, g)
        assert K >= 1 and (K == 1 or g ** (K - 1) > eps * (1 - g) * (1 + 1e-12))
        assert g ** K <= eps * (1 - g) * (1 + 1e-9) or K == 1


@pytest.mark.parametrize("eps, gamma", [(0.0, 0.9), (-1.0, 0.9), (0.1, 1.0), (0.1, 0.0)])
def test_min_iterations_errors(eps, gamma):
    with pytest.raises(ValueError):
        min_iterations(eps, gamma)


def test_log_has_one_record_per_update():
    inst = random_instance(substream(92), 12, 3)
    res = run_exact(inst, 4, score_fn=lambda ss: float(skill_set_value(inst, ss).mean()))
    assert [(r.iteration, r.skill) for r in res.log] == [(k, i) for k in range(1, 5) for i in range(3)]
    assert all(r.pre_return is not None and r.post_return is not None for r in res.log)
    assert all(a.post_return == b.pre_return for a, b in zip(res.log, res.log[1:]))


@pytest.mark.parametrize("k", range(8))
def test_exact_sweeps_contract(k):
    inst = random_instance(substream(93, k), 15, 3, gamma=0.9)
    V_star = optimal_values(inst)[0]
    feats = TabularFeatures(15, 4)
    gaps = [sup_gap(V_star, skill_set_value(inst, SkillSet.uniform(3, feats))).sup_gap]
    ss = None
    for _ in range(8):
        cfg = LsbConfig(1, **EXACT)
        res = run_lsb(inst.env(), inst.partition(), cfg, 0, features=feats, init_skills=ss)
        ss = res.skill_set
        gaps.append(sup_gap(V_star, skill_set_value(inst, ss)).sup_gap)
    assert all(b <= 0.9 * a + 1e-9 for a, b in zip(gaps, gaps[1:]))


def test_per_sweep_evaluation_also_converges():
    inst = random_instance(substream(94), 10, 2)
    res = run_exact(inst, 40, evaluation="per_sweep")
    assert sup_gap(optimal_values(inst)[0], skill_set_value(inst, res.skill_set)).sup_gap <= 1e-6


def test_run_is_reproducible():
    inst = random_instance(substream(95), 8, 2)
    feats = TabularFeatures(8, 4)
    cfg = LsbConfig(2, evaluator=ExactEvaluator(), learner=ActorCriticLearner(episodes=20, max_steps=20))
    a = run_lsb(inst.env(), inst.partition(), cfg, 7, features=feats)
    b = run_lsb(inst.env(), inst.partition(), cfg, 7, features=feats)
    assert all(np.array_equal(x.theta, y.theta) for x, y in zip(a.skill_set.skills, b.skill_set.skills))


def test_goal_first_orders_by_value():
    inst = chain_instance(0.5, labels=(0, 1, 1))
    values = {0: 0.1, 1: 0.9, 2: 0.0}
    assert goal_first_order(inst.env(), inst.partition(), values.get, seed=0) == (1, 0)
    res = run_exact(inst, 1, order="goal_first")
    assert res.order == (1, 0)


def test_driver_errors():
    inst = chain_instance()
    with pytest.raises(ValueError):
        LsbConfig(0, **EXACT)
    with pytest.raises(ValueError):
        LsbConfig(1, order="random", **EXACT)
    with pytest.raises(ValueError):
        run_exact(inst, 1, order=(0, 0))
    with pytest.raises(ValueError):
        run_lsb(inst.env(), inst.partition(), LsbConfig(1, **EXACT), 0)

    def broken(skill_mdp, skill, seed):
        raise RuntimeError("boom")

    cfg = LsbConfig(1, evaluator=ExactEvaluator(), learner=broken)
    with pytest.raises(LsbUpdateError) as info:
        run_lsb(inst.env(), inst.partition(), cfg, 0, features=TabularFeatures(3, 2))
    assert info.value.iteration == 1 and info.value.skill == 0
