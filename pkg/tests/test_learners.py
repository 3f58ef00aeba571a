import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lsb.learners import (ActorCriticLearner, ActorCriticState, CriticFeatures, DivergenceError, UcbRpsLearner,
                          actor_critic_step, compatible_features, td_error, train_skill_actor_critic,
                          ucb_rps_solve)
from lsb.mdp import substream
from lsb.oracle import TabularInstance, skill_mdp_matrices
from lsb.policy_eval import IndexFeatures
from lsb.skill_mdp import S_T, build_skill_mdp
from lsb.skills import ActionFeatures, PolynomialFeatures, Skill, TabularFeatures, softmax


def exit_instance(rewards=(1.0, 0.0, 0.0), gamma=0.9, all_exit=False):
    """State 0 (class 0): action a pays ``rewards[a]``. Paying actions exit to the absorbing
    state 1; the others self-loop unless ``all_exit``."""
    A = len(rewards)
    P = np.zeros((2, A, 2))
    R = np.zeros((2, A))
    for a, r in enumerate(rewards):
        P[0, a, 1 if r > 0 or all_exit else 0] = 1.0
        R[0, a] = r
    P[1, :, 1] = 1.0
    return TabularInstance(P, R, gamma, (0, 1), terminal=(1,))


def tabular_critic(n, A):
    return CriticFeatures(IndexFeatures(n), A, per_action=True)


# ------------------------------------------------------------------ step

def test_zero_fixed_point():
    critic, actor = tabular_critic(3, 2), TabularFeatures(3, 2)
    ac = ActorCriticState(np.zeros(6), np.zeros(6))
    out = actor_critic_step(ac, (0, 1, 2, 0.0), 0.9, critic, actor)
    assert td_error(ac, (0, 1, 2, 0.0), 0.9, critic, actor) == 0.0
    assert np.array_equal(out.omega, ac.omega) and np.array_equal(out.theta, ac.theta)


def test_td_error_hand_example():
    critic, actor = tabular_critic(2, 2), TabularFeatures(2, 2)
    omega = np.zeros(4)
    omega[critic.index(0, 1)] = 0.5
    ac = ActorCriticState(omega, substream(0).normal(size=4))
    assert td_error(ac, (0, 1, 1, 1.0), 0.9, critic, actor) == 0.5
    # terminal transitions do not bootstrap
    omega[critic.index(1, 0)] = 7.0
    ac = ActorCriticState(omega, np.zeros(4))
    assert td_error(ac, (0, 1, S_T, 1.0), 0.9, critic, actor) == 0.5


def test_update_formulas():
    critic, actor = tabular_critic(2, 3), TabularFeatures(2, 3)
    rng = substream(1)
    ac = ActorCriticState(rng.normal(size=6), rng.normal(size=6), alpha=0.1, beta_rate=0.02)
    tr = (0, 2, 1, 0.3)
    delta = td_error(ac, tr, 0.8, critic, actor)
    out = actor_critic_step(ac, tr, 0.8, critic, actor)
    assert np.allclose(out.omega, ac.omega + 0.1 * delta * critic.vector(0, 2), atol=1e-15)
    assert np.allclose(out.theta, ac.theta + 0.02 * delta * compatible_features(ac.theta, actor, 0, 2), atol=1e-15)


def test_identical_features_give_no_actor_update():
    class Same(ActionFeatures):
        def matrix(self, s):
            return np.ones((self.action_count, 2))

        def logits(self, theta, s):
            return self.matrix(s) @ theta

        def score(self, theta, s, a, probs=None):
            Z = self.matrix(s)
            return Z[a] - softmax(Z @ theta) @ Z

    actor = Same(3)
    critic = CriticFeatures(IndexFeatures(2), 3)
    ac = ActorCriticState(np.array([0.0, 0.4]), np.zeros(2))
    out = actor_critic_step(ac, (0, 1, 1, 1.0), 0.9, critic, actor)
    assert np.all(compatible_features(ac.theta, actor, 0, 1) == 0)
    assert np.array_equal(out.theta, ac.theta)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10_000))
def test_compatible_features_have_zero_mean(seed):
    rng = substream(seed)
    actor = PolynomialFeatures([[0.0, 1.0], [0.0, 1.0]], 4)
    theta = rng.normal(0, 3, actor.dim)
    s = tuple(rng.random(2))
    pi = softmax(actor.logits(theta, s))
    total = sum(pi[a] * compatible_features(theta, actor, s, a) for a in range(4))
    assert np.max(np.abs(total)) <= 1e-10


@pytest.mark.parametrize("k", range(20))
def test_actor_direction_matches_finite_difference(k):
    """The expected update sum_a pi(a) delta_a psi_a is the gradient of sum_a pi_theta(a) delta_a
    with the critic (and so every delta_a) frozen."""
    rng = substream(80, k)
    n, A = int(rng.integers(2, 6)), int(rng.integers(2, 5))
    actor, critic = TabularFeatures(n, A), tabular_critic(n, A)
    ac = ActorCriticState(rng.normal(size=n * A), rng.normal(size=n * A), alpha=0.5, beta_rate=0.1)
    s, gamma = int(rng.integers(n)), 0.9
    nxt = rng.integers(n, size=A)
    rew = rng.random(A)
    deltas = np.array([td_error(ac, (s, a, int(nxt[a]), rew[a]), gamma, critic, actor) for a in range(A)])
    pi = softmax(actor.logits(ac.theta, s))
    direction = sum(pi[a] * (actor_critic_step(ac, (s, a, int(nxt[a]), rew[a]), gamma, critic, actor).theta
                             - ac.theta) / ac.beta_rate for a in range(A))

    def J(theta):
        return float(softmax(actor.logits(theta, s)) @ deltas)

    h = 1e-6
    fd = np.array([(J(ac.theta + h * e) - J(ac.theta - h * e)) / (2 * h) for e in np.eye(n * A)])
    assert np.linalg.norm(direction - fd) <= 1e-4 * max(np.linalg.norm(fd), 1e-8)


def test_gamma_zero_step_is_regression():
    critic, actor = tabular_critic(2, 2), TabularFeatures(2, 2)
    ac = ActorCriticState(np.zeros(4), np.zeros(4), alpha=0.3, beta_rate=0.1)
    gaps = []
    for _ in range(30):
        ac = actor_critic_step(ac, (0, 1, 1, 0.8), 0.0, critic, actor)
        gaps.append(abs(ac.omega[critic.index(0, 1)] - 0.8))
    assert all(b <= 0.7 * a + 1e-15 for a, b in zip(gaps, gaps[1:]))
    assert gaps[-1] < 1e-4


def test_state_validation_and_divergence():
    with pytest.raises(ValueError):
        ActorCriticState(np.zeros(2), np.zeros(2), alpha=0.1, beta_rate=0.1)
    with pytest.raises(ValueError):
        ActorCriticState(np.array([np.nan]), np.zeros(2))
    critic, actor = tabular_critic(2, 2), TabularFeatures(2, 2)
    ac = ActorCriticState(np.array([0.0, 0.0, 1e7, 0.0]), np.zeros(4))
    with pytest.raises(DivergenceError, match="diverged"):
        actor_critic_step(ac, (0, 0, 1, 0.0), 0.9, critic, actor)


# ---------------------------------------------------------------- training

def test_learns_the_rewarding_exit():
    inst = exit_instance(all_exit=True)
    smdp = build_skill_mdp(inst.env(), inst.partition(), 0, lambda s: 0.0)
    exact = skill_mdp_matrices(inst, 0, np.zeros(2))
    assert int(np.argmax(exact.solve()[1][0])) == 0
    theta = train_skill_actor_critic(smdp, np.zeros(3), 2000, 50, seed=3)
    assert softmax(theta)[0] > 0.9


def test_zero_reward_keeps_theta_at_zero():
    inst = exit_instance((0.0, 0.0, 0.0))
    smdp = build_skill_mdp(inst.env(), inst.partition(), 0, lambda s: 0.0)
    theta = train_skill_actor_critic(smdp, np.zeros(3), 50, 20, seed=0)
    assert np.array_equal(theta, np.zeros(3))


def test_training_defaults_and_determinism():
    ac = ActorCriticState(np.zeros(1), np.zeros(1))
    assert ac.alpha == 0.1 and ac.beta_rate == pytest.approx(0.2 * 0.1)
    learner = ActorCriticLearner()
    assert learner.alpha == 0.1 and learner.beta_ratio == 0.2
    inst = exit_instance((0.6, 0.0, 0.3))
    smdp = build_skill_mdp(inst.env(), inst.partition(), 0, lambda s: 0.0)
    state = train_skill_actor_critic(smdp, np.zeros(3), 30, 20, seed=5, return_state=True)
    assert state.beta_rate == pytest.approx(0.02)
    a = train_skill_actor_critic(smdp, np.zeros(3), 30, 20, seed=5)
    b = train_skill_actor_critic(smdp, np.zeros(3), 30, 20, seed=5)
    assert np.array_equal(a, b)


def test_learner_starts_cold_unless_asked():
    inst = exit_instance((0.0, 0.0, 0.0))
    smdp = build_skill_mdp(inst.env(), inst.partition(), 0, lambda s: 0.0)
    skill = Skill(np.array([5.0, 0.0, 0.0]), 0, ActionFeatures(3))
    assert np.array_equal(ActorCriticLearner(episodes=5, max_steps=5)(smdp, skill, 0), np.zeros(3))
    warm = ActorCriticLearner(episodes=5, max_steps=5, warm_start=True)(smdp, skill, 0)
    assert np.array_equal(warm, skill.theta)


def test_training_argument_errors():
    inst = exit_instance()
    smdp = build_skill_mdp(inst.env(), inst.partition(), 0, lambda s: 0.0)
    with pytest.raises(ValueError):
        train_skill_actor_critic(smdp, np.zeros(3), 0, 10)
    with pytest.raises(ValueError):
        train_skill_actor_critic(smdp, np.zeros(3), 10, 10, reward_scale=0.0)
    with pytest.raises(ValueError):
        ActorCriticLearner(beta_ratio=1.5)


# ------------------------------------------------------------------ UCB-RPS

def test_ucb_picks_a_clearly_dominant_candidate():
    inst = exit_instance((1.0, 1e-9), gamma=0.5)   # action 1 exits with negligible reward
    smdp = build_skill_mdp(inst.env(), inst.partition(), 0, lambda s: 0.0)
    feats = ActionFeatures(2)
    exact = skill_mdp_matrices(inst, 0, np.zeros(2))
    total, noise = 400, 0.5
    hits = eligible = 0
    for seed in range(300):
        theta, arms = ucb_rps_solve(smdp, feats, 2, total, seed=seed, return_arms=True)
        vals = [float(exact.evaluate(softmax(arm.theta_candidate)[None, :])[0]) for arm in arms]
        if abs(vals[0] - vals[1]) < 5 * noise / np.sqrt(total / 2):
            continue
        eligible += 1
        hits += np.array_equal(theta, arms[int(np.argmax(vals))].theta_candidate)
    assert eligible >= 50 and hits / eligible >= 0.99


def test_ucb_deterministic_returns():
    inst = exit_instance((1.0, 0.0, 0.0))
    smdp = build_skill_mdp(inst.env(), inst.partition(), 0, lambda s: 0.0)
    for seed in range(10):
        theta, arms = ucb_rps_solve(smdp, ActionFeatures(3), 6, 60, horizon=1, seed=seed, sigma=1e4,
                                    return_arms=True)
        greedy = [int(np.argmax(a.theta_candidate)) for a in arms]
        for arm, g in zip(arms, greedy):
            assert arm.pulls >= 1 and arm.mean_return == (1.0 if g == 0 else 0.0)
        if 0 in greedy:
            assert int(np.argmax(theta)) == 0


def test_ucb_warm_up_only():
    inst = exit_instance((0.7, 0.2))
    smdp = build_skill_mdp(inst.env(), inst.partition(), 0, lambda s: 0.0)
    theta, arms = ucb_rps_solve(smdp, ActionFeatures(2), 5, 5, seed=1, return_arms=True)
    assert [a.pulls for a in arms] == [1] * 5
    best = max(arms, key=lambda a: a.mean_return)
    assert np.array_equal(theta, best.theta_candidate)
    with pytest.raises(ValueError):
        ucb_rps_solve(smdp, ActionFeatures(2), 1, 5)
    with pytest.raises(ValueError):
        ucb_rps_solve(smdp, ActionFeatures(2), 5, 4)


def test_ucb_learner_keeps_the_incumbent():
    inst = exit_instance((1.0, 0.0))
    smdp = build_skill_mdp(inst.env(), inst.partition(), 0, lambda s: 0.0)
    incumbent = Skill(np.array([50.0, 0.0]), 0, ActionFeatures(2))
    theta = UcbRpsLearner(candidates=4, rollouts=100, sigma=0.01)(smdp, incumbent, 0)
    assert np.array_equal(theta, incumbent.theta)
