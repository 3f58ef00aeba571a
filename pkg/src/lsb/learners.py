"""Skill MDP solvers: a regular-gradient actor-critic and UCB random policy search."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .mdp import default_horizon, sample_index, substream
from .partition import GridPartition
from .policy_eval import BinaryGridFeatures, IndexFeatures
from .skill_mdp import S_T, SkillMdp
from .skills import ActionFeatures, FeatureMap, Skill, softmax

DIVERGENCE_LIMIT = 1e6


class DivergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class ActorCriticState:
    omega: np.ndarray
    theta: np.ndarray
    alpha: float = 0.1
    beta_rate: float = 0.02

    def __post_init__(self):
        if not self.beta_rate < self.alpha:
            raise ValueError("beta_rate must be smaller than alpha")
        if self.alpha <= 0 or self.beta_rate < 0:
            raise ValueError("learning rates must be positive")
        omega = np.array(self.omega, dtype=float)
        theta = np.array(self.theta, dtype=float)
        if not (np.all(np.isfinite(omega)) and np.all(np.isfinite(theta))):
            raise ValueError("weights must be finite")
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "theta", theta)


class CriticFeatures:
    """Binary critic features phi(s, a) built on a one-active-index state map.

    With ``per_action`` the active index is ``(state index, a)``; otherwise
    the action is ignored and the critic is a state-value estimate.
    """

    def __init__(self, base, action_count: int, per_action: bool = False):
        self.base = base
        self.action_count = int(action_count)
        self.per_action = bool(per_action)
        self.dim = base.dim * (self.action_count if per_action else 1)

    def index(self, s, a: int) -> int:
        k = self.base.index(s)
        return k * self.action_count + a if self.per_action else k

    def vector(self, s, a: int) -> np.ndarray:
        out = np.zeros(self.dim)
        out[self.index(s, a)] = 1.0
        return out


def default_critic(skill_mdp: SkillMdp, cells_per_dim: int = 4, per_action: bool = False) -> CriticFeatures:
    """Grid critic over the class's box, or one-hot states for finite MDPs."""
    part = skill_mdp.partition
    A = skill_mdp.action_count
    if isinstance(part, GridPartition):
        box = part.cell_box(skill_mdp.class_index)
        base = BinaryGridFeatures(box, [cells_per_dim] * len(box))
    else:
        base = IndexFeatures(skill_mdp.base_env.n_states)
    return CriticFeatures(base, A, per_action)


def critic_from_value(skill_mdp: SkillMdp, critic: CriticFeatures, scale: float = 1.0) -> np.ndarray:
    """Critic weights read off the Skill MDP's frozen value function.

    The global value of the incumbent skill policy is also the Skill MDP
    value of the incumbent skill, so it is a natural starting critic. Grid
    cells take the value at their centre; tabular features take V(s).
    """
    base = critic.base
    V = skill_mdp.exit_value
    if isinstance(base, BinaryGridFeatures):
        vals = np.array([V(base.center(k)) for k in range(base.dim)])
    else:
        vals = np.array([V(s) for s in range(base.dim)])
    vals = scale * vals
    return np.repeat(vals, critic.action_count) if critic.per_action else vals


def _check_delta(delta: float) -> float:
    if not math.isfinite(delta) or abs(delta) > DIVERGENCE_LIMIT:
        raise DivergenceError("diverged")
    return delta


def td_error(ac: ActorCriticState, transition, gamma: float, critic, actor: FeatureMap, done: bool = False) -> float:
    """delta = r + gamma sum_b pi(b|s') omega.phi(s', b) - omega.phi(s, a); no bootstrap at S_T."""
    s, a, s_next, r = transition
    v_old = float(ac.omega @ critic.vector(s, a))
    if done or s_next is S_T:
        v_new = r
    else:
        pi = softmax(actor.logits(ac.theta, s_next))
        v_new = r + gamma * sum(pi[b] * float(ac.omega @ critic.vector(s_next, b)) for b in range(len(pi)))
    return v_new - v_old


def compatible_features(theta, actor: FeatureMap, s, a: int) -> np.ndarray:
    return actor.score(np.asarray(theta, dtype=float), s, a)


def actor_critic_step(ac: ActorCriticState, transition, gamma: float, critic, actor: FeatureMap,
                      done: bool = False) -> ActorCriticState:
    """One critic and one actor update from ``transition = (s, a, s', r)``."""
    s, a, _, _ = transition
    delta = _check_delta(td_error(ac, transition, gamma, critic, actor, done))
    omega = ac.omega + ac.alpha * delta * critic.vector(s, a)
    theta = ac.theta + ac.beta_rate * delta * compatible_features(ac.theta, actor, s, a)
    return replace(ac, omega=omega, theta=theta)


def train_skill_actor_critic(
    skill_mdp: SkillMdp,
    init_theta,
    episodes: int,
    max_steps: int,
    alpha: float = 0.1,
    beta_rate: float | None = None,
    seed: int = 0,
    actor: FeatureMap | None = None,
    critic: CriticFeatures | None = None,
    step_budget: int | None = None,
    return_state: bool = False,
    reward_scale: float = 1.0,
    init_omega=None,
):
    """Actor-critic on sampled Skill MDP episodes; returns the final theta.

    Episodes start uniformly inside the class. ``step_budget`` caps the
    total number of transitions across episodes. Rewards are multiplied by
    ``reward_scale`` before the updates, which leaves the optimal policy
    unchanged. ``init_omega`` seeds the critic (zeros by default).
    """
    if reward_scale <= 0:
        raise ValueError("reward_scale must be positive")
    if episodes < 1 or max_steps < 1:
        raise ValueError("episodes and max_steps must be >= 1")
    beta_rate = 0.2 * alpha if beta_rate is None else beta_rate
    actor = actor or ActionFeatures(skill_mdp.action_count)
    critic = critic or default_critic(skill_mdp)
    omega0 = np.zeros(critic.dim) if init_omega is None else init_omega
    ac = ActorCriticState(omega0, init_theta, alpha, beta_rate)
    omega = ac.omega.copy()
    theta = ac.theta.copy()
    gamma = skill_mdp.gamma
    A = skill_mdp.action_count
    per_action = critic.per_action
    budget = step_budget if step_budget is not None else episodes * max_steps
    used = 0
    for ep in range(episodes):
        if used >= budget:
            break
        rng = substream(seed, ep)
        s = skill_mdp.sample_start(rng)
        pi = softmax(actor.logits(theta, s))
        for _ in range(max_steps):
            if used >= budget:
                break
            a = sample_index(pi, rng.random())
            s_next, r, done = skill_mdp.step(s, a, rng)
            r *= reward_scale
            used += 1
            k = critic.index(s, a)
            if done:
                v_new = r
            else:
                pi_next = softmax(actor.logits(theta, s_next))
                if per_action:
                    k0 = critic.base.index(s_next) * A
                    v_new = r + gamma * float(pi_next @ omega[k0:k0 + A])
                else:
                    v_new = r + gamma * omega[critic.index(s_next, 0)]
            delta = _check_delta(v_new - omega[k])
            omega[k] += alpha * delta
            theta += beta_rate * delta * actor.score(theta, s, a, pi)
            if done:
                break
            s = s_next
            pi = softmax(actor.logits(theta, s))
    if return_state:
        return ActorCriticState(omega, theta, alpha, beta_rate)
    return theta


@dataclass
class BanditArm:
    theta_candidate: np.ndarray
    pulls: int = 0
    mean_return: float = 0.0

    def record(self, ret: float) -> None:
        self.pulls += 1
        self.mean_return += (ret - self.mean_return) / self.pulls


def skill_mdp_return(skill_mdp: SkillMdp, skill: Skill, s0, horizon: int, rng: np.random.Generator) -> float:
    """Discounted return of one Skill MDP episode from ``s0``."""
    gamma = skill_mdp.gamma
    total = 0.0
    disc = 1.0
    s = s0
    for _ in range(horizon):
        a = skill.sample(s, rng)
        s, r, done = skill_mdp.step(s, a, rng)
        total += disc * r
        disc *= gamma
        if done:
            break
    return total


def ucb_rps_solve(
    skill_mdp: SkillMdp,
    features: FeatureMap,
    n_candidates: int,
    total_rollouts: int,
    horizon: int | None = None,
    exploration_c: float = math.sqrt(2.0),
    seed: int = 0,
    init_theta=None,
    sigma: float = 1.0,
    return_arms: bool = False,
):
    """UCB1 over Gaussian random policies, returning the best empirical theta.

    Each candidate gets one warm-up rollout, then the remaining rollouts go
    to the arm maximizing ``mean + c sqrt(ln(N) / pulls)``. An ``init_theta``
    joins the pool as one more arm so the incumbent is never lost.
    """
    if n_candidates < 2:
        raise ValueError("n_candidates must be >= 2")
    n_arms = n_candidates + (init_theta is not None)
    if total_rollouts < n_arms:
        raise ValueError("total_rollouts must cover one pull per candidate")
    horizon = horizon or default_horizon(skill_mdp.gamma)
    rng = substream(seed, 0)
    arms = [BanditArm(rng.normal(0.0, sigma, features.dim)) for _ in range(n_candidates)]
    if init_theta is not None:
        arms.append(BanditArm(np.array(init_theta, dtype=float)))
    skills = [Skill(arm.theta_candidate, skill_mdp.class_index, features) for arm in arms]

    def pull(j: int) -> None:
        r = substream(seed, 1, j, arms[j].pulls)
        arms[j].record(skill_mdp_return(skill_mdp, skills[j], skill_mdp.sample_start(r), horizon, r))

    for j in range(n_arms):
        pull(j)
    for n in range(n_arms, total_rollouts):
        log_n = math.log(n)
        scores = [arm.mean_return + exploration_c * math.sqrt(log_n / arm.pulls) for arm in arms]
        pull(int(np.argmax(scores)))
    best = int(np.argmax([arm.mean_return for arm in arms]))
    theta = arms[best].theta_candidate.copy()
    return (theta, arms) if return_arms else theta


class ActorCriticLearner:
    """Callable learner ``(skill_mdp, skill, seed) -> theta``.

    Each solve starts from theta = 0 unless ``warm_start`` is set, so a
    skill that saturated early can still change once its neighbours improve.
    """

    name = "actor_critic"

    def __init__(self, episodes: int = 200, max_steps: int = 200, alpha: float = 0.1,
                 beta_ratio: float = 0.2, step_budget: int | None = None,
                 critic_cells: int = 4, per_action: bool = False, reward_scale: float = 1.0,
                 critic_init: str = "value", warm_start: bool = False):
        if critic_init not in ("value", "zero"):
            raise ValueError("critic_init must be value or zero")
        if not 0 < beta_ratio < 1:
            raise ValueError("beta_ratio must lie in (0, 1)")
        self.episodes = episodes
        self.max_steps = max_steps
        self.alpha = alpha
        self.beta_ratio = beta_ratio
        self.step_budget = step_budget
        self.critic_cells = critic_cells
        self.per_action = per_action
        self.reward_scale = reward_scale
        self.critic_init = critic_init
        self.warm_start = warm_start

    def __call__(self, skill_mdp: SkillMdp, skill: Skill, seed: int) -> np.ndarray:
        critic = default_critic(skill_mdp, self.critic_cells, self.per_action)
        omega0 = critic_from_value(skill_mdp, critic, self.reward_scale) if self.critic_init == "value" else None
        theta0 = skill.theta if self.warm_start else np.zeros_like(skill.theta)
        return train_skill_actor_critic(
            skill_mdp, theta0, self.episodes, self.max_steps, self.alpha,
            self.beta_ratio * self.alpha, seed, skill.features, critic, self.step_budget,
            reward_scale=self.reward_scale, init_omega=omega0,
        )


class UcbRpsLearner:
    name = "ucb_rps"

    def __init__(self, candidates: int = 20, rollouts: int = 200, horizon: int | None = None,
                 exploration_c: float = math.sqrt(2.0), sigma: float = 1.0, keep_incumbent: bool = True):
        self.candidates = candidates
        self.rollouts = rollouts
        self.horizon = horizon
        self.exploration_c = exploration_c
        self.sigma = sigma
        self.keep_incumbent = keep_incumbent

    def __call__(self, skill_mdp: SkillMdp, skill: Skill, seed: int) -> np.ndarray:
        return ucb_rps_solve(
            skill_mdp, skill.features, self.candidates, self.rollouts, self.horizon,
            self.exploration_c, seed, skill.theta if self.keep_incumbent else None, self.sigma,
        )
