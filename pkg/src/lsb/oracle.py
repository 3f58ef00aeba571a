"""Exact finite-MDP machinery: optimal values, policy values, Skill MDP
solutions, the skill learning error and numerical checks of the per-update,
per-sweep and final suboptimality bounds."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .mdp import TabularEnv, substream
from .partition import LabelPartition
from .skills import Skill, SkillSet, TabularFeatures, softmax

BOUND_TOL = 1e-9
GREEDY_LOGIT = 50.0


@dataclass(frozen=True, eq=False)
class TabularInstance:
    P: np.ndarray  # (n, A, n)
    R: np.ndarray  # (n, A)
    gamma: float
    labels: tuple
    terminal: tuple = ()

    def __post_init__(self):
        P = np.array(self.P, dtype=float)
        R = np.array(self.R, dtype=float)
        if P.ndim != 3 or P.shape[0] != P.shape[2] or R.shape != P.shape[:2]:
            raise ValueError("P must be (n, A, n) and R must be (n, A)")
        if np.any(P < 0) or np.max(np.abs(P.sum(axis=2) - 1.0)) > 1e-12:
            raise ValueError("transition rows must be distributions")
        if np.any(R < 0) or np.any(R > 1):
            raise ValueError("rewards must lie in [0, 1]")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        labels = tuple(int(v) for v in self.labels)
        if len(labels) != P.shape[0]:
            raise ValueError("need one label per state")
        LabelPartition(labels)  # validates the labels
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "terminal", tuple(int(t) for t in self.terminal))

    @property
    def n_states(self) -> int:
        return self.P.shape[0]

    @property
    def n_actions(self) -> int:
        return self.P.shape[1]

    @property
    def m(self) -> int:
        return max(self.labels) + 1

    def members(self, i: int) -> np.ndarray:
        idx = np.flatnonzero(np.asarray(self.labels) == i)
        if idx.size == 0:
            raise ValueError(f"class {i} is empty")
        return idx

    def env(self) -> TabularEnv:
        return TabularEnv(self.P, self.R, self.gamma, terminal=self.terminal)

    def partition(self) -> LabelPartition:
        return LabelPartition(self.labels)

    def with_labels(self, labels) -> "TabularInstance":
        return TabularInstance(self.P, self.R, self.gamma, tuple(labels), self.terminal)


def random_instance(rng: np.random.Generator, n_states: int, m: int, n_actions: int = 4,
                    gamma: float = 0.9) -> TabularInstance:
    """Dirichlet(1) rows, Uniform[0, 1] rewards, balanced random labels."""
    if not 1 <= m <= n_states:
        raise ValueError("need 1 <= m <= n_states")
    P = rng.dirichlet(np.ones(n_states), size=(n_states, n_actions))
    P /= P.sum(axis=2, keepdims=True)
    R = rng.random((n_states, n_actions))
    labels = rng.permutation(np.arange(n_states) % m)
    return TabularInstance(P, R, gamma, tuple(labels))


def chain_instance(gamma: float = 0.5, labels=(0, 1, 1)) -> TabularInstance:
    """s0 -> s1 -> goal with reward 1 on entering the goal.

    Action 0 moves right, action 1 moves left (s0 stays put). The goal
    is absorbing with zero reward and ends sampled episodes.
    """
    P = np.zeros((3, 2, 3))
    R = np.zeros((3, 2))
    P[0, 0, 1] = 1.0
    P[0, 1, 0] = 1.0
    P[1, 0, 2] = 1.0
    P[1, 1, 0] = 1.0
    P[2, :, 2] = 1.0
    R[1, 0] = 1.0
    return TabularInstance(P, R, gamma, tuple(labels), terminal=(2,))


# ---------------------------------------------------------------- solvers

def value_iteration(inst: TabularInstance, tol: float = 1e-10, V0=None):
    """Returns (V, Q) with ||V - V*|| < tol via the residual stopping rule."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    return _value_iteration(inst.P, inst.R, inst.gamma, tol, V0)


def _value_iteration(P, R, gamma, tol, V0=None):
    V = np.zeros(P.shape[0]) if V0 is None else np.array(V0, dtype=float)
    if gamma == 0.0:
        Q = R.copy()
        return Q.max(axis=1), Q
    threshold = tol * (1.0 - gamma) / gamma
    while True:
        Q = R + gamma * (P @ V)
        V_new = Q.max(axis=1)
        residual = np.max(np.abs(V_new - V)) if V.size else 0.0
        V = V_new
        if residual < threshold:
            return V, R + gamma * (P @ V)


def greedy(Q) -> np.ndarray:
    """Deterministic greedy policy rows; ties go to the lowest action index."""
    Q = np.asarray(Q)
    pi = np.zeros_like(Q)
    pi[np.arange(len(Q)), Q.argmax(axis=1)] = 1.0
    return pi


def _policy_value(P, R, gamma, pi):
    P_pi = np.einsum("sa,sat->st", pi, P)
    R_pi = np.einsum("sa,sa->s", pi, R)
    return np.linalg.solve(np.eye(len(R_pi)) - gamma * P_pi, R_pi)


def _policy_iteration(P, R, gamma, max_iter: int = 1000):
    """Exact optimal values by policy iteration; returns (V, Q, greedy actions)."""
    n = P.shape[0]
    actions = R.argmax(axis=1)
    rows = np.arange(n)
    for _ in range(max_iter):
        pi = np.zeros_like(R)
        pi[rows, actions] = 1.0
        V = _policy_value(P, R, gamma, pi)
        Q = R + gamma * (P @ V)
        best = Q.max(axis=1)
        # only switch on a strict improvement so ties cannot cycle
        improve = best > Q[rows, actions] + 1e-12 * (1.0 + np.abs(best))
        if not improve.any():
            return V, Q, actions
        actions = np.where(improve, Q.argmax(axis=1), actions)
    raise RuntimeError("policy iteration did not converge")


def optimal_values(inst: TabularInstance):
    """Exact (V*, Q*) via policy iteration."""
    V, Q, _ = _policy_iteration(inst.P, inst.R, inst.gamma)
    return V, Q


def check_policy(pi, n_states: int, n_actions: int) -> np.ndarray:
    pi = np.asarray(pi, dtype=float)
    if pi.shape != (n_states, n_actions):
        raise ValueError(f"policy has shape {pi.shape}, expected ({n_states}, {n_actions})")
    if np.any(pi < 0) or np.max(np.abs(pi.sum(axis=1) - 1.0)) > 1e-9:
        raise ValueError("policy rows must be distributions")
    return pi


def evaluate_flat_policy_exact(inst: TabularInstance, policy) -> np.ndarray:
    """Solve (I - gamma P^pi) V = R^pi."""
    pi = check_policy(policy, inst.n_states, inst.n_actions)
    try:
        return _policy_value(inst.P, inst.R, inst.gamma, pi)
    except np.linalg.LinAlgError as exc:
        raise ValueError("singular policy evaluation system") from exc


# ------------------------------------------------------------- skill MDPs

@dataclass(frozen=True, eq=False)
class ExactSkillMdp:
    """Expectation form of the Skill MDP for one class.

    Staying transitions keep their probabilities; leaving mass goes to the
    terminal state and pays gamma * V_M at the exit state, folded into R.
    """

    members: np.ndarray
    P: np.ndarray  # (k, A, k), substochastic
    R: np.ndarray  # (k, A)
    gamma: float

    def solve(self):
        """(V*, Q*) of the Skill MDP."""
        V, Q, _ = _policy_iteration(self.P, self.R, self.gamma)
        return V, Q

    def evaluate(self, pi) -> np.ndarray:
        return _policy_value(self.P, self.R, self.gamma, np.asarray(pi, dtype=float))


def skill_mdp_matrices(inst: TabularInstance, i: int, V_M) -> ExactSkillMdp:
    idx = inst.members(i)
    V_M = np.asarray(V_M, dtype=float)
    inside = np.zeros(inst.n_states, dtype=bool)
    inside[idx] = True
    P_rows = inst.P[idx]
    P_in = P_rows[:, :, idx]
    exit_value = P_rows[:, :, ~inside] @ V_M[~inside]
    R = inst.R[idx] + inst.gamma * exit_value
    return ExactSkillMdp(idx, P_in, R, inst.gamma)


def solve_skill_mdp_exact(inst: TabularInstance, i: int, V_M):
    """Greedy optimal policy rows on the class members and V* of the Skill MDP."""
    smdp = skill_mdp_matrices(inst, i, V_M)
    V, Q = smdp.solve()
    return greedy(Q), V


# ------------------------------------------------------------ skill sets

def flat_policy(inst: TabularInstance, sigma: Sequence) -> np.ndarray:
    """pi(.|s) = sigma[label(s)](.|s) for per-class policy matrices of shape (n, A)."""
    labels = np.asarray(inst.labels)
    pi = np.empty((inst.n_states, inst.n_actions))
    for i, rows in enumerate(sigma):
        sel = labels == i
        pi[sel] = np.asarray(rows)[sel]
    return pi


def uniform_sigma(inst: TabularInstance) -> list:
    u = np.full((inst.n_states, inst.n_actions), 1.0 / inst.n_actions)
    return [u.copy() for _ in range(inst.m)]


def sigma_from_skill_set(inst: TabularInstance, skill_set: SkillSet) -> list:
    return [np.array([sk.probs(s) for s in range(inst.n_states)]) for sk in skill_set.skills]


def skill_set_value(inst: TabularInstance, skill_set: SkillSet) -> np.ndarray:
    pi = np.array([skill_set[inst.labels[s]].probs(s) for s in range(inst.n_states)])
    return evaluate_flat_policy_exact(inst, pi)


def evaluate_skills_smdp(inst: TabularInstance, sigma: Sequence) -> np.ndarray:
    """Value of the skill policy from skill-level (SMDP) quantities.

    For class i with policy pi_i, R~_i = (I - gamma P_ii)^-1 r_i is the
    expected discounted reward until the skill terminates and
    D_i = (I - gamma P_ii)^-1 gamma P_i,out the discounted exit distribution.
    The value solves V = R~ + D V.
    """
    n = inst.n_states
    R_tilde = np.zeros(n)
    D = np.zeros((n, n))
    labels = np.asarray(inst.labels)
    for i, rows in enumerate(sigma):
        idx = inst.members(i)
        out = labels != i
        pi = np.asarray(rows, dtype=float)[idx]
        P_pi = np.einsum("sa,sat->st", pi, inst.P[idx])
        r = np.einsum("sa,sa->s", pi, inst.R[idx])
        inv = np.linalg.inv(np.eye(len(idx)) - inst.gamma * P_pi[:, idx])
        R_tilde[idx] = inv @ r
        D_rows = np.zeros((len(idx), n))
        D_rows[:, out] = inst.gamma * (inv @ P_pi[:, out])
        D[idx] = D_rows
    return np.linalg.solve(np.eye(n) - D, R_tilde)


# ------------------------------------------------------------- learners
# A tabular learner maps (ExactSkillMdp, rng) to policy rows over the class members.

class ExactLearner:
    name = "exact"

    def __call__(self, smdp: ExactSkillMdp, rng=None) -> np.ndarray:
        return greedy(smdp.solve()[1])


class SoftmaxLearner:
    """Boltzmann policy over the exact Q*; suboptimal for any tau > 0."""

    name = "softmax"

    def __init__(self, tau: float = 0.1):
        self.tau = tau

    def __call__(self, smdp, rng=None):
        Q = smdp.solve()[1]
        return np.array([softmax(q / self.tau) for q in Q])


class MixtureLearner:
    """(1 - eps) greedy + eps uniform."""

    name = "mixture"

    def __init__(self, eps: float = 0.2):
        self.eps = eps

    def __call__(self, smdp, rng=None):
        pi = greedy(smdp.solve()[1])
        return (1.0 - self.eps) * pi + self.eps / pi.shape[1]


class NoisyLearner:
    """Greedy policy that, with probability ``p`` per state, picks a random action instead."""

    name = "noisy"

    def __init__(self, p: float = 0.3):
        self.p = p

    def __call__(self, smdp, rng):
        Q = smdp.solve()[1]
        k, A = Q.shape
        actions = Q.argmax(axis=1)
        flip = rng.random(k) < self.p
        actions = np.where(flip, rng.integers(A, size=k), actions)
        pi = np.zeros((k, A))
        pi[np.arange(k), actions] = 1.0
        return pi


LEARNERS: dict[str, Callable] = {
    "exact": ExactLearner,
    "softmax": SoftmaxLearner,
    "mixture": MixtureLearner,
    "noisy": NoisyLearner,
}


def make_learner(name: str):
    try:
        return LEARNERS[name]()
    except KeyError:
        raise ValueError(f"unknown tabular learner {name!r}") from None


# ------------------------------------------------------- skill learning error

def class_eta(smdp: ExactSkillMdp, rows) -> float:
    """max over class states of V*_{M_i'} - V^{pi}_{M_i'}."""
    V_star = smdp.solve()[0]
    V_pi = smdp.evaluate(rows)
    return float(max(0.0, np.max(V_star - V_pi)))


def measure_eta(inst: TabularInstance, labels, sigma: Sequence, V_M):
    """(eta_P, per-class eta_i) of the given per-class policies against V_M."""
    if labels is not None and tuple(labels) != inst.labels:
        inst = inst.with_labels(labels)
    if len(sigma) != inst.m:
        raise ValueError("need one policy per class")
    etas = []
    for i, rows in enumerate(sigma):
        smdp = skill_mdp_matrices(inst, i, V_M)
        etas.append(class_eta(smdp, np.asarray(rows, dtype=float)[smdp.members]))
    return max(etas), etas


@dataclass
class UpdateOutcome:
    sigma: list
    V_before: np.ndarray
    V_after: np.ndarray
    eta: float


def exact_update(inst: TabularInstance, sigma: Sequence, i: int, learner, rng=None) -> UpdateOutcome:
    """One exactly-evaluated skill update of class i."""
    V = evaluate_flat_policy_exact(inst, flat_policy(inst, sigma))
    smdp = skill_mdp_matrices(inst, i, V)
    rows = np.asarray(learner(smdp, rng), dtype=float)
    eta = class_eta(smdp, rows)
    new = [np.array(p, copy=True) for p in sigma]
    new[i][smdp.members] = rows
    V_after = evaluate_flat_policy_exact(inst, flat_policy(inst, new))
    return UpdateOutcome(new, V, V_after, eta)


# ------------------------------------------------------------ bound checks

@dataclass
class Lemma1Report:
    eta: float
    loss_margin: float       # max_s (V - V') - eta / (1 - gamma)
    inside_gap_margin: float
    outside_gap_margin: float
    dominance_margin: float  # max_{s in P_i} (V - V*_{M_i'}); should be <= 0

    @property
    def holds(self) -> bool:
        return max(self.loss_margin, self.inside_gap_margin, self.outside_gap_margin) <= BOUND_TOL


def verify_lemma1(inst: TabularInstance, labels, sigma: Sequence, i: int, learner, rng=None,
                  V_star=None) -> Lemma1Report:
    if labels is not None and tuple(labels) != inst.labels:
        inst = inst.with_labels(labels)
    if not 0 <= i < inst.m:
        raise IndexError(f"class {i} outside [0, {inst.m})")
    if V_star is None:
        V_star = optimal_values(inst)[0]
    g = inst.gamma
    res = exact_update(inst, sigma, i, learner, rng)
    slack = res.eta / (1.0 - g)
    loss = float(np.max(res.V_before - res.V_after) - slack)
    gap = float(np.max(V_star - res.V_before))
    after_gap = V_star - res.V_after
    inside = np.asarray(inst.labels) == i
    gap_in = float(np.max(after_gap[inside]) - (g * gap + slack))
    gap_out = float(np.max(after_gap[~inside]) - (gap + slack)) if (~inside).any() else -math.inf
    smdp = skill_mdp_matrices(inst, i, res.V_before)
    dominance = float(np.max(res.V_before[smdp.members] - smdp.solve()[0]))
    return Lemma1Report(res.eta, loss, gap_in, gap_out, dominance)


@dataclass
class Lemma2Report:
    gaps: list
    etas: list          # max eta per sweep
    margins: list       # gap_{k+1} - (gamma gap_k + m eta / (1 - gamma))
    sigma: list = field(repr=False, default=None)

    @property
    def holds(self) -> bool:
        return all(mg <= BOUND_TOL for mg in self.margins)


def run_sweeps(inst: TabularInstance, learner, sweeps: int, rng=None, sigma=None, V_star=None):
    """Full sweeps in index order; returns (gaps incl. the initial one, per-sweep max eta, sigma)."""
    if sweeps < 1:
        raise ValueError("sweeps must be >= 1")
    if V_star is None:
        V_star = optimal_values(inst)[0]
    sigma = uniform_sigma(inst) if sigma is None else [np.array(p, dtype=float) for p in sigma]
    V = evaluate_flat_policy_exact(inst, flat_policy(inst, sigma))
    gaps = [float(np.max(V_star - V))]
    etas = []
    for _ in range(sweeps):
        sweep_eta = 0.0
        for i in range(inst.m):
            res = exact_update(inst, sigma, i, learner, rng)
            sigma = res.sigma
            sweep_eta = max(sweep_eta, res.eta)
            V = res.V_after
        etas.append(sweep_eta)
        gaps.append(float(np.max(V_star - V)))
    return gaps, etas, sigma


def verify_lemma2(inst: TabularInstance, labels, learner, sweeps: int, rng=None) -> Lemma2Report:
    if labels is not None and tuple(labels) != inst.labels:
        inst = inst.with_labels(labels)
    gaps, etas, sigma = run_sweeps(inst, learner, sweeps, rng)
    g, m = inst.gamma, inst.m
    margins = [gaps[k + 1] - (g * gaps[k] + m * etas[k] / (1.0 - g)) for k in range(sweeps)]
    return Lemma2Report(gaps, etas, margins, sigma)


def min_iterations(epsilon: float, gamma: float) -> int:
    """Smallest K with K >= log_gamma(epsilon (1 - gamma)), at least 1."""
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    if not 0.0 < gamma < 1.0:
        raise ValueError("gamma must lie in (0, 1)")
    x = epsilon * (1.0 - gamma)
    if x >= 1.0:
        return 1
    k = math.log(x) / math.log(gamma)
    # absorb rounding noise on exact powers of gamma
    k_round = round(k)
    if abs(k - k_round) < 1e-9:
        k = k_round
    return max(1, int(math.ceil(k)))


@dataclass
class BoundReport:
    lhs: float
    rhs: float
    eta: float
    K: int
    m: int
    gaps: list
    etas: list

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs + BOUND_TOL


def verify_theorem1(inst: TabularInstance, labels, learner, epsilon: float, nu: float = 0.0,
                    rng=None) -> BoundReport:
    """Run K = min_iterations(epsilon, gamma) sweeps and compare with m (eta + nu) / (1 - gamma)^2 + epsilon."""
    if labels is not None and tuple(labels) != inst.labels:
        inst = inst.with_labels(labels)
    K = min_iterations(epsilon, inst.gamma)
    gaps, etas, _ = run_sweeps(inst, learner, K, rng)
    eta = max(etas)
    g = inst.gamma
    rhs = inst.m * (eta + nu) / (1.0 - g) ** 2 + epsilon
    return BoundReport(gaps[-1], rhs, eta, K, inst.m, gaps, etas)


# ------------------------------------------- adapters for the sampled driver

def _value_array(env: TabularEnv, value_fn) -> np.ndarray:
    if isinstance(value_fn, ExactValueFn):
        return value_fn.values
    return np.array([value_fn(s) for s in range(env.n_states)])


class ExactValueFn:
    def __init__(self, values):
        self.values = np.asarray(values, dtype=float)
        self._v = self.values.tolist()

    def __call__(self, s) -> float:
        return self._v[int(s)]


def _instance_from_env(env: TabularEnv, partition: LabelPartition) -> TabularInstance:
    return TabularInstance(env.P, env.R, env.gamma, tuple(partition.labels), tuple(sorted(env.terminal)))


class ExactEvaluator:
    """Evaluator ``(env, partition, skill_set, seed) -> value fn`` by a direct linear solve."""

    def __call__(self, env: TabularEnv, partition: LabelPartition, skill_set: SkillSet, seed=None):
        inst = _instance_from_env(env, partition)
        return ExactValueFn(skill_set_value(inst, skill_set))


class ExactSkillSolver:
    """Learner ``(skill_mdp, skill, seed) -> theta`` that solves the Skill MDP exactly.

    The greedy action of each class state gets logit ``GREEDY_LOGIT``; all
    other logits are zero, so the softmax skill is greedy up to e^-50.
    """

    name = "exact"

    def __call__(self, skill_mdp, skill: Skill, seed=None) -> np.ndarray:
        env = skill_mdp.base_env
        inst = _instance_from_env(env, skill_mdp.partition)
        V_M = _value_array(env, skill_mdp.exit_value)
        pi, _ = solve_skill_mdp_exact(inst, skill_mdp.class_index, V_M)
        feats = skill.features
        if not isinstance(feats, TabularFeatures):
            raise ValueError("exact skill solver needs tabular features")
        theta = np.array(skill.theta, dtype=float)
        A = inst.n_actions
        for row, s in zip(pi, inst.members(skill_mdp.class_index)):
            theta[s * A:(s + 1) * A] = GREEDY_LOGIT * row
        return theta


# ----------------------------------------------------------------- suites

SUITES = ("lemma1", "lemma2", "theorem1")
SUITE_LEARNERS = ("exact", "softmax", "mixture", "noisy")


def suite_instance(seed: int, k: int, gamma: float = 0.9, n_actions: int = 4, max_states: int = 30):
    """Instance k of a randomized suite: n in [6, max_states], m in {2, 3, 5}."""
    rng = substream(seed, k)
    m = int(rng.choice([2, 3, 5]))
    n = int(rng.integers(6, max_states + 1))
    return random_instance(rng, n, m, n_actions, gamma), rng


@dataclass
class SuiteLine:
    index: int
    n_states: int
    m: int
    learner: str
    holds: bool
    detail: str

    def format(self) -> str:
        status = "ok" if self.holds else "VIOLATED"
        return f"instance {self.index:3d} n={self.n_states:2d} m={self.m} learner={self.learner:<7s} {status} {self.detail}"


def run_suite(suite: str, n_instances: int, seed: int, epsilon: float = 0.1, sweeps: int = 10,
              gamma: float = 0.9, learners: Sequence[str] = SUITE_LEARNERS) -> list[SuiteLine]:
    """Randomized check; instance k uses learner ``learners[k % len(learners)]``."""
    if suite not in SUITES:
        raise ValueError(f"unknown suite {suite!r}; choose from {', '.join(SUITES)}")
    if n_instances < 1:
        raise ValueError("n_instances must be >= 1")
    out = []
    for k in range(n_instances):
        inst, rng = suite_instance(seed, k, gamma)
        lname = learners[k % len(learners)]
        learner = make_learner(lname)
        if suite == "theorem1":
            rep = verify_theorem1(inst, None, learner, epsilon, rng=rng)
            detail = f"K={rep.K} lhs={rep.lhs:.3e} rhs={rep.rhs:.3e} eta={rep.eta:.3e}"
            holds = rep.holds
        elif suite == "lemma2":
            rep = verify_lemma2(inst, None, learner, sweeps, rng=rng)
            detail = f"max_margin={max(rep.margins):.3e} final_gap={rep.gaps[-1]:.3e}"
            holds = rep.holds
        else:
            sigma = random_sigma(inst, rng)
            i = int(rng.integers(inst.m))
            rep = verify_lemma1(inst, None, sigma, i, learner, rng)
            detail = (f"class={i} eta={rep.eta:.3e} loss={rep.loss_margin:.3e} "
                      f"gap_in={rep.inside_gap_margin:.3e} gap_out={rep.outside_gap_margin:.3e}")
            holds = rep.holds
        out.append(SuiteLine(k, inst.n_states, inst.m, lname, bool(holds), detail))
    return out


def random_sigma(inst: TabularInstance, rng: np.random.Generator) -> list:
    """Random stochastic per-class policies (Dirichlet(1) rows)."""
    return [rng.dirichlet(np.ones(inst.n_actions), size=inst.n_states) for _ in range(inst.m)]
