"""Global evaluation of a skill policy: SMDP-LSTD on binary grid features and
nearest-neighbour value stores."""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

from .mdp import EnvModel, default_horizon, derive_seed, monte_carlo_value, substream
from .partition import Grid
from .skills import SkillPolicy, SkillSet

DEFAULT_RIDGE = 1e-6


class InsufficientCoverage(RuntimeError):
    pass


class BinaryGridFeatures(Grid):
    """One active binary feature per state: the grid cell containing it."""

    @property
    def dim(self) -> int:
        return self.size

    def vector(self, s) -> np.ndarray:
        out = np.zeros(self.size)
        out[self.index(s)] = 1.0
        return out


class IndexFeatures:
    """One-hot features over integer states (exhaustive tabular features)."""

    def __init__(self, n_states: int):
        self.dim = int(n_states)

    def index(self, s) -> int:
        s = int(s)
        if not 0 <= s < self.dim:
            raise IndexError(f"state {s} outside [0, {self.dim})")
        return s

    def vector(self, s) -> np.ndarray:
        out = np.zeros(self.dim)
        out[self.index(s)] = 1.0
        return out


def grid_features(features, s) -> int:
    """Index of the single active feature for ``s``."""
    return features.index(s)


class LinearValueFn:
    def __init__(self, features, weights):
        weights = np.asarray(weights, dtype=float)
        if weights.shape != (features.dim,):
            raise ValueError(f"weights have shape {weights.shape}, expected ({features.dim},)")
        if not np.all(np.isfinite(weights)):
            raise ValueError("weights must be finite")
        self.features = features
        self.weights = weights
        self._w = weights.tolist()

    def __call__(self, s) -> float:
        return self._w[self.features.index(s)]


def lstd_solve(dim, idx, rewards, next_idx, discounts, ridge: float = DEFAULT_RIDGE, weights=None) -> np.ndarray:
    """Solve (A + ridge I) w = b for one-hot features.

    A = sum_k w_k phi(s_k) (phi(s_k) - discount_k phi(s'_k))^T and
    b = sum_k w_k phi(s_k) R_k. ``next_idx < 0`` marks a terminal successor.
    """
    idx = np.asarray(idx, dtype=np.int64)
    next_idx = np.asarray(next_idx, dtype=np.int64)
    rewards = np.asarray(rewards, dtype=float)
    discounts = np.asarray(discounts, dtype=float)
    w = np.ones(len(idx)) if weights is None else np.asarray(weights, dtype=float)
    A = np.zeros((dim, dim))
    b = np.zeros(dim)
    np.add.at(A, (idx, idx), w)
    live = next_idx >= 0
    np.add.at(A, (idx[live], next_idx[live]), -w[live] * discounts[live])
    np.add.at(b, idx, w * rewards)
    A[np.diag_indices(dim)] += ridge
    try:
        omega = np.linalg.solve(A, b)
    except np.linalg.LinAlgError as exc:
        raise InsufficientCoverage("insufficient coverage") from exc
    if not np.all(np.isfinite(omega)) or np.linalg.cond(A) > 1e12:
        raise InsufficientCoverage("insufficient coverage")
    return omega


def collect_skill_transitions(
    env: EnvModel,
    partition,
    skill_set: SkillSet,
    n_episodes: int,
    seed: int,
    horizon: int | None = None,
    start: str = "uniform",
    samples: str = "every_visit",
):
    """Skill-level samples (s, R~, s', t, terminated) along flat-policy trajectories.

    Episodes start uniformly over valid states (``start="uniform"``) or from
    the environment's start distribution (``start="env"``). With
    ``samples="initiation"`` only states where a skill starts contribute;
    ``"every_visit"`` also uses every state passed through during a skill's
    execution, paired with the remainder of that execution. Both are valid
    because skills are Markov inside their class. A skill cut short by the
    horizon still yields a valid sample since the flat policy is Markov.
    """
    if n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")
    if samples not in ("every_visit", "initiation"):
        raise ValueError("samples must be every_visit or initiation")
    every = samples == "every_visit"
    horizon = horizon or default_horizon(env.gamma)
    gamma = env.gamma
    skills = skill_set.skills
    class_of = partition.class_of
    out = []
    for ep in range(n_episodes):
        rng = substream(seed, ep)
        s = env.sample_state(rng) if start == "uniform" else env.initial_state(rng)
        left = horizon
        while left > 0:
            i = class_of(s)
            skill = skills[i]
            visited = [s]
            rewards = []
            done = False
            while left > 0:
                a = skill.sample(s, rng)
                s, r, done = env.step(s, a, rng)
                rewards.append(r)
                left -= 1
                if done or class_of(s) != i:
                    break
                visited.append(s)
            T = len(rewards)
            if every:
                acc = 0.0
                for t in range(T - 1, -1, -1):
                    acc = rewards[t] + gamma * acc
                    out.append((visited[t], acc, s, T - t, done))
            else:
                acc = 0.0
                for r in reversed(rewards):
                    acc = r + gamma * acc
                out.append((visited[0], acc, s, T, done))
            if done:
                break
    return out


def lstd_evaluate(
    env: EnvModel,
    partition,
    skill_set: SkillSet,
    features,
    n_episodes: int,
    seed: int,
    horizon: int | None = None,
    start: str = "uniform",
    ridge: float = DEFAULT_RIDGE,
    samples: str = "every_visit",
) -> LinearValueFn:
    """SMDP-LSTD value of the skill policy, discounting each sample by gamma**duration."""
    samples = collect_skill_transitions(env, partition, skill_set, n_episodes, seed, horizon, start, samples)
    gamma = env.gamma
    idx = [features.index(s) for s, *_ in samples]
    rewards = [r for _, r, _, _, _ in samples]
    next_idx = [-1 if term else features.index(y) for _, _, y, _, term in samples]
    discounts = [gamma ** t for _, _, _, t, _ in samples]
    return LinearValueFn(features, lstd_solve(features.dim, idx, rewards, next_idx, discounts, ridge))


class NnValueFn:
    """Fixed set of state-value pairs queried by nearest neighbour.

    Distances are Euclidean in box-normalized coordinates; equidistant
    points resolve to the lowest stored index.
    """

    def __init__(self, points, values, bounds):
        points = np.asarray(points, dtype=float)
        values = np.asarray(values, dtype=float)
        if points.ndim != 2 or len(points) == 0 or len(values) != len(points):
            raise ValueError("need a non-empty (N, D) point array and N values")
        if not np.all(np.isfinite(values)):
            raise ValueError("values must be finite")
        self.points = points
        self.values = values
        self.bounds = np.asarray(bounds, dtype=float)
        self._low = self.bounds[:, 0]
        self._span = self.bounds[:, 1] - self.bounds[:, 0]
        self.normalized = (points - self._low) / self._span
        self._tree = cKDTree(self.normalized)
        self._k = min(len(points), 8)
        self._vals = values.tolist()

    def __len__(self) -> int:
        return len(self.points)

    def nearest(self, s) -> int:
        q = (np.asarray(s, dtype=float) - self._low) / self._span
        if self._k == 1:
            return int(self._tree.query(q)[1])
        dist, idx = self._tree.query(q, k=self._k)
        best = dist[0]
        tied = idx[dist <= best]
        if len(tied) == self._k:
            # more ties than we asked for: fall back to a full scan
            d = np.sqrt(((self.normalized - q) ** 2).sum(axis=1))
            return int(np.flatnonzero(d <= d.min())[0])
        return int(tied.min())

    def __call__(self, s) -> float:
        return self._vals[self.nearest(s)]

    def with_values(self, values) -> "NnValueFn":
        return NnValueFn(self.points, values, self.bounds)


def nn_value(vf: NnValueFn, s) -> float:
    return vf(s)


def make_nn_value_fn(env: EnvModel, n_points: int = 1000, seed: int = 0) -> NnValueFn:
    """``n_points`` states drawn uniformly over the valid part of the box, values 0."""
    rng = substream(seed, 0)
    points = np.array([env.sample_state(rng) for _ in range(n_points)], dtype=float)
    return NnValueFn(points, np.zeros(n_points), env.bounds)


def refresh_nn_vf(
    vf: NnValueFn,
    env: EnvModel,
    partition,
    skill_set: SkillSet,
    rollouts_per_point: int,
    horizon: int,
    seed: int,
) -> NnValueFn:
    """Same points, values re-estimated by Monte Carlo rollouts of the skill policy."""
    if rollouts_per_point < 1:
        raise ValueError("rollouts_per_point must be >= 1")
    policy = SkillPolicy(partition, skill_set)
    values = np.empty(len(vf))
    for k, p in enumerate(vf.points):
        s = tuple(float(v) for v in p)
        values[k] = monte_carlo_value(env, policy, s, horizon, rollouts_per_point, derive_seed(seed, k))
    return vf.with_values(values)


class LstdEvaluator:
    def __init__(self, features, n_episodes: int = 100, horizon: int | None = None,
                 start: str = "uniform", ridge: float = DEFAULT_RIDGE, samples: str = "every_visit"):
        self.features = features
        self.samples = samples
        self.n_episodes = n_episodes
        self.horizon = horizon
        self.start = start
        self.ridge = ridge

    def __call__(self, env, partition, skill_set, seed):
        return lstd_evaluate(env, partition, skill_set, self.features, self.n_episodes, seed,
                             self.horizon, self.start, self.ridge, self.samples)


class NnEvaluator:
    """Keeps one point set per instance and refreshes its values on every call."""

    def __init__(self, n_points: int = 1000, rollouts_per_point: int = 1,
                 horizon: int | None = None, point_seed: int = 0):
        self.n_points = n_points
        self.rollouts_per_point = rollouts_per_point
        self.horizon = horizon
        self.point_seed = point_seed
        self.vf: NnValueFn | None = None

    def __call__(self, env, partition, skill_set, seed):
        if self.vf is None:
            self.vf = make_nn_value_fn(env, self.n_points, self.point_seed)
        horizon = self.horizon or default_horizon(env.gamma)
        self.vf = refresh_nn_vf(self.vf, env, partition, skill_set, self.rollouts_per_point, horizon, seed)
        return self.vf
