"""Parametric softmax skills, skill execution and the flattened skill policy."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .mdp import EnvModel, Trace, sample_index

SKILL_FORMAT_VERSION = 1


class FeatureMap:
    """zeta(s, a): policy features, exposed as an ``(action_count, dim)`` matrix."""

    kind = "custom"
    dim: int
    action_count: int
    state_dependent = True

    def matrix(self, s) -> np.ndarray:
        raise NotImplementedError

    def logits(self, theta: np.ndarray, s) -> np.ndarray:
        return self.matrix(s) @ theta

    def score(self, theta, s, a: int, probs=None) -> np.ndarray:
        """zeta(s, a) - sum_b pi(b|s) zeta(s, b), the gradient of log pi(a|s)."""
        Z = self.matrix(s)
        if probs is None:
            probs = softmax(Z @ theta)
        return Z[a] - probs @ Z


class ActionFeatures(FeatureMap):
    """One-hot action features: the policy ignores the state."""

    kind = "action"
    state_dependent = False

    def __init__(self, action_count: int):
        self.action_count = int(action_count)
        self.dim = self.action_count
        self._eye = np.eye(self.action_count)

    def matrix(self, s=None) -> np.ndarray:
        return self._eye

    def logits(self, theta, s=None):
        return np.asarray(theta, dtype=float)

    def score(self, theta, s, a, probs=None):
        if probs is None:
            probs = softmax(theta)
        out = -np.asarray(probs, dtype=float)
        out[a] += 1.0
        return out


class PolynomialFeatures(FeatureMap):
    """Block features ``<1, x_1, ..., x_D>`` per action on box-normalized states."""

    kind = "polynomial"

    def __init__(self, bounds, action_count: int):
        self.bounds = np.asarray(bounds, dtype=float)
        self.action_count = int(action_count)
        self.base_dim = len(self.bounds) + 1
        self.dim = self.action_count * self.base_dim
        self._low = self.bounds[:, 0]
        self._span = self.bounds[:, 1] - self.bounds[:, 0]

    def base(self, s) -> np.ndarray:
        out = np.empty(self.base_dim)
        out[0] = 1.0
        out[1:] = (np.asarray(s, dtype=float) - self._low) / self._span
        return out

    def matrix(self, s) -> np.ndarray:
        return np.kron(np.eye(self.action_count), self.base(s))

    def logits(self, theta, s):
        return np.asarray(theta, dtype=float).reshape(self.action_count, self.base_dim) @ self.base(s)

    def score(self, theta, s, a, probs=None):
        base = self.base(s)
        if probs is None:
            probs = softmax(np.asarray(theta, dtype=float).reshape(self.action_count, self.base_dim) @ base)
        w = -np.asarray(probs, dtype=float)
        w[a] += 1.0
        return np.outer(w, base).ravel()


class TabularFeatures(FeatureMap):
    """One-hot (state, action) features for integer states."""

    kind = "tabular"

    def __init__(self, n_states: int, action_count: int):
        self.n_states = int(n_states)
        self.action_count = int(action_count)
        self.dim = self.n_states * self.action_count

    def matrix(self, s) -> np.ndarray:
        out = np.zeros((self.action_count, self.dim))
        base = int(s) * self.action_count
        out[np.arange(self.action_count), base + np.arange(self.action_count)] = 1.0
        return out

    def logits(self, theta, s):
        base = int(s) * self.action_count
        return np.asarray(theta, dtype=float)[base:base + self.action_count]

    def score(self, theta, s, a, probs=None):
        if probs is None:
            probs = softmax(self.logits(theta, s))
        out = np.zeros(self.dim)
        base = int(s) * self.action_count
        out[base:base + self.action_count] = -np.asarray(probs, dtype=float)
        out[base + a] += 1.0
        return out


def softmax(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=float)
    shifted = z - z.max()
    if not np.all(np.isfinite(shifted)):
        raise ValueError("non-finite logits")
    e = np.exp(shifted)
    return e / e.sum()


def softmax_action_probs(theta, feature_map: FeatureMap, s, action_count: int | None = None) -> np.ndarray:
    """pi_theta(.|s) = softmax(theta . zeta(s, .))."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (feature_map.dim,):
        raise ValueError(f"theta has shape {theta.shape}, expected ({feature_map.dim},)")
    if action_count is not None and action_count != feature_map.action_count:
        raise ValueError("action_count does not match the feature map")
    return softmax(feature_map.logits(theta, s))


@dataclass(frozen=True, eq=False)
class Skill:
    theta: np.ndarray
    class_index: int
    features: FeatureMap

    def __post_init__(self):
        theta = np.array(self.theta, dtype=float)
        if theta.shape != (self.features.dim,):
            raise ValueError(f"theta has shape {theta.shape}, expected ({self.features.dim},)")
        if not np.all(np.isfinite(theta)):
            raise ValueError("theta must be finite")
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)

    @cached_property
    def _fixed_probs(self) -> list[float] | None:
        if self.features.state_dependent:
            return None
        return softmax(self.features.logits(self.theta, None)).tolist()

    def probs(self, s) -> np.ndarray:
        fixed = self._fixed_probs
        if fixed is not None:
            return np.array(fixed)
        return softmax(self.features.logits(self.theta, s))

    def sample(self, s, rng: np.random.Generator) -> int:
        fixed = self._fixed_probs
        if fixed is None:
            fixed = softmax(self.features.logits(self.theta, s))
        return sample_index(fixed, rng.random())


@dataclass(frozen=True)
class SkillSet:
    skills: tuple

    def __post_init__(self):
        skills = tuple(self.skills)
        for i, sk in enumerate(skills):
            if sk.class_index != i:
                raise ValueError(f"skill at position {i} has class_index {sk.class_index}")
        object.__setattr__(self, "skills", skills)

    @classmethod
    def uniform(cls, m: int, features: FeatureMap) -> "SkillSet":
        """m skills with theta = 0, i.e. uniform action distributions."""
        return cls(tuple(Skill(np.zeros(features.dim), i, features) for i in range(m)))

    @property
    def m(self) -> int:
        return len(self.skills)

    @property
    def features(self) -> FeatureMap:
        return self.skills[0].features

    def __getitem__(self, i: int) -> Skill:
        return self.skills[i]

    def __len__(self) -> int:
        return len(self.skills)

    def replace(self, i: int, theta) -> "SkillSet":
        skills = list(self.skills)
        skills[i] = Skill(np.asarray(theta, dtype=float), i, self.skills[i].features)
        return SkillSet(tuple(skills))


class SkillPolicy:
    """The flat policy pi(.|s) = pi_{mu(s)}(.|s) of a (partition, skill set) pair."""

    def __init__(self, partition, skill_set: SkillSet):
        if partition.m != skill_set.m:
            raise ValueError(f"partition has {partition.m} classes but skill set has {skill_set.m} skills")
        self.partition = partition
        self.skill_set = skill_set
        self._class_of = partition.class_of
        self._skills = skill_set.skills

    def __call__(self, s) -> np.ndarray:
        return self._skills[self._class_of(s)].probs(s)

    def sample(self, s, rng) -> int:
        return self._skills[self._class_of(s)].sample(s, rng)


def flatten_skill_policy(partition, skill_set: SkillSet, s) -> np.ndarray:
    return SkillPolicy(partition, skill_set)(s)


@dataclass
class SkillExecutionResult:
    discounted_reward: float
    exit_state: object
    duration: int
    terminated_episode: bool
    trace: Trace | None = field(default=None, repr=False)


def execute_skill(
    env: EnvModel,
    partition,
    skill: Skill,
    s0,
    max_steps: int,
    rng: np.random.Generator,
    record: bool = False,
) -> SkillExecutionResult:
    """Run ``skill`` from ``s0`` until it leaves its class, the episode ends, or ``max_steps``."""
    i = skill.class_index
    if partition.class_of(s0) != i:
        raise ValueError("skill initialized outside its class")
    if max_steps < 1:
        raise ValueError("max_steps must be >= 1")
    gamma = env.gamma
    class_of = partition.class_of
    steps = [] if record else None
    total = 0.0
    disc = 1.0
    s = s0
    done = False
    t = 0
    while t < max_steps:
        a = skill.sample(s, rng)
        s_next, r, done = env.step(s, a, rng)
        t += 1
        total += disc * r
        disc *= gamma
        if record:
            steps.append((s, a, r, s_next, done))
        s = s_next
        if done or class_of(s) != i:
            break
    return SkillExecutionResult(total, s, t, bool(done), Trace(steps) if record else None)


def dump_skill_set(skill_set: SkillSet) -> str:
    """Text form of a skill set; floats use 17 significant digits for exact round-trip."""
    feats = skill_set.features
    lines = [
        "# lsb skill set",
        f"version {SKILL_FORMAT_VERSION}",
        f"features {feats.kind} {feats.dim} {feats.action_count}",
    ]
    for sk in skill_set.skills:
        vals = " ".join(f"{v:.17g}" for v in sk.theta)
        lines.append(f"skill {sk.class_index} {feats.kind} {sk.theta.size} {vals}".rstrip())
    return "\n".join(lines) + "\n"


def load_skill_set(text: str, features: FeatureMap) -> SkillSet:
    version = None
    skills = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        key = parts[0]
        if key == "version":
            version = int(parts[1])
            if version != SKILL_FORMAT_VERSION:
                raise ValueError(f"line {lineno}: unsupported skill format version {version}")
        elif key == "features":
            kind, dim = parts[1], int(parts[2])
            if kind != features.kind or dim != features.dim:
                raise ValueError(
                    f"line {lineno}: file holds {kind}/{dim} features, expected {features.kind}/{features.dim}"
                )
        elif key == "skill":
            idx, kind, n = int(parts[1]), parts[2], int(parts[3])
            vals = [float(v) for v in parts[4:]]
            if kind != features.kind or n != len(vals) or n != features.dim:
                raise ValueError(f"line {lineno}: malformed skill record")
            skills.append(Skill(np.array(vals), idx, features))
        else:
            raise ValueError(f"line {lineno}: unknown record {key!r}")
    if version is None:
        raise ValueError("missing version record")
    return SkillSet(tuple(sorted(skills, key=lambda sk: sk.class_index)))
