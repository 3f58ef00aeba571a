"""The bootstrapping loop: evaluate the skill policy, build one Skill MDP,
solve it, swap the skill in, repeat for every class and iteration."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from .mdp import EnvModel, derive_seed, substream
from .oracle import min_iterations
from .skill_mdp import build_skill_mdp
from .skills import FeatureMap, SkillSet

__all__ = ["LsbConfig", "LsbResult", "UpdateRecord", "LsbUpdateError", "run_lsb", "min_iterations",
           "goal_first_order"]

ORDER_SAMPLES = 64


@dataclass(frozen=True)
class LsbConfig:
    iterations: int
    evaluator: Callable            # (env, partition, skill_set, seed) -> value fn
    learner: Callable              # (skill_mdp, skill, seed) -> theta
    order: str | Sequence[int] = "index"
    evaluation: str = "per_update"
    epsilon: float | None = None

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.evaluation not in ("per_update", "per_sweep"):
            raise ValueError("evaluation must be per_update or per_sweep")
        if isinstance(self.order, str):
            if self.order not in ("index", "goal_first"):
                raise ValueError("order must be index, goal_first or an explicit permutation")
        else:
            object.__setattr__(self, "order", tuple(int(i) for i in self.order))


@dataclass
class UpdateRecord:
    iteration: int
    skill: int
    pre_return: Any
    post_return: Any
    eta: float | None
    wall_ms: float


@dataclass
class LsbResult:
    skill_set: SkillSet
    partition: object
    order: tuple
    log: list = field(default_factory=list)
    value_fn: Callable | None = None


class LsbUpdateError(RuntimeError):
    def __init__(self, iteration: int, skill: int, cause: Exception):
        super().__init__(f"iteration {iteration}, skill {skill}: {cause}")
        self.iteration = iteration
        self.skill = skill
        self.cause = cause


def _class_states(env: EnvModel, partition, i: int, rng, n: int) -> list:
    members = getattr(partition, "members", None)
    if members is not None:
        return [s for s in members[i] if env.is_start_valid(s)]
    out = []
    for _ in range(n * 20):
        s = partition.sample_in_class(i, rng)
        if env.is_start_valid(s):
            out.append(s)
            if len(out) == n:
                break
    return out


def goal_first_order(env: EnvModel, partition, value_fn, seed: int, n_samples: int = ORDER_SAMPLES) -> tuple:
    """Classes sorted by decreasing mean value over sampled member states; ties keep index order."""
    rng = substream(seed, 0)
    means = []
    for i in range(partition.m):
        states = _class_states(env, partition, i, rng, n_samples)
        means.append(float(np.mean([value_fn(s) for s in states])) if states else -np.inf)
    return tuple(int(i) for i in sorted(range(partition.m), key=lambda i: -means[i]))


def _resolve_order(config: LsbConfig, env, partition, value_fn, seed) -> tuple:
    m = partition.m
    if config.order == "index":
        return tuple(range(m))
    if config.order == "goal_first":
        return goal_first_order(env, partition, value_fn, derive_seed(seed, 1))
    order = tuple(config.order)
    if sorted(order) != list(range(m)):
        raise ValueError(f"order {order} is not a permutation of range({m})")
    return order


def run_lsb(
    env: EnvModel,
    partition,
    config: LsbConfig,
    seed: int,
    features: FeatureMap | None = None,
    init_skills: SkillSet | None = None,
    score_fn: Callable[[SkillSet], Any] | None = None,
    eta_fn: Callable | None = None,
    on_update: Callable | None = None,
) -> LsbResult:
    """Run ``config.iterations`` sweeps of one-skill-at-a-time updates.

    ``score_fn`` (optional) scores each intermediate skill set, typically
    the mean return from the start distribution; ``eta_fn(skill_mdp,
    theta)`` (optional) reports the learner's error when an exact solution
    is available. ``on_update(record, value_fn)`` sees every update
    together with the value function its Skill MDP was built from.
    """
    if init_skills is None:
        if features is None:
            raise ValueError("need features or init_skills")
        init_skills = SkillSet.uniform(partition.m, features)
    if init_skills.m != partition.m:
        raise ValueError(f"partition has {partition.m} classes but {init_skills.m} skills were given")
    bounds = getattr(partition, "bounds", None)
    if bounds is not None and not np.allclose(bounds, env.bounds):
        raise ValueError("partition bounds do not match the environment")

    skill_set = init_skills
    value_fn = None
    if config.order == "goal_first":
        value_fn = config.evaluator(env, partition, skill_set, derive_seed(seed, 0, 0, 0))
    order = _resolve_order(config, env, partition, value_fn, seed)
    result = LsbResult(skill_set, partition, order)
    prev_score = score_fn(skill_set) if score_fn else None

    for k in range(1, config.iterations + 1):
        for pos, i in enumerate(order):
            t0 = time.perf_counter()
            try:
                if config.evaluation == "per_update" or pos == 0:
                    value_fn = config.evaluator(env, partition, skill_set, derive_seed(seed, k, i, 0))
                skill_mdp = build_skill_mdp(env, partition, i, value_fn)
                theta = config.learner(skill_mdp, skill_set[i], derive_seed(seed, k, i, 1))
                eta = eta_fn(skill_mdp, theta) if eta_fn else None
                skill_set = skill_set.replace(i, theta)
            except Exception as exc:
                raise LsbUpdateError(k, i, exc) from exc
            wall_ms = (time.perf_counter() - t0) * 1000.0
            score = score_fn(skill_set) if score_fn else None
            record = UpdateRecord(k, i, prev_score, score, eta, wall_ms)
            result.log.append(record)
            if on_update:
                on_update(record, value_fn)
            prev_score = score
    result.skill_set = skill_set
    result.value_fn = value_fn
    return result
