"""Episodic Skill MDP around one partition class, in sampled form.

Inside class ``i`` the base dynamics are unchanged. Any transition that
leaves the class, or ends the base episode, jumps to the absorbing terminal
``S_T`` and pays ``r + gamma * V(y)`` where ``y`` is the state reached in the
base MDP (``V(y) = 0`` if the base episode ended).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .mdp import EnvModel


class _Terminal:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "S_T"

    def __reduce__(self):
        return (_Terminal, ())


S_T = _Terminal()


@dataclass(frozen=True)
class SkillMdp:
    base_env: EnvModel
    partition: object
    class_index: int
    exit_value: Callable

    @property
    def gamma(self) -> float:
        return self.base_env.gamma

    @property
    def action_count(self) -> int:
        return self.base_env.action_count

    def reward_bound(self) -> float:
        g = self.gamma
        return 1.0 + g / (1.0 - g)

    def sample_start(self, rng: np.random.Generator, max_tries: int = 10000):
        """Uniform start state inside the class, skipping invalid or terminal states."""
        for _ in range(max_tries):
            s = self.partition.sample_in_class(self.class_index, rng)
            if self.base_env.is_start_valid(s):
                return s
        raise RuntimeError(f"class {self.class_index} has no valid start states")

    def step(self, s, a: int, rng: np.random.Generator):
        return skill_mdp_step(self, s, a, rng)


def build_skill_mdp(env: EnvModel, partition, i: int, value_fn: Callable) -> SkillMdp:
    """Skill MDP for class ``i``; ``value_fn`` is frozen into the exit rewards."""
    if not 0 <= i < partition.m:
        raise IndexError(f"class {i} outside [0, {partition.m})")
    return SkillMdp(env, partition, i, value_fn)


def skill_mdp_step(skill_mdp: SkillMdp, s, a: int, rng: np.random.Generator):
    """One sampled transition: ``(next_state or S_T, reward, done)``."""
    if s is S_T:
        raise ValueError("terminal state")
    env = skill_mdp.base_env
    y, r, done = env.step(s, a, rng)
    if done:
        return S_T, r, True
    if skill_mdp.partition.class_of(y) == skill_mdp.class_index:
        return y, r, False
    return S_T, r + env.gamma * skill_mdp.exit_value(y), True
