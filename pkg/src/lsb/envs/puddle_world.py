from __future__ import annotations

import math

import numpy as np

from ..mdp import EnvModel
from .constants import PUDDLE_WORLD as C

MOVES = ((0.0, 1.0), (0.0, -1.0), (1.0, 0.0), (-1.0, 0.0))  # N, S, E, W


def _segment_distance(x, y, a, b) -> float:
    ax, ay = a
    bx, by = b
    dx, dy = bx - ax, by - ay
    t = ((x - ax) * dx + (y - ay) * dy) / (dx * dx + dy * dy)
    t = min(max(t, 0.0), 1.0)
    return math.hypot(x - (ax + t * dx), y - (ay + t * dy))


def puddle_depth(x: float, y: float) -> float:
    """Deepest penetration into either capsule puddle (0 outside both)."""
    r = C["puddle_radius"]
    return max(0.0, max(r - _segment_distance(x, y, a, b) for a, b in C["puddles"]))


def step_reward(x: float, y: float, gamma: float) -> float:
    cost = 1.0 + C["puddle_penalty"] * puddle_depth(x, y)
    return (1.0 - gamma) * (1.0 - cost / C["cost_max"])


def is_goal(x: float, y: float) -> bool:
    return x + y >= C["goal_sum"]


class PuddleWorld(EnvModel):
    name = "puddle_world"
    state_dim = 2
    action_count = 4
    action_names = ("N", "S", "E", "W")
    action_vectors = MOVES

    def __init__(self, gamma: float = C["gamma"]):
        if not 0.0 <= gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        self.gamma = float(gamma)
        self.bounds = np.array([[0.0, 1.0], [0.0, 1.0]])

    def step(self, state, action, rng):
        x, y = state
        dx, dy = MOVES[action]
        nx, ny = rng.normal(0.0, C["noise_std"], 2)
        x = min(max(x + C["step"] * dx + nx, 0.0), 1.0)
        y = min(max(y + C["step"] * dy + ny, 0.0), 1.0)
        if is_goal(x, y):
            return (x, y), 1.0, True
        return (x, y), step_reward(x, y, self.gamma), False

    def initial_state(self, rng):
        return self.sample_state(rng)

    def is_start_valid(self, state):
        return not is_goal(state[0], state[1])


def puddle_world_step(s, a, rng, gamma: float = C["gamma"]):
    return PuddleWorld(gamma).step(s, a, rng)
