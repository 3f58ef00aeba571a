from __future__ import annotations

import math

import numpy as np

from ..mdp import EnvModel
from .constants import MOUNTAIN_CAR as C

P_LOW, P_HIGH = C["position_bounds"]
V_LOW, V_HIGH = C["velocity_bounds"]
GOAL = C["goal_position"]


def mountain_car_step(s, a: int, rng=None):
    """a = 0 reverse, 1 coast, 2 forward. Reward 1 and done once p reaches the goal."""
    p, v = s
    v = v + C["force"] * (a - 1) - C["gravity"] * math.cos(3.0 * p)
    v = min(max(v, V_LOW), V_HIGH)
    p = p + v
    if p <= P_LOW:
        p = P_LOW
        if v < 0.0:
            v = 0.0
    elif p > P_HIGH:
        p = P_HIGH
    done = p >= GOAL
    return (p, v), (1.0 if done else 0.0), done


class MountainCar(EnvModel):
    name = "mountain_car"
    state_dim = 2
    action_count = 3
    action_names = ("reverse", "coast", "forward")

    def __init__(self, gamma: float = C["gamma"]):
        if not 0.0 <= gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        self.gamma = float(gamma)
        self.bounds = np.array([[P_LOW, P_HIGH], [V_LOW, V_HIGH]])

    def step(self, state, action, rng=None):
        return mountain_car_step(state, action, rng)

    def initial_state(self, rng):
        lo, hi = C["start_position"]
        return (float(rng.uniform(lo, hi)), 0.0)

    def is_start_valid(self, state):
        return state[0] < GOAL
