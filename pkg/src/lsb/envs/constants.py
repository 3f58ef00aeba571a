"""Frozen dynamics and reward constants for the benchmark environments.

Every domain pays 1 on reaching its goal (and ends the episode). Puddle
World's native per-step cost c in [1, C_MAX] maps to the step reward
(1 - gamma) * (1 - c / C_MAX); with that choice the discounted return
equals 1 - (1 - gamma) / C_MAX * (discounted native cost), an affine
image of the native objective. Mountain Car and Pinball have a constant
native cost, which maps to step reward 0.
"""

MOUNTAIN_CAR = {
    "position_bounds": (-1.2, 0.6),
    "velocity_bounds": (-0.07, 0.07),
    "goal_position": 0.5,
    "force": 0.001,
    "gravity": 0.0025,
    "start_position": (-0.6, -0.4),
    "gamma": 0.99,
}

PUDDLE_WORLD = {
    "step": 0.05,
    "noise_std": 0.01,
    "goal_sum": 1.9,          # goal region x + y >= 1.9
    "puddles": (((0.1, 0.75), (0.45, 0.75)), ((0.45, 0.4), (0.45, 0.8))),
    "puddle_radius": 0.1,
    "puddle_penalty": 400.0,  # native cost 1 + 400 * depth
    "cost_max": 41.0,
    "gamma": 0.95,
}

PINBALL = {
    "dt": 0.05,
    "substeps": 20,
    "impulse": 0.2,
    "speed_limit": 1.0,
    "drag": 0.995,
    "restitution": 1.0,
    "max_contact_passes": 8,
    "gamma": 0.99,
}
