"""Benchmark environments and a name registry."""

from .constants import MOUNTAIN_CAR, PINBALL, PUDDLE_WORLD
from .mountain_car import MountainCar, mountain_car_step
from .pinball import (LayoutError, Pinball, PinballLayout, bundled_layout, load_pinball_layout,
                      pinball_step)
from .puddle_world import PuddleWorld, puddle_world_step

ENV_NAMES = ("mountain_car", "puddle_world", "pinball_maze", "pinball_world")


def make_env(name: str, gamma: float | None = None):
    kw = {} if gamma is None else {"gamma": gamma}
    if name == "mountain_car":
        return MountainCar(**kw)
    if name == "puddle_world":
        return PuddleWorld(**kw)
    if name == "pinball_maze":
        return Pinball("maze_world", **kw)
    if name == "pinball_world":
        return Pinball("pinball_world", **kw)
    raise ValueError(f"unknown environment {name!r}; choose from {', '.join(ENV_NAMES)}")


__all__ = [
    "ENV_NAMES", "LayoutError", "MOUNTAIN_CAR", "MountainCar", "PINBALL", "PUDDLE_WORLD", "Pinball",
    "PinballLayout", "PuddleWorld", "bundled_layout", "load_pinball_layout", "make_env",
    "mountain_car_step", "pinball_step", "puddle_world_step",
]
