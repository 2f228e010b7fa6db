"""Controller interface shared by every world.

A controller sees the observed states of all units at time ``t`` and returns
one action per unit; after the world steps it ingests the batch of
observations. Controllers record ``(t, tag, payload)`` events.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np


class Phase(str, Enum):
    PILOT = "pilot"
    EXPLORE = "explore"
    EXPLOIT = "exploit"


@dataclass(frozen=True)
class PhaseSchedule:
    t_pilot: int = 5
    t_explore: int = 15
    eps_explore: float = 0.5
    replan_interval: int = 5
    reexplore_threshold: float = 0.8

    def __post_init__(self):
        from ..errors import InvalidParameterError

        if self.t_pilot < 0 or self.t_explore < 0:
            raise InvalidParameterError("phase lengths must be nonnegative")
        if not 0.0 <= self.eps_explore <= 1.0:
            raise InvalidParameterError("eps_explore must lie in [0, 1]")
        if self.replan_interval < 1:
            raise InvalidParameterError("replan_interval must be at least 1")

    def phase(self, t):
        if t < self.t_pilot:
            return Phase.PILOT
        if t < self.t_pilot + self.t_explore:
            return Phase.EXPLORE
        return Phase.EXPLOIT


class Controller:
    name = "controller"

    def __init__(self):
        self.events = []

    def log(self, t, tag, payload=""):
        self.events.append((int(t), str(tag), payload))

    def act(self, states, t):
        raise NotImplementedError

    def observe(self, states, actions, rewards, next_states, t):
        pass


def break_detector(recent, window=7, threshold=0.8, min_base=1.5):
    """Structural break in a daily series: the last ``window`` mean departs from
    the preceding ``window`` mean by more than ``threshold`` of the latter."""
    x = np.asarray(recent, dtype=float)
    if x.size < 2 * window:
        return False
    last = float(x[-window:].mean())
    prev = float(x[-2 * window : -window].mean())
    return prev > min_base and abs(last - prev) > threshold * prev
