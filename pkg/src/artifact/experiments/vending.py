"""Vending experiment: cash gained per policy at horizon checkpoints."""

from ..envs.vending import VendingWorld
from ..errors import WorldTerminatedError
from ..policies.vending import VENDING_POLICIES, make_vending_controller
from ..rng import substream

HORIZONS = (100, 200, 400, 800, 1600)

__all__ = ["HORIZONS", "VENDING_POLICIES", "run_vending_trial"]


def run_vending_trial(seed, policy, horizons=HORIZONS):
    """Cash gained over the starting balance at each checkpoint; a bankrupt
    operator keeps its final balance."""
    world = VendingWorld(seed)
    ctrl = make_vending_controller(policy, world, substream(seed, "vending", "policy", policy))
    checkpoints = sorted(set(int(h) for h in horizons))
    values = {}
    start = world.cash
    for t in range(checkpoints[-1]):
        if not world.terminated:
            try:
                obs = world.step(ctrl.act(world, t))
            except WorldTerminatedError:
                pass
            else:
                ctrl.observe(obs)
                if world.terminated:
                    ctrl.log(t, "bankrupt")
        if t + 1 in checkpoints:
            values[t + 1] = world.cash - start
    return values, {"terminated": world.terminated}, ctrl.events
