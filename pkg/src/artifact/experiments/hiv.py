"""HIV testing experiment: cumulative cases found per policy."""

from ..envs.hiv import HivConfig, HivWorld
from ..policies.hiv import HIV_POLICIES, make_hiv_controller
from ..rng import substream

HORIZONS = (50, 100, 200, 300, 400)

__all__ = ["HIV_POLICIES", "HORIZONS", "run_hiv_trial"]


def run_hiv_trial(seed, policy, horizons=(400,), cfg=None):
    """Cumulative cases at each horizon checkpoint, plus crossing counts and events."""
    world = HivWorld(seed, cfg or HivConfig())
    ctrl = make_hiv_controller(policy, world, substream(seed, "hiv", "policy", policy))
    checkpoints = sorted(set(int(h) for h in horizons))
    values = {}
    for t in range(checkpoints[-1]):
        moves = ctrl.act(world, t)
        before = world.crossings
        obs = world.step(moves)
        ctrl.observe(obs)
        if world.crossings > before:
            ctrl.log(t, "corridor_crossing", str(world.crossings - before))
        if t + 1 in checkpoints:
            values[t + 1] = world.cases
    return values, {"crossings": world.crossings, "team_days_b": world.team_days_b}, ctrl.events
