"""Hidden-treasure experiment: cumulative reward and visitation heatmaps."""

import numpy as np

from ..envs.tabular import TabularWorld
from ..envs.treasure import LAYOUT, OBS_SD, build_treasure_grid, corridor_navigator
from ..errors import ConfigError
from ..policies.base import PhaseSchedule
from ..policies.tabular import SIGMA0, ASop, EpsGreedy, FisherSep, FixedPolicy, KgSep, Sep, Thompson
from ..rng import substream

TREASURE_POLICIES = ("oracle", "sop", "eps_greedy", "l_eps_fixed", "asop", "kg_sep", "sep", "fisher_sep_r", "thompson")
N_UNITS = 100
HORIZON = 90
N_EXPLORE = 15
T_EXPLORE = 15


def treasure_schedule():
    return PhaseSchedule(t_pilot=0, t_explore=T_EXPLORE, eps_explore=1.0, replan_interval=5,
                         reexplore_threshold=np.inf)


def make_treasure_controller(name, true, sim, rng, obs_var=OBS_SD**2):
    ctrl = _make(name, true, sim, rng, obs_var)
    ctrl.state_rewards = True
    return ctrl


def _make(name, true, sim, rng, obs_var):
    if name == "oracle":
        return FixedPolicy(true, "oracle")
    if name == "sop":
        return FixedPolicy(sim, "sop")
    if name == "eps_greedy":
        return EpsGreedy(sim, obs_var, rng)
    if name == "l_eps_fixed":
        return EpsGreedy(sim, obs_var, rng, learning=True)
    if name == "asop":
        return ASop(sim, obs_var, rng)
    if name == "kg_sep":
        return KgSep(sim, obs_var, rng)
    if name == "thompson":
        return Thompson(sim, obs_var, rng)
    if name == "sep":
        return Sep(sim, obs_var, rng, treasure_schedule(), N_EXPLORE, navigator=corridor_navigator(LAYOUT))
    if name == "fisher_sep_r":
        sched = PhaseSchedule(t_pilot=0, t_explore=T_EXPLORE, eps_explore=1.0, replan_interval=10,
                              reexplore_threshold=np.inf)
        start = np.eye(sim.n_states)[LAYOUT.index(*LAYOUT.start)]
        return FisherSep(sim, obs_var, rng, sched, N_EXPLORE, stated_var=SIGMA0**2, explorer_start=start)
    raise ConfigError(f"unknown treasure policy {name!r}; choose from {', '.join(TREASURE_POLICIES)}")


def run_treasure_trial(seed, policy, horizons=(HORIZON,), n_units=N_UNITS):
    """Cumulative true reward at each horizon checkpoint, plus the visitation
    counts and controller events of the full run."""
    true, sim, layout = build_treasure_grid(substream(seed, "treasure", "build"))
    ctrl = make_treasure_controller(policy, true, sim, substream(seed, "treasure", "policy", policy))
    world = TabularWorld(true, n_units, layout.index(*layout.start), substream(seed, "treasure", "world"), OBS_SD)
    checkpoints = sorted(set(int(h) for h in horizons))
    values = {}
    b_mask = layout.region_b_mask()
    in_b = b_mask[world.states]
    for t in range(checkpoints[-1]):
        states = world.states.copy()
        actions = ctrl.act(states, t)
        rewards, nxt = world.step(actions)
        ctrl.observe(states, actions, rewards, nxt, t)
        entered = int(np.sum(b_mask[nxt] & ~in_b))
        if entered:
            ctrl.log(t, "corridor_crossing", str(entered))
        in_b = b_mask[nxt]
        if t + 1 in checkpoints:
            values[t + 1] = world.value
    return values, world.visits.reshape(layout.rows, layout.cols), ctrl.events
