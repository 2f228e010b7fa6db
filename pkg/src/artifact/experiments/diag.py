"""Simulator diagnostics on the hidden-treasure grid.

A randomized pilot (uniform actions, state-only) walks ``n_units`` units for
``pilot_steps`` steps in the true world; its residuals against the simulator
feed the post-pilot bound and the reward/transition crossover horizon.
"""

import numpy as np

from ..diagnostics import (
    ErrorProfile,
    PilotLog,
    crossover_horizon,
    post_pilot_bound,
    post_pilot_residuals,
    sim_lemma_bound,
)
from ..envs.tabular import TabularWorld
from ..envs.treasure import OBS_SD, build_treasure_grid
from ..mdp import policy_values, value_iteration
from ..rng import substream

BOUND_HEADER = ("quantity", "value")


def run_diag(seed, pilot_steps=10, n_units=100, delta=0.05):
    """``(residual report, [(quantity, value), ...])`` for one seeded grid."""
    true, sim, layout = build_treasure_grid(substream(seed, "treasure", "build"))
    start = layout.index(*layout.start)
    world = TabularWorld(true, n_units, start, substream(seed, "diag", "pilot"), OBS_SD)
    rng = substream(seed, "diag", "actions")
    log = PilotLog(true.n_states)
    for _ in range(int(pilot_steps)):
        s = world.states.copy()
        a = rng.integers(true.n_actions, size=s.size)
        r, s2 = world.step(a)
        for x in zip(s, a, r, s2):
            log.add(*x)
    report = post_pilot_residuals(sim, log)
    profile = ErrorProfile.from_models(true, sim)
    counts = np.zeros(true.rewards.shape)
    for key in log.pairs():
        counts[key] = log.count(key)
    covered = [key for key in log.pairs() if log.count(key) > 0]
    sop = value_iteration(sim).policy()
    gap = float(np.max(np.abs(policy_values(true, sop) - policy_values(sim, sop))))
    bound = sim_lemma_bound(profile, true.gamma, true.r_max)
    after = post_pilot_bound(covered, counts, profile, delta, true.gamma, true.r_max, true.n_states)
    eps_r = report.pooled_eps_r if np.isfinite(report.pooled_eps_r) else 0.0
    eps_p = report.pooled_eps_p if np.isfinite(report.pooled_eps_p) else 0.0
    rows = [
        ("sop_value_gap_sup", gap),
        ("sim_lemma_bound", bound),
        ("post_pilot_bound", after),
        ("covered_pairs", float(len(covered))),
        ("pooled_eps_r_hat", eps_r),
        ("pooled_eps_p_hat", eps_p),
        ("crossover_horizon", crossover_horizon(eps_r, eps_p, true.gamma, true.r_max)),
        ("t_eff", 1.0 / (1.0 - true.gamma)),
    ]
    return report, rows
