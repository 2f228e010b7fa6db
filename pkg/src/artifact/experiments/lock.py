"""Combination-lock experiment: reach fraction of sequential units per policy."""

from functools import lru_cache

import numpy as np

from ..envs.lock import draw_lock_errors
from ..policies.chain import CHAIN_POLICIES, make_chain_controller, run_lock
from ..rng import substream

T_EFFS = (5, 10, 15, 20, 30)
C_VALUES = (0.25, 0.5, 1.0, 2.0)
N_UNITS = 50
N_DRAWS = 300

__all__ = ["CHAIN_POLICIES", "C_VALUES", "N_DRAWS", "N_UNITS", "T_EFFS", "lock_masks", "run_lock_trial", "sop_closed_form"]


def sop_closed_form(c, t_eff):
    """Probability the simulator is right at every chain state: ``(1 - c/T)**T``."""
    return (1.0 - c / t_eff) ** t_eff


@lru_cache(maxsize=256)
def lock_masks(t_eff, c, n_draws, seed_base):
    """Simulator swap masks for one ``(t_eff, c)`` cell, stratified over draws."""
    rng = substream(seed_base, "lock", "draws", f"{float(c):g}", int(t_eff))
    masks = draw_lock_errors(int(t_eff), float(c), int(n_draws), rng, method="stratified")
    masks.flags.writeable = False
    return masks


def run_lock_trial(trial_index, seed, policy, t_effs=T_EFFS, c=1.0, n_units=N_UNITS, n_draws=N_DRAWS, seed_base=42):
    """Reach fraction on draw ``trial_index`` at every ``t_eff``; oracle reaches always."""
    values = {}
    for t in sorted(set(int(x) for x in t_effs)):
        swapped = lock_masks(t, float(c), int(n_draws), int(seed_base))[int(trial_index)]
        ctrl = make_chain_controller(policy, t)
        rng = substream(seed, "lock", f"{float(c):g}", t, "policy", policy)
        values[t] = run_lock(np.asarray(swapped), ctrl, int(n_units), rng)
    return values, {}, []
