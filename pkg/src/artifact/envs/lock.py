"""Combination lock and its stochastic-fork variant."""

import numpy as np
from scipy.stats import binom

from ..errors import InvalidParameterError
from ..mdp import TabularMDP

FORK_HALT_REWARD = 0.05


def lock_gamma(t_eff):
    return 1.0 - 1.0 / t_eff


def lock_mdp(swapped, gamma=None):
    """Chain ``s_0..s_T`` plus an absorbing fail state ``T + 1``.

    The correct action advances, the other fails; ``swapped[i]`` makes ``a_1``
    the correct action at ``s_i``. The terminal ``s_T`` pays 1 and absorbs.
    """
    swapped = np.asarray(swapped, dtype=bool)
    t = swapped.size
    if t < 1:
        raise InvalidParameterError("t_eff must be at least 1")
    n = t + 2
    fail = t + 1
    p = np.zeros((n, 2, n))
    r = np.zeros((n, 2))
    for i in range(t):
        good = 1 if swapped[i] else 0
        p[i, good, i + 1] = 1.0
        p[i, 1 - good, fail] = 1.0
    p[t, :, t] = 1.0
    r[t, :] = 1.0
    p[fail, :, fail] = 1.0
    return TabularMDP(r, p, lock_gamma(t) if gamma is None else gamma, r_max=1.0)


def draw_lock_errors(t_eff, c, n_draws, rng, method="stratified"):
    """Boolean ``[n_draws, t_eff]`` masks of simulator swaps at rate ``c / t_eff``.

    ``iid`` flips every state independently. ``stratified`` draws the error
    count by the inverse Binomial CDF at stratified uniforms (one per draw,
    randomly permuted) and places errors uniformly; each draw keeps the exact
    iid marginal law while the count histogram tracks the Binomial closely.
    """
    t_eff = int(t_eff)
    if t_eff < 1 or not 0 <= c <= t_eff:
        raise InvalidParameterError("need t_eff >= 1 and 0 <= c <= t_eff")
    eps = c / t_eff
    if method == "iid":
        return rng.random((n_draws, t_eff)) < eps
    if method != "stratified":
        raise InvalidParameterError("method must be 'stratified' or 'iid'")
    u = (rng.permutation(n_draws) + rng.random(n_draws)) / n_draws
    counts = np.maximum(binom.ppf(u, t_eff, eps), 0).astype(int)
    masks = np.zeros((n_draws, t_eff), dtype=bool)
    for i, k in enumerate(counts):
        if k:
            masks[i, rng.choice(t_eff, size=k, replace=False)] = True
    return masks


def build_combination_lock(t_eff, c, rng):
    """``(true, sim, swapped)``: truth advances on ``a_0``; the simulator swaps
    the two actions independently at each chain state w.p. ``c / t_eff``."""
    swapped = draw_lock_errors(t_eff, c, 1, rng, method="iid")[0]
    return lock_mdp(np.zeros(int(t_eff), dtype=bool)), lock_mdp(swapped), swapped


def sop_reaches(swapped):
    """The simulator-greedy policy reaches the terminal iff no state is swapped."""
    return not np.any(swapped)


def build_stochastic_fork(k, gamma=None, halt_reward=FORK_HALT_REWARD):
    """``(true, sim)`` for the fork of length ``k``.

    States ``s_0..s_k`` plus fail ``k + 1``. Before the fork ``a_0`` advances
    and ``a_1`` fails. At ``s_{k-1}`` the true ``a_0`` reaches ``s_k`` w.p. 1/2
    and returns to ``s_{k-2}`` otherwise, while the simulator puts all mass on
    the return; ``a_1`` halts there with a small reward so the simulator
    strictly prefers halting.
    """
    k = int(k)
    if k < 3:
        raise InvalidParameterError("fork length must be at least 3")
    g = lock_gamma(k) if gamma is None else gamma
    n = k + 2
    fail = k + 1
    p = np.zeros((n, 2, n))
    r = np.zeros((n, 2))
    for i in range(k - 1):
        p[i, 0, i + 1] = 1.0
        p[i, 1, fail] = 1.0
    p[k - 1, 0, k] = 0.5
    p[k - 1, 0, k - 2] = 0.5
    p[k - 1, 1, fail] = 1.0
    r[k - 1, 1] = halt_reward
    p[k, :, k] = 1.0
    r[k, :] = 1.0
    p[fail, :, fail] = 1.0
    true = TabularMDP(r, p, g, r_max=1.0)
    ps = p.copy()
    ps[k - 1, 0] = 0.0
    ps[k - 1, 0, k - 2] = 1.0
    return true, TabularMDP(r, ps, g, r_max=1.0)


def fork_step(mdp, state, action, rng):
    return int(rng.choice(mdp.n_states, p=mdp.transitions[state, action]))
