"""Multi-unit world driven by a tabular MDP with noisy reward readouts."""

import numpy as np

from ..errors import InvalidActionError, InvalidParameterError


class TabularWorld:
    """``n_units`` units moving through ``mdp``; every unit acts each step.

    Rewards are the MDP's expected reward plus Gaussian readout noise of
    standard deviation ``obs_sd``; ``value`` accumulates the expected rewards
    so trial values carry no readout noise.
    """

    def __init__(self, mdp, n_units, start, rng, obs_sd=0.0):
        if n_units < 1:
            raise InvalidParameterError("n_units must be at least 1")
        self.mdp = mdp
        self.rng = rng
        self.obs_sd = float(obs_sd)
        self.states = np.full(int(n_units), int(start), dtype=int)
        self.t = 0
        self.value = 0.0
        self.visits = np.zeros(mdp.n_states)
        np.add.at(self.visits, self.states, 1.0)
        self._cum = np.cumsum(mdp.transitions, axis=2)

    @property
    def n_units(self):
        return self.states.size

    def step(self, actions):
        actions = np.asarray(actions, dtype=int)
        if actions.shape != self.states.shape or np.any((actions < 0) | (actions >= self.mdp.n_actions)):
            raise InvalidActionError("one in-range action per unit is required")
        s = self.states
        mean_r = self.mdp.rewards[s, actions]
        noise = self.obs_sd * self.rng.standard_normal(s.size) if self.obs_sd > 0 else 0.0
        u = self.rng.random(s.size)
        cum = self._cum[s, actions]
        nxt = np.minimum((cum < u[:, None]).sum(axis=1), self.mdp.n_states - 1)
        self.value += float(mean_r.sum())
        self.states = nxt
        np.add.at(self.visits, nxt, 1.0)
        self.t += 1
        return mean_r + noise, nxt
