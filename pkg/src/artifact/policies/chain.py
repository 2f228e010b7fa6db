"""Controllers for the combination lock.

Units traverse the chain one after another. Transitions are deterministic, so
a single observed outcome at a state pins its correct action; the knowledge
table ``known[s]`` (``-1`` while unknown) is the exact posterior mode of a
belief with point-mass outcomes. Each controller fixes how a unit acts at a
state given that table and whether the unit's outcome is learned from.
"""

from dataclasses import dataclass

import numpy as np

from ..design import DesignInputs, minimize_pvv
from ..envs.lock import lock_mdp
from ..errors import ConfigError
from ..mdp import value_iteration

CHAIN_POLICIES = (
    "oracle", "sop", "asop", "asop_pilot", "eps_greedy", "l_eps_fixed",
    "l_eps_adaptive", "kg_sep", "sep", "fisher_sep_r",
)
EPS = 0.1
N_PILOT = 3


@dataclass
class ChainContext:
    """What a unit sees: simulator actions, current knowledge, unit index."""

    sim_action: np.ndarray
    known: np.ndarray
    n_units: int
    n_explore: int


class ChainController:
    learns = True

    def act(self, ctx, unit, s, rng):
        raise NotImplementedError

    def learns_from(self, ctx, unit):
        return self.learns


class Oracle(ChainController):
    learns = False

    def act(self, ctx, unit, s, rng):
        return 0


class Sop(ChainController):
    learns = False

    def act(self, ctx, unit, s, rng):
        return int(ctx.sim_action[s])


def _exploit(ctx, s):
    k = ctx.known[s]
    return int(ctx.sim_action[s]) if k < 0 else int(k)


class ASop(ChainController):
    """Posterior-mode action: the learned one if known, else the simulator's."""

    def act(self, ctx, unit, s, rng):
        return _exploit(ctx, s)


class ASopPilot(ChainController):
    def __init__(self, n_pilot=N_PILOT):
        self.n_pilot = n_pilot

    def act(self, ctx, unit, s, rng):
        if unit < self.n_pilot:
            return int(rng.integers(2))
        return _exploit(ctx, s)


class EpsGreedy(ChainController):
    """``eps`` uniform exploration around a base action.

    Without learning the base is the simulator action; with learning it is the
    posterior mode. ``adaptive`` decays ``eps`` linearly to 0 over the units.
    """

    def __init__(self, eps=EPS, learning=False, adaptive=False):
        self.eps, self.learns, self.adaptive = eps, learning, adaptive

    def eps_for(self, unit, n_units):
        if not self.adaptive:
            return self.eps
        return self.eps * (1.0 - unit / max(n_units - 1, 1))

    def act(self, ctx, unit, s, rng):
        if rng.random() < self.eps_for(unit, ctx.n_units):
            return int(rng.integers(2))
        return _exploit(ctx, s) if self.learns else int(ctx.sim_action[s])


class KgSep(ChainController):
    """Unknown states have equal earn and learn terms for both actions, so the
    lowest-index action ``a_0`` is tried first; known states are exploited."""

    def act(self, ctx, unit, s, rng):
        k = ctx.known[s]
        return 0 if k < 0 else int(k)


class Sep(ChainController):
    """Explorers act uniformly at unknown states; exploiters deploy the policy
    learned by the explorers (simulator action where still unknown)."""

    def learns_from(self, ctx, unit):
        return unit < ctx.n_explore

    def act(self, ctx, unit, s, rng):
        if unit < ctx.n_explore and ctx.known[s] < 0:
            return int(rng.integers(2))
        return _exploit(ctx, s)


class FisherSep(ChainController):
    """Explorers sample the PVV-minimizing design at unknown states; every
    unit's outcome is learned from."""

    def __init__(self, design_probs):
        self.design_probs = design_probs

    def act(self, ctx, unit, s, rng):
        if unit < ctx.n_explore and ctx.known[s] < 0:
            p0 = self.design_probs[s, 0]
            if ctx.sim_action[s] == 1:
                p0 = 1.0 - p0
            return 0 if rng.random() < p0 else 1
        return _exploit(ctx, s)


_DESIGN_CACHE = {}


def chain_design(t_eff, n_iter=60, seed=0):
    """PVV-minimizing explorer on an error-free simulator chain, targeting its
    greedy policy. Swapped states reuse it with the action labels exchanged,
    which is exact because the chain is symmetric under that relabeling."""
    key = (int(t_eff), int(n_iter), int(seed))
    if key not in _DESIGN_CACHE:
        sim = lock_mdp(np.zeros(int(t_eff), dtype=bool))
        target = value_iteration(sim).policy()
        inputs = DesignInputs(
            theta_var=np.ones(sim.rewards.shape), tau_obs=1.0, dirichlet_conc=np.inf,
            horizon_eff=sim.t_eff, init=np.eye(sim.n_states)[0],
        )
        pi = minimize_pvv(sim, target, inputs, n_iter=n_iter, rng=np.random.default_rng(seed), mode="reward")
        _DESIGN_CACHE[key] = pi.probs.copy()
    return _DESIGN_CACHE[key]


def make_chain_controller(name, t_eff):
    if name == "oracle":
        return Oracle()
    if name == "sop":
        return Sop()
    if name == "asop":
        return ASop()
    if name == "asop_pilot":
        return ASopPilot()
    if name == "eps_greedy":
        return EpsGreedy()
    if name == "l_eps_fixed":
        return EpsGreedy(learning=True)
    if name == "l_eps_adaptive":
        return EpsGreedy(learning=True, adaptive=True)
    if name == "kg_sep":
        return KgSep()
    if name == "sep":
        return Sep()
    if name == "fisher_sep_r":
        return FisherSep(chain_design(t_eff))
    raise ConfigError(f"unknown chain policy {name!r}; choose from {', '.join(CHAIN_POLICIES)}")


def run_lock(swapped, controller, n_units, rng, n_explore=None):
    """Fraction of ``n_units`` sequential units that reach the terminal."""
    swapped = np.asarray(swapped, dtype=bool)
    t = swapped.size
    correct = np.zeros(t, dtype=int)
    sim_action = swapped.astype(int)
    if n_explore is None:
        n_explore = min(t + 1, n_units // 10)
    ctx = ChainContext(sim_action, np.full(t, -1), n_units, n_explore)
    reached = 0
    for unit in range(n_units):
        learn = controller.learns_from(ctx, unit)
        ok = True
        for s in range(t):
            a = controller.act(ctx, unit, s, rng)
            if learn:
                ctx.known[s] = correct[s]
            if a != correct[s]:
                ok = False
                break
        reached += ok
    return reached / n_units
