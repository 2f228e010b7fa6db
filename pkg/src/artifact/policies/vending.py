"""Stocking and pricing controllers for the vending supply chain.

Every controller holds a belief about each slot's daily demand at the
exploitation price and stocks to twice that rate at 2.5x wholesale.
Pilot and exploration days stock a machine to capacity at 90% of the lowest
segment willingness to pay, so its sales are uncensored. Sales seen at a
non-standard price are rescaled to the exploitation price through the
simulator's purchase model.
"""

from collections import deque

import numpy as np
from scipy.stats import norm, poisson

from ..envs.vending import (
    CAPACITY,
    N_M,
    N_P,
    WHOLESALE,
    VendingAction,
    exploit_price,
    explore_price,
    sim_product_rates,
)
from ..errors import ConfigError
from .base import Controller, break_detector
from .optimism import OptimismAgent

VENDING_POLICIES = (
    "oracle", "sop", "eps_greedy", "l_eps_fixed", "l_eps_adaptive", "asop", "asop_pilot",
    "kg_sep", "sep", "fisher_sep_r", "thompson", "ucrl2", "ucbvi",
)
PRIOR_STRENGTH = 10.0
T_PILOT = 5
T_EXPLORE_END = 20
WINDOW = 10
BONFERRONI_ALPHA = 0.05 / (N_M * N_P)
GAMMA = 0.95


def stock_targets(rate):
    return np.clip(np.ceil(2.0 * np.asarray(rate)), 0, CAPACITY)


class VendingController(Controller):
    name = "vending"

    def __init__(self, world, rng):
        super().__init__()
        self.rng = rng
        self.sim_rate = sim_product_rates()
        self.price_scale = {}

    def exploit_action(self, rate):
        tgt = stock_targets(rate)
        return VendingAction(tgt, exploit_price(), 3.0 * tgt.sum(axis=0))

    def overstock(self, action, mask):
        """Stock ``mask`` slots to capacity at the exploration price."""
        mask = np.broadcast_to(mask, (N_M, N_P))
        action.vm_target = np.where(mask, CAPACITY, action.vm_target)
        action.price = np.where(mask, explore_price(), action.price)
        return action

    def standardize(self, sales, price):
        """Sales rescaled to the exploitation price under the simulator's purchase model."""
        key = price.tobytes()
        if key not in self.price_scale:
            self.price_scale[key] = self.sim_rate / sim_product_rates(price)
        return sales * self.price_scale[key]

    def act(self, world, t):
        raise NotImplementedError

    def observe(self, obs):
        pass


class Oracle(VendingController):
    """Stocks to twice the true expected demand of the day."""

    name = "oracle"

    def act(self, world, t):
        return self.exploit_action(world.expected_demand())


class Sop(VendingController):
    name = "sop"

    def act(self, world, t):
        return self.exploit_action(self.sim_rate)


class GammaBelief:
    """Gamma-Poisson belief on each slot's daily rate, prior centered on the simulator."""

    def __init__(self, prior_mean, strength):
        self.a = np.asarray(prior_mean, dtype=float) * strength
        self.b = np.full(np.shape(prior_mean), float(strength))

    def update(self, y, mask):
        self.a = np.where(mask, self.a + y, self.a)
        self.b = np.where(mask, self.b + 1.0, self.b)

    @property
    def mean(self):
        return self.a / self.b

    @property
    def variance(self):
        return self.a / self.b**2

    def sample(self, rng):
        return rng.gamma(self.a, 1.0 / self.b)


class ASop(VendingController):
    """Passive conjugate updating; censored sales are taken at face value."""

    name = "asop"
    t_pilot = 0
    replan_interval = 1

    def __init__(self, world, rng, eps=0.0, adaptive=False):
        super().__init__(world, rng)
        self.belief = GammaBelief(self.sim_rate, PRIOR_STRENGTH)
        self.eps, self.adaptive = float(eps), adaptive
        self.plan_rate = self.sim_rate

    def current_eps(self, t):
        return self.eps * 100.0 / (100.0 + t) if self.adaptive else self.eps

    def plan(self, t):
        return self.belief.mean

    def act(self, world, t):
        if t < self.t_pilot:
            return self.overstock(self.exploit_action(self.sim_rate), True)
        if (t - self.t_pilot) % self.replan_interval == 0:
            self.plan_rate = self.plan(t)
        action = self.exploit_action(self.plan_rate)
        eps = self.current_eps(t)
        if eps > 0:
            mask = self.rng.random((N_M, N_P)) < eps
            if mask.any():
                action.vm_target = np.where(mask, self.rng.integers(0, CAPACITY + 1, (N_M, N_P)), action.vm_target)
                tiers = np.stack([explore_price(), exploit_price(), 1.2 * exploit_price()])
                pick = tiers[self.rng.integers(0, 3, (N_M, N_P)), np.arange(N_M)[:, None], np.arange(N_P)]
                action.price = np.where(mask, pick, action.price)
        return action

    def observe(self, obs):
        ok = ~obs.broken[:, None] & np.ones((N_M, N_P), dtype=bool)
        self.belief.update(self.standardize(obs.sales, obs.price), ok)


class ASopPilot(ASop):
    name = "asop_pilot"
    t_pilot = T_PILOT


class EpsGreedy(ASop):
    """SOP with a uniformly random stocking/price action per slot w.p. ``eps``; no learning."""

    name = "eps_greedy"

    def __init__(self, world, rng, eps=0.1):
        super().__init__(world, rng, eps=eps)

    def plan(self, t):
        return self.sim_rate

    def observe(self, obs):
        pass


class Thompson(ASop):
    name = "thompson"
    replan_interval = 5

    def plan(self, t):
        return self.belief.sample(self.rng)


class KgSep(ASop):
    """Pilot, then stock on the augmented index ``mean + gamma_eff * KG``."""

    name = "kg_sep"
    t_pilot = T_PILOT

    def plan(self, t):
        a, b = self.belief.a, self.belief.b
        sd_now = np.sqrt(a) / b
        sd_next = np.sqrt(a + a / b) / (b + 1.0)
        kg = np.maximum(sd_now - sd_next, 0.0)
        return self.belief.mean + GAMMA / (1.0 - GAMMA) * kg


class WindowBelief:
    """Mean of the most recent uncensored standardized sales; starts at the simulator."""

    def __init__(self, prior, window=WINDOW):
        self.prior = np.asarray(prior, dtype=float)
        self.obs = [[deque(maxlen=window) for _ in range(N_P)] for _ in range(N_M)]

    def update(self, y, mask):
        for m, p in zip(*np.nonzero(mask)):
            self.obs[m][p].append(float(y[m, p]))

    def reset(self, m, p, value):
        self.obs[m][p].clear()
        self.obs[m][p].append(float(value))

    @property
    def mean(self):
        out = self.prior.copy()
        for m in range(N_M):
            for p in range(N_P):
                if self.obs[m][p]:
                    out[m, p] = np.mean(self.obs[m][p])
        return out

    @property
    def variance(self):
        """Sample variance of the window over its size; Poisson variance from the prior when short."""
        out = self.prior.copy()
        for m in range(N_M):
            for p in range(N_P):
                xs = self.obs[m][p]
                if len(xs) >= 2:
                    out[m, p] = max(np.var(xs, ddof=1), 1e-3) / len(xs)
        return out


def pilot_flags(sums, days, sim_rate, alpha=BONFERRONI_ALPHA):
    """Two-sided Poisson z-test of pilot means against the simulator, per slot."""
    se = np.sqrt(np.maximum(sim_rate, 1e-9) / np.maximum(days, 1))
    z = (sums / np.maximum(days, 1) - sim_rate) / se
    return (2.0 * norm.sf(np.abs(z)) < alpha) & (days > 0)


class Sep(VendingController):
    """Pilot, targeted over-stocking of flagged machines, exploitation with break monitoring."""

    name = "sep"

    def __init__(self, world, rng):
        super().__init__(world, rng)
        self.belief = WindowBelief(self.sim_rate)
        self.series = [[[] for _ in range(N_P)] for _ in range(N_M)]
        self.pilot_sum = np.zeros((N_M, N_P))
        self.pilot_days = np.zeros((N_M, N_P))
        self.explore_vms = np.zeros(N_M, dtype=bool)
        self.burst = np.zeros(N_M, dtype=bool)

    def choose_explore(self, t):
        flags = pilot_flags(self.pilot_sum, self.pilot_days, self.sim_rate)
        return flags.any(axis=1)

    def explore_mask(self, t):
        return np.repeat(self.explore_vms[:, None], N_P, axis=1)

    def exploit_rate(self, t):
        return self.belief.mean

    def act(self, world, t):
        if t < T_PILOT:
            return self.overstock(self.exploit_action(self.sim_rate), True)
        if t == T_PILOT:
            self.explore_vms = self.choose_explore(t)
            self.log(t, "explore_set", " ".join(str(int(m)) for m in np.flatnonzero(self.explore_vms)))
        if t < T_EXPLORE_END:
            return self.overstock(self.exploit_action(self.sim_rate), self.explore_mask(t))
        action = self.exploit_action(self.exploit_rate(t))
        self.before_exploit(t)
        if self.burst.any():
            action = self.overstock(action, np.repeat(self.burst[:, None], N_P, axis=1))
            self.log(t, "reexplore", " ".join(str(int(m)) for m in np.flatnonzero(self.burst)))
            self.burst[:] = False
        return action

    def before_exploit(self, t):
        pass

    def observe(self, obs):
        y = self.standardize(obs.sales, obs.price)
        live = ~obs.broken[:, None] & np.ones((N_M, N_P), dtype=bool)
        if obs.day < T_PILOT:
            self.pilot_sum += np.where(live, y, 0.0)
            self.pilot_days += live
        self.belief.update(y, live & ~obs.censored)
        for m, p in zip(*np.nonzero(live)):
            s = self.series[m][p]
            s.append(float(y[m, p]))
            if obs.day >= T_EXPLORE_END and break_detector(s[-14:]):
                self.belief.reset(m, p, np.mean(s[-7:]))
                self.burst[m] = True
                self.log(obs.day, "break", f"{m} {p}")
                s.clear()


def slot_gradient(rate, horizon=30, delta=0.5):
    """Finite-difference sensitivity of the horizon's expected margin to each slot's rate."""
    margin = exploit_price() - WHOLESALE

    def value(lam):
        stock = stock_targets(lam)
        k = np.arange(CAPACITY + 1)
        sold = np.sum(poisson.sf(k[None, None, :], lam[..., None]) * (k[None, None, :] < stock[..., None]), axis=-1)
        return horizon * margin * sold

    lam = np.maximum(np.asarray(rate, dtype=float), 1e-6)
    return (value(lam + delta) - value(lam)) / delta


class FisherSepR(Sep):
    """Three-phase protocol with a PVV-ranked stochastic exploration design.

    The exploration set is the pilot-flagged machines plus the three machines
    with the largest posterior predictive value variance. Within that set a
    slot is over-stocked with probability proportional to its PVV share.
    Replans every ``replan_interval`` days re-rank PVV and fire a one-day burst
    at machines whose PVV exceeds the threshold times the exploitation-entry
    baseline.
    """

    name = "fisher_sep_r"
    replan_interval = 30
    top_k = 3
    threshold = 0.8

    def __init__(self, world, rng):
        super().__init__(world, rng)
        self.design = np.zeros((N_M, N_P))
        self.baseline = None

    def pvv(self):
        return slot_gradient(self.belief.mean) ** 2 * self.belief.variance

    def choose_explore(self, t):
        flagged = super().choose_explore(t)
        pvv = self.pvv()
        by_vm = pvv.sum(axis=1)
        top = np.argsort(-by_vm, kind="stable")[: self.top_k]
        chosen = flagged.copy()
        chosen[top] = True
        share = pvv / np.maximum(pvv.max(axis=1, keepdims=True), 1e-12)
        self.design = np.where(chosen[:, None], np.clip(share, 0.2, 1.0), 0.0)
        return chosen

    def explore_mask(self, t):
        return self.rng.random((N_M, N_P)) < self.design

    def before_exploit(self, t):
        offset = t - T_EXPLORE_END
        if offset % self.replan_interval:
            return
        by_vm = self.pvv().sum(axis=1)
        if self.baseline is None:
            self.baseline = by_vm
            return
        hot = by_vm > self.threshold * self.baseline
        self.burst |= hot
        self.baseline = np.where(hot, by_vm, self.baseline)


class OptimismMachines(VendingController):
    """One optimism agent per machine on a binarized abstraction.

    State: the machine's stock was low (some slot censored) yesterday. Action:
    stock to twice the simulator rate, or to capacity. Reward: the machine's
    sales margin at the posted price, in currency units.
    """

    def __init__(self, world, rng, variant, delta=0.05):
        super().__init__(world, rng)
        self.name = variant
        interval = 1 if variant == "ucbvi" else 25
        r_max = float(CAPACITY * np.sum(exploit_price()[0] - WHOLESALE))
        self.agents = [OptimismAgent(2, 2, GAMMA, r_max, variant, delta, interval, rng) for _ in range(N_M)]
        self.state = np.zeros(N_M, dtype=int)
        self.last = np.zeros(N_M, dtype=int)

    def act(self, world, t):
        self.last = np.array([ag.act(int(s), t) for ag, s in zip(self.agents, self.state)])
        action = self.exploit_action(self.sim_rate)
        high = np.repeat(self.last[:, None] == 1, N_P, axis=1)
        action.vm_target = np.where(high, CAPACITY, action.vm_target)
        action.depot_target = 3.0 * action.vm_target.sum(axis=0)
        return action

    def observe(self, obs):
        margin = np.sum(obs.sales * (obs.price - WHOLESALE), axis=1)
        nxt = obs.censored.any(axis=1).astype(int)
        for m, ag in enumerate(self.agents):
            ag.observe(int(self.state[m]), int(self.last[m]), float(margin[m]), int(nxt[m]))
        self.state = nxt


def make_vending_controller(name, world, rng):
    table = {
        "oracle": lambda: Oracle(world, rng),
        "sop": lambda: Sop(world, rng),
        "eps_greedy": lambda: EpsGreedy(world, rng),
        "l_eps_fixed": lambda: ASop(world, rng, eps=0.1),
        "l_eps_adaptive": lambda: ASop(world, rng, eps=0.1, adaptive=True),
        "asop": lambda: ASop(world, rng),
        "asop_pilot": lambda: ASopPilot(world, rng),
        "thompson": lambda: Thompson(world, rng),
        "kg_sep": lambda: KgSep(world, rng),
        "sep": lambda: Sep(world, rng),
        "fisher_sep_r": lambda: FisherSepR(world, rng),
        "ucrl2": lambda: OptimismMachines(world, rng, "ucrl2"),
        "ucbvi": lambda: OptimismMachines(world, rng, "ucbvi"),
    }
    if name not in table:
        raise ConfigError(f"unknown vending policy {name!r}; choose from {', '.join(VENDING_POLICIES)}")
    ctrl = table[name]()
    ctrl.name = name
    return ctrl
