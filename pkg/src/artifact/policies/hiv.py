"""Team-dispatch controllers for the HIV testing world.

Controllers read only what the program can observe: team positions, warmup
counters, its own diagnosed counts, the simulator map and the geometry. The
oracle alone reads the initial true prevalence map. Zone value for dispatch is
expected next-test yield ``mean * phi``, so cold zones are discounted by the
warmup multiplier.
"""

import numpy as np
from scipy.optimize import linear_sum_assignment

from ..belief import BetaMap, kappa0_self_consistency
from ..design import ysne_gradient
from ..envs.hiv import MOVES, hiv_abstraction
from ..errors import ConfigError
from .base import Controller
from .optimism import OptimismAgent

KAPPA = 10.0
HIV_POLICIES = ("oracle", "sop", "eps_greedy", "asop", "thompson", "sep", "fisher_sep_t_nav", "ucrl2", "ucbvi")


def top_zones(score, count, exclude=()):
    """Indices of the ``count`` largest scores; ties go to the lower index."""
    s = np.asarray(score, dtype=float).copy()
    s[list(exclude)] = -np.inf
    order = np.lexsort((np.arange(s.size), -s))
    return [int(j) for j in order[:count]]


def assign_targets(geo, positions, targets):
    """Match teams to targets minimizing total path length."""
    cost = np.array([[geo.distance(p, z) for z in targets] for p in positions], dtype=float)
    rows, cols = linear_sum_assignment(cost)
    out = np.array(positions, dtype=int).copy()
    out[rows] = np.asarray(targets, dtype=int)[cols]
    return out


class HivController(Controller):
    name = "hiv"
    replan_interval = 10

    def __init__(self, world, rng):
        super().__init__()
        self.geo = world.geo
        self.cfg = world.cfg
        self.p_sim = np.asarray(world.p_sim, dtype=float)
        self.n_teams = self.cfg.n_teams
        self.rng = rng
        self.belief = BetaMap.from_sim(self.p_sim, KAPPA)
        self.targets = None

    def phi(self, world):
        return world.yield_multiplier

    def plan(self, world, t):
        """Per-team target zones."""
        raise NotImplementedError

    def act(self, world, t):
        if self.targets is None or t % self.replan_interval == 0:
            self.targets = np.asarray(self.plan(world, t), dtype=int)
            self.log(t, "replan", " ".join(map(str, self.targets)))
        return np.array([self.geo.next_step(p, z) for p, z in zip(world.positions, self.targets)])

    def observe(self, obs):
        for z, k, n in zip(obs.positions, obs.positives, obs.tests):
            self.belief.update(int(z), int(k), int(n))

    def exploit_targets(self, world, count, mean=None, exclude=()):
        m = self.belief.mean if mean is None else mean
        return top_zones(m * self.phi(world), count, exclude)


class Oracle(HivController):
    name = "oracle"

    def __init__(self, world, rng):
        super().__init__(world, rng)
        self.true_map = world.initial_prevalence.copy()
        self.cluster = list(world.cluster)

    def plan(self, world, t):
        if self.targets is not None:
            return self.targets
        a_score = np.where(self.geo.in_b, -np.inf, self.true_map)
        tops = top_zones(a_score, self.n_teams - len(self.cluster))
        return assign_targets(self.geo, world.positions, self.cluster + tops)


class Sop(HivController):
    name = "sop"

    def plan(self, world, t):
        if self.targets is not None:
            return self.targets
        return assign_targets(self.geo, world.positions, self.exploit_targets(world, self.n_teams, self.p_sim))

    def observe(self, obs):
        pass


class EpsGreedy(Sop):
    """SOP routing with a uniformly random admissible neighbor step w.p. ``eps``."""

    name = "eps_greedy"

    def __init__(self, world, rng, eps=0.15):
        super().__init__(world, rng)
        self.eps = float(eps)

    def act(self, world, t):
        moves = super().act(world, t)
        for i, p in enumerate(world.positions):
            if self.rng.random() < self.eps:
                nb = self.geo.neighbors[int(p)]
                moves[i] = nb[int(self.rng.integers(len(nb)))]
        return moves


class ASop(HivController):
    name = "asop"

    def plan(self, world, t):
        return assign_targets(self.geo, world.positions, self.exploit_targets(world, self.n_teams))


class Thompson(HivController):
    name = "thompson"
    replan_interval = 5

    def plan(self, world, t):
        draw = self.belief.sample(self.rng)
        return assign_targets(self.geo, world.positions, self.exploit_targets(world, self.n_teams, draw))


class Sep(HivController):
    """Explorers head for the simulator-flagged epicenter; the rest follow SOP."""

    name = "sep"

    def __init__(self, world, rng, n_explore=3, t_explore=25):
        super().__init__(world, rng)
        self.n_explore = int(n_explore)
        self.t_explore = int(t_explore)
        self.epicenter = self.geo.index(*self.cfg.epicenter)

    def plan(self, world, t):
        if t < self.t_explore:
            exploit = self.exploit_targets(world, self.n_teams - self.n_explore, self.p_sim)
            return assign_targets(self.geo, world.positions, [self.epicenter] * self.n_explore + exploit)
        return assign_targets(self.geo, world.positions, self.exploit_targets(world, self.n_teams))

    def act(self, world, t):
        if t == self.t_explore:
            self.targets = None
        return super().act(world, t)


class _YieldView:
    """Planning copy of the world with a believed prevalence map.

    Yield is valued at the warm multiplier a dispatched team would operate at,
    so a zone's sensitivity does not hinge on whether it was visited yet.
    """

    def __init__(self, world, prevalence):
        self.prevalence = prevalence
        self.tests_per_zone = world.tests_per_zone
        self.yield_multiplier = 1.0
        self.expected_step = world.expected_step


def sop_route_zones(geo, starts, targets):
    """Zones on the SOP's shortest paths from ``starts`` to ``targets``."""
    seen = set()
    for p, z in zip(starts, assign_targets(geo, starts, targets)):
        p = int(p)
        seen.add(p)
        while p != z:
            p = geo.next_step(p, z)
            seen.add(p)
    return seen


def zone_kappa0(world, rng, rollouts=100):
    """Per-zone prior strength from simulator self-consistency on the zone x move
    abstraction; zones off the SOP's routes are pinned to strength 1."""
    sim = hiv_abstraction(world)
    stated = world.cfg.mu_tests * world.p_sim * (1.0 - world.p_sim)
    k_pair = kappa0_self_consistency(sim, stated[world.geo.dest], rollouts=rollouts, rng=rng)
    kappa = np.ones(world.cfg.n_zones)
    np.maximum.at(kappa, world.geo.dest.ravel(), k_pair.ravel())
    sop_targets = top_zones(world.p_sim, world.cfg.n_teams)
    on_route = sop_route_zones(world.geo, world.positions, sop_targets)
    off = np.array([j not in on_route for j in range(world.cfg.n_zones)])
    kappa[off] = 1.0
    return kappa


class FisherSepTNav(HivController):
    """Random-walk pilot, then PVV-ranked exploration along admissible paths.

    Zone PVV is the squared yield gradient times the Beta variance under the
    self-consistent prior strength. The explore/exploit team split follows
    Region B's share of total PVV.
    """

    name = "fisher_sep_t_nav"
    replan_interval = 5

    def __init__(self, world, rng, t_pilot=3, t_explore=25, t_look=15, delta=0.01):
        super().__init__(world, rng)
        self.t_pilot, self.t_explore = int(t_pilot), int(t_explore)
        self.t_look, self.delta = int(t_look), float(delta)
        k0 = zone_kappa0(world, rng)
        self.kappa0 = k0
        self.fisher = BetaMap.from_sim(self.p_sim, 1.0)
        self.fisher.a = self.p_sim * k0 + 1.0
        self.fisher.b = (1.0 - self.p_sim) * k0 + 1.0

    def zone_pvv(self, world):
        view = _YieldView(world, self.belief.mean)
        grad = np.array([ysne_gradient(view, j, self.delta, self.t_look, self.cfg.gamma) for j in range(self.cfg.n_zones)])
        return grad**2 * self.fisher.variance

    def plan(self, world, t):
        if t < self.t_pilot + self.t_explore:
            pvv = self.zone_pvv(world)
            total = float(pvv.sum())
            share = float(pvv[self.geo.in_b].sum()) / total if total > 0 else 0.0
            n_exp = int(round(self.n_teams * share))
            b_pvv = np.where(self.geo.in_b, pvv, -np.inf)
            explore = top_zones(b_pvv, n_exp)
            exploit = self.exploit_targets(world, self.n_teams - n_exp, exclude=explore)
            self.log(t, "pvv_split", f"{n_exp} {share:.3f}")
            return assign_targets(self.geo, world.positions, explore + exploit)
        return assign_targets(self.geo, world.positions, self.exploit_targets(world, self.n_teams))

    def act(self, world, t):
        if t < self.t_pilot:
            return np.array([self.geo.dest[int(p), int(self.rng.integers(len(MOVES)))] for p in world.positions])
        if t == self.t_pilot:
            self.targets = None
        offset = t - self.t_pilot
        if self.targets is None or offset % self.replan_interval == 0:
            self.targets = np.asarray(self.plan(world, t), dtype=int)
            self.log(t, "replan", " ".join(map(str, self.targets)))
        return np.array([self.geo.next_step(p, z) for p, z in zip(world.positions, self.targets)])

    def observe(self, obs):
        super().observe(obs)
        for z, k, n in zip(obs.positions, obs.positives, obs.tests):
            self.fisher.update(int(z), int(k), int(n))


class OptimismTeams(HivController):
    """One optimism agent per team on the zone x five-move abstraction."""

    def __init__(self, world, rng, variant, delta=0.05):
        super().__init__(world, rng)
        self.name = variant
        interval = 1 if variant == "ucbvi" else 25
        self.agents = [
            OptimismAgent(self.cfg.n_zones, len(MOVES), self.cfg.gamma, self.cfg.mu_tests, variant, delta, interval, rng)
            for _ in range(self.n_teams)
        ]
        self._last = None

    def act(self, world, t):
        acts = [ag.act(int(p), t) for ag, p in zip(self.agents, world.positions)]
        self._last = (np.array(world.positions, dtype=int), acts)
        return np.array([self.geo.dest[int(p), a] for p, a in zip(world.positions, acts)])

    def observe(self, obs):
        prev, acts = self._last
        for ag, s, a, r, s2 in zip(self.agents, prev, acts, obs.positives, obs.positions):
            ag.observe(int(s), int(a), float(r), int(s2))


def make_hiv_controller(name, world, rng):
    if name == "oracle":
        return Oracle(world, rng)
    if name == "sop":
        return Sop(world, rng)
    if name == "eps_greedy":
        return EpsGreedy(world, rng)
    if name == "asop":
        return ASop(world, rng)
    if name == "thompson":
        return Thompson(world, rng)
    if name == "sep":
        return Sep(world, rng)
    if name == "fisher_sep_t_nav":
        return FisherSepTNav(world, rng)
    if name in ("ucrl2", "ucbvi"):
        return OptimismTeams(world, rng, name)
    raise ConfigError(f"unknown HIV policy {name!r}; choose from {', '.join(HIV_POLICIES)}")
