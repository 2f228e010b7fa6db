"""Mobile HIV testing on a walled grid with SIS dynamics and cold-start warmup."""

from collections import deque
from dataclasses import dataclass, fields, replace

import numpy as np

from ..errors import ConfigError, InvalidActionError, WorldTerminatedError
from ..mdp import TabularMDP
from ..rng import substream

MOVES = ((0, 0), (-1, 0), (1, 0), (0, -1), (0, 1))  # stay, up, down, left, right


@dataclass(frozen=True)
class HivConfig:
    rows: int = 5
    cols: int = 8
    wall_col: int = 4
    corridor_row: int = 2
    n_teams: int = 8
    pop_a: int = 500
    pop_b: int = 300
    prev_a: float = 0.05
    prev_b: float = 0.04
    prev_sd: float = 0.005
    prev_epicenter: float = 0.30
    prev_neighbor: float = 0.18
    sim_a: float = 0.05
    sim_a_sd: float = 0.003
    sim_b: float = 0.02
    sim_b_sd: float = 0.002
    init_clip_hi: float = 0.50
    beta_w: float = 0.002
    beta_b: float = 0.0005
    tau: float = 0.90
    prev_min: float = 0.001
    prev_max: float = 0.80
    mu_tests: float = 8.0
    warmup_days: int = 3
    cold_yield: float = 0.20
    gamma: float = 0.95

    @classmethod
    def from_overrides(cls, overrides):
        """Numeric overrides by field name; unknown keys are a config error."""
        known = {f.name: f.type for f in fields(cls)}
        clean = {}
        for k, v in (overrides or {}).items():
            if k not in known:
                raise ConfigError(f"unknown HIV parameter {k!r}")
            clean[k] = int(v) if known[k] in (int, "int") else float(v)
        return replace(cls(), **clean)

    @property
    def n_zones(self):
        return self.rows * self.cols

    @property
    def epicenter(self):
        return (self.rows - 1, self.cols - 1)


class HivGeometry:
    """Zone indexing, admissible moves and breadth-first paths."""

    def __init__(self, cfg):
        self.cfg = cfg
        self.rows, self.cols = cfg.rows, cfg.cols
        n = cfg.n_zones
        self.in_b = np.array([self.cell(j)[1] >= cfg.wall_col for j in range(n)])
        self.dest = np.array([[self._move(j, a) for a in range(len(MOVES))] for j in range(n)])
        self.neighbors = [sorted({int(d) for d in self.dest[j]} - {j}) for j in range(n)]
        adj = np.zeros((n, n))
        for j in range(n):
            adj[j, self.neighbors[j]] = 1.0
        self.adjacency = adj
        self._paths = {}

    def index(self, r, c):
        return r * self.cols + c

    def cell(self, j):
        return divmod(int(j), self.cols)

    def _move(self, j, a):
        r, c = self.cell(j)
        dr, dc = MOVES[a]
        r2, c2 = r + dr, c + dc
        if not (0 <= r2 < self.rows and 0 <= c2 < self.cols):
            return j
        w = self.cfg.wall_col
        if (c < w) != (c2 < w) and not (r == r2 == self.cfg.corridor_row):
            return j
        return self.index(r2, c2)

    def admissible(self, j, k):
        return int(k) == int(j) or int(k) in self.neighbors[int(j)]

    def _dist(self, target):
        """Breadth-first distances to ``target`` (cached)."""
        if target not in self._paths:
            dist = np.full(self.cfg.n_zones, -1)
            dist[target] = 0
            q = deque([target])
            while q:
                u = q.popleft()
                for v in self.neighbors[u]:
                    if dist[v] < 0:
                        dist[v] = dist[u] + 1
                        q.append(v)
            self._paths[target] = dist
        return self._paths[target]

    def next_step(self, j, target):
        """First move of a shortest admissible path; lowest zone index breaks ties."""
        j, target = int(j), int(target)
        if j == target:
            return j
        dist = self._dist(target)
        best = [k for k in self.neighbors[j] if dist[k] == dist[j] - 1]
        return min(best) if best else j

    def distance(self, j, target):
        return int(self._dist(int(target))[int(j)])


@dataclass
class HivObservation:
    day: int
    positions: np.ndarray
    tests: np.ndarray
    positives: np.ndarray


class HivWorld:
    """One realization of the HIV program.

    The initial prevalence map and the simulator's estimates come from the
    ``build`` stream; daily test counts and outcomes from the ``testing``
    stream. ``cases`` accumulates positives found.
    """

    def __init__(self, seed, cfg=None, start=None):
        self.cfg = cfg or HivConfig()
        self.geo = HivGeometry(self.cfg)
        c = self.cfg
        rng = substream(seed, "hiv", "build")
        n = c.n_zones
        in_b = self.geo.in_b
        self.population = np.where(in_b, c.pop_b, c.pop_a).astype(float)
        prev = np.where(in_b, c.prev_b, c.prev_a) + c.prev_sd * rng.standard_normal(n)
        sim = np.where(in_b, c.sim_b, c.sim_a) + np.where(in_b, c.sim_b_sd, c.sim_a_sd) * rng.standard_normal(n)
        prev = np.clip(prev, c.prev_min, c.init_clip_hi)
        self.p_sim = np.clip(sim, c.prev_min, c.init_clip_hi)
        er, ec = c.epicenter
        self.cluster = [self.geo.index(er, ec)]
        for r in range(er - 1, er + 2):
            for col in range(ec - 1, ec + 2):
                if 0 <= r < c.rows and c.wall_col <= col < c.cols and (r, col) != (er, ec):
                    prev[self.geo.index(r, col)] = c.prev_neighbor
                    self.cluster.append(self.geo.index(r, col))
        prev[self.cluster[0]] = c.prev_epicenter
        self.prevalence = prev
        self.initial_prevalence = prev.copy()
        self.diagnosed = np.zeros(n)
        self.warmup = np.where(in_b, 0, c.warmup_days).astype(int)
        self.positions = np.array(default_starts(self.geo) if start is None else start, dtype=int)
        self.test_rng = substream(seed, "hiv", "testing")
        self.day = 0
        self.cases = 0.0
        self.team_days_b = 0
        self.crossings = 0

    # Protocol used by the yield-gradient helpers.
    @property
    def tests_per_zone(self):
        return self.cfg.mu_tests

    @property
    def yield_multiplier(self):
        return np.where(self.warmup >= self.cfg.warmup_days, 1.0, self.cfg.cold_yield)

    def effective_infectious(self, prev=None, diagnosed=None):
        p = self.prevalence if prev is None else prev
        d = self.diagnosed if diagnosed is None else diagnosed
        return p * np.maximum(0.0, self.population - d) + d * (1.0 - self.cfg.tau)

    def expected_step(self, prev):
        """Noise-free SIS update of ``prev`` at the current diagnosed counts."""
        c = self.cfg
        frac = self.effective_infectious(prev) / self.population
        foi = c.beta_w * frac + c.beta_b * (self.geo.adjacency @ frac)
        return np.clip(prev + (1.0 - prev) * foi, c.prev_min, c.prev_max)

    def step(self, moves):
        """Move teams (one admissible cell or stay), test, then spread disease."""
        moves = np.asarray(moves, dtype=int)
        if moves.shape != self.positions.shape:
            raise InvalidActionError("one destination per team is required")
        for j, k in zip(self.positions, moves):
            if not (0 <= k < self.cfg.n_zones) or not self.geo.admissible(j, k):
                raise InvalidActionError(f"move {int(j)} -> {int(k)} is not admissible")
        if np.any(self.diagnosed > self.population):
            raise WorldTerminatedError("diagnosed count exceeds population")
        in_b = self.geo.in_b
        self.crossings += int(np.sum(in_b[moves] & ~in_b[self.positions]))
        self.positions = moves
        self.team_days_b += int(np.sum(in_b[moves]))
        phi = self.yield_multiplier
        tests = np.maximum(1, self.test_rng.poisson(self.cfg.mu_tests, size=moves.size))
        positives = self.test_rng.binomial(tests, self.prevalence[moves] * phi[moves])
        for j, k in zip(moves, positives):
            self.diagnosed[j] = min(self.population[j], self.diagnosed[j] + k)
        self.cases += float(positives.sum())
        visited = np.unique(moves)
        self.warmup[visited] = np.minimum(self.warmup[visited] + 1, self.cfg.warmup_days)
        self.prevalence = self.expected_step(self.prevalence)
        obs = HivObservation(self.day, moves.copy(), tests, positives)
        self.day += 1
        return obs


def default_starts(geo):
    """Teams start on distinct Region-A zones: the two leftmost columns of rows 0-3."""
    starts = [geo.index(r, c) for r in range(4) for c in range(2)]
    return starts[: geo.cfg.n_teams] if geo.cfg.n_teams <= len(starts) else [
        int(j) for j in np.flatnonzero(~geo.in_b)[: geo.cfg.n_teams]
    ]


def hiv_abstraction(world, rewards=None):
    """Tabular abstraction: zones x five moves, reward = expected positives at the destination."""
    geo = world.geo
    n = world.cfg.n_zones
    k = len(MOVES)
    p = np.zeros((n, k, n))
    p[np.arange(n)[:, None], np.arange(k)[None, :], geo.dest] = 1.0
    base = world.p_sim if rewards is None else rewards
    r = (base * world.cfg.mu_tests)[geo.dest]
    return TabularMDP(r, p, world.cfg.gamma)
