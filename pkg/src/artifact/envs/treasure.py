"""Hidden-treasure grid: two regions split by a wall with one corridor."""

from dataclasses import dataclass

import numpy as np

from ..mdp import TabularMDP

ROWS, COLS = 4, 6
WALL_COL = 3  # wall runs between columns 2 and 3
CORRIDOR_ROW = 2
MOVES = ((-1, 0), (1, 0), (0, -1), (0, 1))  # up, down, left, right
ACTION_NAMES = ("up", "down", "left", "right")
P_INTENDED = 0.85
R_A = 0.3
R_B_SIM = 0.1
R_TREASURE = 1.0
R_NEIGHBOR = 0.7
TREASURE = (3, 5)
SIM_NOISE = 0.05
GAMMA = 0.95
START = (0, 0)
OBS_SD = 0.1


@dataclass(frozen=True)
class TreasureLayout:
    rows: int
    cols: int
    wall_col: int
    corridor_row: int
    treasure: tuple
    start: tuple

    def index(self, r, c):
        return r * self.cols + c

    def cell(self, s):
        return divmod(int(s), self.cols)

    def in_b(self, s):
        return self.cell(s)[1] >= self.wall_col

    @property
    def n_states(self):
        return self.rows * self.cols

    def region_b_mask(self):
        return np.array([self.in_b(s) for s in range(self.n_states)])

    @property
    def corridor(self):
        return self.index(self.corridor_row, self.wall_col)


LAYOUT = TreasureLayout(ROWS, COLS, WALL_COL, CORRIDOR_ROW, TREASURE, START)


def move(layout, s, a):
    """Destination of a deterministic move; blocked moves stay in place."""
    r, c = layout.cell(s)
    dr, dc = MOVES[a]
    r2, c2 = r + dr, c + dc
    if not (0 <= r2 < layout.rows and 0 <= c2 < layout.cols):
        return int(s)
    crosses = {c, c2} == {layout.wall_col - 1, layout.wall_col}
    if crosses and r != layout.corridor_row:
        return int(s)
    return layout.index(r2, c2)


def grid_transitions(layout, p_intended=P_INTENDED):
    n = layout.n_states
    p = np.zeros((n, 4, n))
    slip = (1.0 - p_intended) / 4.0
    for s in range(n):
        for a in range(4):
            p[s, a, move(layout, s, a)] += p_intended
            for b in range(4):
                p[s, a, move(layout, s, b)] += slip
    return p


def true_rewards(layout):
    r = np.full(layout.n_states, R_A)
    tr, tc = layout.treasure
    for s in range(layout.n_states):
        row, col = layout.cell(s)
        if not layout.in_b(s):
            continue
        if (row, col) == (tr, tc):
            r[s] = R_TREASURE
        elif max(abs(row - tr), abs(col - tc)) == 1:
            r[s] = R_NEIGHBOR
        else:
            r[s] = R_B_SIM
    return r


def sim_rewards(layout):
    return np.where(layout.region_b_mask(), R_B_SIM, R_A)


def build_treasure_grid(rng, layout=LAYOUT, sim_noise=SIM_NOISE, gamma=GAMMA):
    """``(true, sim, layout)``. Rewards are state rewards shared by all actions;
    the simulator perturbs each transition row by ``Exp(sim_noise)`` noise on
    its support, then renormalizes."""
    p = grid_transitions(layout)
    rt = np.repeat(true_rewards(layout)[:, None], 4, axis=1)
    rs = np.repeat(sim_rewards(layout)[:, None], 4, axis=1)
    noisy = p + (p > 0) * rng.exponential(sim_noise, size=p.shape)
    noisy /= noisy.sum(axis=2, keepdims=True)
    return TabularMDP(rt, p, gamma, r_max=1.0), TabularMDP(rs, noisy, gamma, r_max=1.0), layout


def corridor_navigator(layout=LAYOUT):
    """Hand-crafted explorer: head for the corridor row, cross, then wander in B."""

    def act(s, rng):
        r, c = layout.cell(s)
        if c >= layout.wall_col:
            return int(rng.integers(4))
        if r < layout.corridor_row:
            return 1
        if r > layout.corridor_row:
            return 0
        return 3

    return act
