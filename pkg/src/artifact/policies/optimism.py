"""Optimism-in-the-face-of-uncertainty baselines on small tabular abstractions.

Each decentralized unit owns one agent. Unvisited actions are forced before
optimism applies; the optimistic model is re-solved every ``replan_interval``
steps.
"""

import numpy as np

from ..errors import ConfigError, InvalidParameterError


class OptimismAgent:
    """Discounted UCBVI (Hoeffding bonus) or UCRL2 (extended value iteration).

    Ties among optimistic actions are broken uniformly when ``rng`` is given.
    Rewards are assumed to lie in ``[0, r_max]``; larger observations are
    clipped for the confidence bounds only.
    """

    def __init__(self, n_states, n_actions, gamma, r_max, variant="ucbvi", delta=0.05, replan_interval=1, rng=None):
        if variant not in ("ucbvi", "ucrl2"):
            raise ConfigError(f"unknown optimism variant {variant!r}")
        if not 0 < delta < 1:
            raise InvalidParameterError("delta must lie in (0, 1)")
        self.variant = variant
        self.s, self.k = int(n_states), int(n_actions)
        self.gamma, self.r_max, self.delta = float(gamma), float(r_max), float(delta)
        self.replan_interval = int(replan_interval)
        self.n = np.zeros((self.s, self.k))
        self.r_sum = np.zeros((self.s, self.k))
        self.p_cnt = np.zeros((self.s, self.k, self.s))
        self.q = np.zeros((self.s, self.k))
        self.t = 0
        self.rng = rng
        self._planned = False

    def observe(self, s, a, r, s2):
        self.n[s, a] += 1
        self.r_sum[s, a] += min(max(float(r), 0.0), self.r_max)
        self.p_cnt[s, a, s2] += 1
        self.t += 1

    def act(self, s, t):
        unvisited = np.flatnonzero(self.n[s] == 0)
        if unvisited.size:
            return int(unvisited[0])
        if t % self.replan_interval == 0 or not self._planned:
            self.q = self.plan()
            self._planned = True
        q = self.q[s]
        best = np.flatnonzero(q >= q.max() - 1e-9)
        return int(best[0]) if self.rng is None else int(self.rng.choice(best))

    def _model(self):
        n = np.maximum(self.n, 1.0)
        r_hat = self.r_sum / n
        p_hat = self.p_cnt / n[:, :, None]
        p_hat[self.n == 0] = 1.0 / self.s
        log_term = np.log(2.0 * self.s * self.k * max(self.t, 1) / self.delta)
        return n, r_hat, p_hat, log_term

    def plan(self, tol=None, max_iter=2000):
        n, r_hat, p_hat, log_term = self._model()
        v_max = self.r_max / (1.0 - self.gamma)
        tol = 1e-6 * v_max if tol is None else tol
        if self.variant == "ucbvi":
            bonus = v_max * np.sqrt(log_term / (2.0 * n))
            r_opt = np.minimum(r_hat + bonus, v_max)
            v = np.zeros(self.s)
            for _ in range(max_iter):
                q = np.minimum(r_opt + self.gamma * p_hat @ v, v_max)
                v_new = q.max(axis=1)
                if np.max(np.abs(v_new - v)) < tol:
                    break
                v = v_new
            return q
        r_opt = np.minimum(r_hat + self.r_max * np.sqrt(log_term / (2.0 * n)), self.r_max)
        radius = np.minimum(np.sqrt(2.0 * (self.s * np.log(2.0) + log_term) / n), 2.0)
        v = np.zeros(self.s)
        for _ in range(max_iter):
            p_opt = optimistic_transitions(p_hat, radius, v)
            q = r_opt + self.gamma * p_opt @ v
            v_new = q.max(axis=1)
            if np.max(np.abs(v_new - v)) < tol:
                break
            v = v_new
        return q


def optimistic_transitions(p_hat, radius, v):
    """Maximize ``<p, v>`` over the L1 ball of ``radius`` around each row of ``p_hat``."""
    order = np.argsort(-v, kind="stable")
    best = order[0]
    p = p_hat.copy()
    p[..., best] = np.minimum(1.0, p_hat[..., best] + radius / 2.0)
    excess = p.sum(axis=-1) - 1.0
    for j in order[::-1]:
        if j == best:
            continue
        take = np.minimum(p[..., j], np.maximum(excess, 0.0))
        p[..., j] -= take
        excess -= take
    return p
