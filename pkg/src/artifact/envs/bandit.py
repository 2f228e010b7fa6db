"""Two-action stateless bandit with a Gaussian prior on the treatment effect."""

import numpy as np

from ..errors import InvalidParameterError
from ..stateless import StatelessSpec, stateless_bandit_episode


class StatelessBandit:
    """One episode's world: ``delta ~ N(delta0, sigma0**2)`` drawn at build.

    Arm 0 pays ``N(0, sigma**2)``, arm 1 pays ``N(delta, sigma**2)``. The
    effect ``delta`` is hidden; :meth:`pull` exposes only noisy rewards.
    """

    def __init__(self, delta0, sigma0, sigma, n, rng):
        if not (sigma0 > 0 and sigma > 0):
            raise InvalidParameterError("sigma0 and sigma must be positive")
        if n < 1:
            raise InvalidParameterError("n must be at least 1")
        self.delta0, self.sigma0, self.sigma, self.n = float(delta0), float(sigma0), float(sigma), int(n)
        self.rng = rng
        self._delta = self.delta0 + self.sigma0 * rng.standard_normal()

    def pull(self, arms):
        """Noisy rewards for a vector of arm choices."""
        arms = np.asarray(arms, dtype=int)
        if np.any((arms < 0) | (arms > 1)):
            raise InvalidParameterError("arms must be 0 or 1")
        return np.where(arms == 1, self._delta, 0.0) + self.sigma * self.rng.standard_normal(arms.shape)

    def expected(self, arm):
        return self._delta if int(arm) == 1 else 0.0


def stateless_bandit(delta0, sigma0, sigma, n, rng):
    return StatelessBandit(delta0, sigma0, sigma, n, rng)


def run_two_period(world, n_e, gamma=1.0):
    """Period 1 splits ``n_e`` pilot units 50/50 (rest on the prior arm); period 2
    deploys the posterior-preferred arm to all ``n``. Returns ``(chosen, realized)``
    where ``realized`` is the expected reward of the deployed choices."""
    spec = StatelessSpec(world.delta0, world.sigma0, world.sigma, world.n, gamma)
    n_e = int(n_e)
    if not 0 <= n_e <= world.n:
        raise InvalidParameterError("need 0 <= n_e <= n")
    prior_arm = int(world.delta0 >= 0)
    n_ctrl = n_e // 2
    arms = np.full(world.n, prior_arm)
    arms[:n_ctrl] = 0
    arms[n_ctrl:n_e] = 1
    rewards = world.pull(arms)
    post = spec.delta0
    if n_ctrl > 0 and n_e - n_ctrl > 0:
        diff = rewards[n_ctrl:n_e].mean() - rewards[:n_ctrl].mean()
        nv = world.sigma**2 * (1.0 / (n_e - n_ctrl) + 1.0 / n_ctrl)
        s0sq = world.sigma0**2
        post = spec.delta0 + s0sq / (s0sq + nv) * (diff - spec.delta0)
    chosen = int(post > 0)
    realized = float(sum(world.expected(a) for a in arms)) + gamma * world.n * world.expected(chosen)
    return chosen, realized


__all__ = ["StatelessBandit", "run_two_period", "stateless_bandit", "stateless_bandit_episode"]
