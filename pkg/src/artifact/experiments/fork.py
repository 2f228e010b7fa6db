"""Stochastic fork: passive learners against an explorer-free oracle.

One agent walks the fork for ``T`` steps. Falling into the fail state returns
it to ``s_0``; the terminal absorbs and pays 1 per step. Belief-based agents
use a Dirichlet prior ``1/|S| + kappa0 * P_sim`` with rewards known. The
default strength keeps the posterior-mean value of ``a_0`` at the fork below
the halting reward, so the posterior-mean agent halts as the simulator does.
"""

import numpy as np

from ..belief import init_belief, posterior_mdp, sample_posterior_mdp
from ..envs.lock import build_stochastic_fork, fork_step
from ..errors import ConfigError
from ..mdp import value_iteration
from ..rng import substream

FORK_POLICIES = ("oracle", "sop", "asop", "thompson")
K_DEFAULT = 8
HORIZONS = (25, 50, 100, 200)
KAPPA0 = 50.0
KAPPA0_WEAK = 1.0
REWARD_SD = 1e-3


def _greedy(mdp):
    return value_iteration(mdp).greedy


def batch_greedy(rewards, transitions, gamma, tol=1e-10, max_iter=100_000):
    """Greedy actions of a stack of MDPs ``[D, S, A]`` by vectorized value iteration."""
    v = np.zeros(rewards.shape[:2])
    for _ in range(max_iter):
        q = rewards + gamma * np.einsum("dsat,dt->dsa", transitions, v)
        v_new = q.max(axis=2)
        if np.max(np.abs(v_new - v)) < tol:
            v = v_new
            break
        v = v_new
    q = rewards + gamma * np.einsum("dsat,dt->dsa", transitions, v)
    return np.argmax(q >= q.max(axis=2, keepdims=True) - 1e-12, axis=2)


def fork_prior(sim, kappa0=KAPPA0):
    return init_belief(sim.rewards, sim.transitions, REWARD_SD, kappa0)


def estimate_p_star(k, draws, rng, kappa0=KAPPA0_WEAK):
    """Prior frequency with which ``a_0`` is optimal at each chain state ``s_0..s_{k-1}``.

    Returns ``(per_state, joint)``: per-state marginals and the frequency that
    ``a_0`` is optimal at every state before the fork in the same draw.
    """
    _, sim = build_stochastic_fork(k)
    b = fork_prior(sim, kappa0)
    g = rng.standard_gamma(np.broadcast_to(b.alpha, (int(draws),) + b.alpha.shape))
    p = g / np.maximum(g.sum(axis=3, keepdims=True), 1e-300)
    r = np.broadcast_to(b.means, (int(draws),) + b.means.shape)
    pol = batch_greedy(r, p, sim.gamma)
    a0 = pol[:, :k] == 0
    return a0.mean(axis=0), float(np.all(a0[:, : k - 1], axis=1).mean())


class ForkAgent:
    def __init__(self, name, true, sim, rng, kappa0=KAPPA0):
        self.name, self.true, self.sim, self.rng = name, true, sim, rng
        self.belief = fork_prior(sim, kappa0)
        self.policy = None
        self.events = []

    def start_attempt(self, t):
        """Fix the policy for the next attempt from ``s_0``."""
        if self.name == "oracle":
            self.policy = _greedy(self.true) if self.policy is None else self.policy
        elif self.name == "sop":
            self.policy = _greedy(self.sim) if self.policy is None else self.policy
        elif self.name == "asop":
            self.policy = _greedy(posterior_mdp(self.belief, self.sim.gamma, 1.0))
        else:
            self.policy = _greedy(sample_posterior_mdp(self.belief, self.sim.gamma, self.rng, 1.0))

    def observe(self, s, a, s2):
        if self.name in ("asop", "thompson"):
            self.belief.alpha[s, a, s2] += 1.0


def run_fork_trial(seed, policy, horizons=HORIZONS, k=K_DEFAULT, kappa0=KAPPA0):
    """Cumulative true reward at each checkpoint plus the first step at which
    the agent stood on ``s_{k-1}`` (``-1`` if never)."""
    if policy not in FORK_POLICIES:
        raise ConfigError(f"unknown fork policy {policy!r}; choose from {', '.join(FORK_POLICIES)}")
    k = int(k)
    true, sim = build_stochastic_fork(k)
    world_rng = substream(seed, "fork", "world")
    agent = ForkAgent(policy, true, sim, substream(seed, "fork", "policy", policy), kappa0)
    checkpoints = sorted(set(int(h) for h in horizons))
    fail = k + 1
    s, total, first_fork = 0, 0.0, -1
    agent.start_attempt(0)
    values = {}
    for t in range(checkpoints[-1]):
        if s == k - 1 and first_fork < 0:
            first_fork = t
            agent.events.append((t, "fork_reached", ""))
        a = int(agent.policy[s])
        total += float(true.rewards[s, a])
        s2 = fork_step(true, s, a, world_rng)
        agent.observe(s, a, s2)
        if s2 == fail:
            s2 = 0
            agent.start_attempt(t + 1)
        s = s2
        if t + 1 in checkpoints:
            values[t + 1] = total
    return values, {"first_fork": first_fork}, agent.events


def fork_advance_frequency(k, steps, rng):
    """Share of ``a_0`` plays at ``s_{k-1}`` that advance to ``s_k`` in the true fork."""
    true, _ = build_stochastic_fork(k)
    hits = sum(fork_step(true, k - 1, 0, rng) == k for _ in range(int(steps)))
    return hits / int(steps)


def thompson_fork_reach(k, horizon, runs, seed_base=42, kappa0=KAPPA0_WEAK):
    """Frequency with which Thompson sampling stands on ``s_{k-1}`` within ``horizon`` steps."""
    reached = 0
    for i in range(int(runs)):
        _, extras, _ = run_fork_trial(seed_base + 100 * i, "thompson", (horizon,), k, kappa0)
        reached += extras["first_fork"] >= 0
    return reached / int(runs)
