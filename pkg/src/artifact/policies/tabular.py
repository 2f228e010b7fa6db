"""Controllers for multi-unit worlds with a tabular simulator.

All units share one belief. Every controller is deterministic given its RNG
and the observation stream.
"""

import numpy as np

from ..belief import (
    init_belief,
    kappa0_self_consistency,
    nig_prior,
    nig_update_and_tau,
    posterior_mdp,
    sample_posterior_mdp,
)
from ..design import DesignInputs, compute_epi, minimize_pvv
from ..errors import InvalidParameterError
from ..mdp import StochasticPolicy, greedy_actions, value_iteration
from .base import Controller, Phase, PhaseSchedule

SIGMA0 = 1.0
ALPHA0 = 5.0
FISHER_ALPHA0 = 2.0


def _sample_rows(probs, states, rng):
    """One action per unit from ``probs[state]`` by inverse CDF."""
    cum = np.cumsum(probs[states], axis=1)
    u = rng.random(states.size)[:, None] * cum[:, -1:]
    return np.minimum((cum < u).sum(axis=1), probs.shape[1] - 1)


class FixedPolicy(Controller):
    """Greedy policy of a fixed MDP: the SOP on the simulator, the oracle on the truth."""

    def __init__(self, mdp, name="sop"):
        super().__init__()
        self.name = name
        self.actions = value_iteration(mdp).greedy

    def act(self, states, t):
        return self.actions[states]


class BeliefController(Controller):
    """Shared plumbing: a simulator-anchored belief and a replanned posterior policy."""

    state_rewards = False

    def __init__(self, sim, obs_var, rng, replan_interval=5, sigma0=SIGMA0, alpha0=ALPHA0):
        super().__init__()
        if obs_var <= 0:
            raise InvalidParameterError("obs_var must be positive")
        self.sim = sim
        self.obs_var = float(obs_var)
        self.rng = rng
        self.replan_interval = int(replan_interval)
        self.belief = init_belief(sim.rewards, sim.transitions, sigma0, alpha0)
        self.policy = value_iteration(sim).greedy

    def posterior(self):
        return posterior_mdp(self.belief, self.sim.gamma, r_max=None)

    def replan(self, t):
        self.policy = value_iteration(self.posterior()).greedy

    def maybe_replan(self, t):
        if t % self.replan_interval == 0:
            self.replan(t)

    def observe(self, states, actions, rewards, next_states, t):
        self.belief.update_batch(states, actions, rewards, next_states, self.obs_var)
        if self.state_rewards:
            # The reward depends on the state only: every other action there shares the readout.
            k = self.sim.n_actions
            for shift in range(1, k):
                self.belief.update_batch(states, (actions + shift) % k, rewards, None, self.obs_var)


class ASop(BeliefController):
    name = "asop"

    def act(self, states, t):
        self.maybe_replan(t)
        return self.policy[states]


class Thompson(BeliefController):
    name = "thompson"

    def replan(self, t):
        self.policy = value_iteration(sample_posterior_mdp(self.belief, self.sim.gamma, self.rng)).greedy

    def act(self, states, t):
        self.maybe_replan(t)
        return self.policy[states]


class EpsGreedy(BeliefController):
    """Uniform action w.p. ``eps``; otherwise the SOP action or, when learning,
    the posterior-optimal action replanned every ``replan_interval`` steps."""

    def __init__(self, sim, obs_var, rng, eps=0.1, learning=False, replan_interval=10):
        super().__init__(sim, obs_var, rng, replan_interval)
        self.eps = float(eps)
        self.learning = bool(learning)
        self.name = "l_eps_fixed" if learning else "eps_greedy"

    def act(self, states, t):
        if self.learning:
            self.maybe_replan(t)
        base = self.policy[states]
        flip = self.rng.random(states.size) < self.eps
        rand = self.rng.integers(self.sim.n_actions, size=states.size)
        return np.where(flip, rand, base)

    def observe(self, states, actions, rewards, next_states, t):
        if self.learning:
            super().observe(states, actions, rewards, next_states, t)


def kg_augmented_q(belief, s, obs_var, gamma, v_sim, posterior_trans=None):
    """Earn + gamma * learn + gamma * position for every action at ``s``.

    The learn term adds the variance removed from the reward mean by one
    observation and the expected L1 movement of the Dirichlet mean after one
    transition, ``2 (1 - sum p**2) / (alpha_0 + 1)``.
    """
    prec = belief.precisions[s]
    earn = belief.means[s]
    tau = 1.0 / obs_var
    reward_info = 1.0 / prec - 1.0 / (prec + tau) if np.isfinite(tau) else 1.0 / prec
    alpha = belief.alpha[s]
    a0 = alpha.sum(axis=1)
    p = alpha / a0[:, None] if posterior_trans is None else posterior_trans
    transition_info = 2.0 * (1.0 - np.sum(p * p, axis=1)) / (a0 + 1.0)
    position = p @ v_sim
    return earn + gamma * (reward_info + transition_info) + gamma * position


def allocate_proportional(q, n_units):
    """Split ``n_units`` over actions in proportion to ``max(q, 0)``.

    Largest remainders settle the rounding (lowest index first on ties); a
    single unit, or all-nonpositive scores, falls back to the argmax.
    """
    q = np.asarray(q, dtype=float)
    best = int(greedy_actions(q[None, :])[0])
    w = np.maximum(q, 0.0)
    if n_units == 1 or w.sum() <= 0:
        return np.full(n_units, best)
    share = n_units * w / w.sum()
    counts = np.floor(share).astype(int)
    rem = share - counts
    order = np.lexsort((np.arange(q.size), -rem))
    counts[order[: n_units - counts.sum()]] += 1
    return np.repeat(np.arange(q.size), counts)


class KgSep(BeliefController):
    """Knowledge-gradient controller; units sharing a state split across actions."""

    name = "kg_sep"

    def __init__(self, sim, obs_var, rng, replan_interval=10):
        super().__init__(sim, obs_var, rng, replan_interval)
        self.v_sim = value_iteration(sim).v

    def replan(self, t):
        self.v_sim = value_iteration(self.posterior()).v

    def act(self, states, t):
        self.maybe_replan(t)
        g = self.sim.gamma
        out = np.empty(states.size, dtype=int)
        for s in np.unique(states):
            idx = np.flatnonzero(states == s)
            q = kg_augmented_q(self.belief, int(s), self.obs_var, g, self.v_sim)
            out[idx] = allocate_proportional(q, idx.size)
        return out


class Sep(BeliefController):
    """Three-phase SEP: uniform pilot, EPI-directed exploration, monitored exploitation.

    ``n_explore`` units (the first ones) run the pilot and exploration phases;
    the rest follow the simulator policy until exploitation begins. With a
    ``navigator`` the exploration phase uses it instead of the EPI argmax.
    """

    name = "sep"

    def __init__(self, sim, obs_var, rng, schedule=None, n_explore=None, navigator=None, beta_conf=0.0):
        schedule = schedule or PhaseSchedule()
        super().__init__(sim, obs_var, rng, schedule.replan_interval)
        self.schedule = schedule
        self.n_explore = n_explore
        self.navigator = navigator
        self.beta_conf = beta_conf
        self.epi_horizon = int(sim.t_eff)
        self.epi = None
        self.epi_baseline = None
        self.burst_until = -1
        self.phase = None

    def _explorers(self, states):
        n = states.size if self.n_explore is None else min(int(self.n_explore), states.size)
        mask = np.zeros(states.size, dtype=bool)
        mask[:n] = True
        return mask

    def refresh_epi(self, mdp=None):
        mdp = self.posterior() if mdp is None else mdp
        pol = StochasticPolicy.deterministic(self.policy, mdp.n_actions)
        self.epi = compute_epi(mdp, pol, self.belief, self.beta_conf, self.obs_var, self.epi_horizon)
        return float(self.epi.max())

    def _enter(self, phase, t):
        if phase != self.phase:
            self.log(t, f"phase:{phase.value}")
            self.phase = phase

    def act(self, states, t):
        phase = self.schedule.phase(t)
        self._enter(phase, t)
        explorers = self._explorers(states)
        if phase == Phase.EXPLOIT:
            if t == self.schedule.t_pilot + self.schedule.t_explore:
                self.replan(t)
                self.epi_baseline = self.refresh_epi()
            elif (t - self.schedule.t_pilot - self.schedule.t_explore) % self.replan_interval == 0:
                self.replan(t)
                current = self.refresh_epi()
                if current > self.schedule.reexplore_threshold * self.epi_baseline:
                    self.burst_until = t + 1
                    self.log(t, "reexplore", f"{current:.6g}")
                    self.epi_baseline = current
            actions = self.policy[states].copy()
            if t < self.burst_until:
                burst = explorers
                actions[burst] = np.argmax(self.epi[states[burst]], axis=1)
            return actions
        actions = self.policy[states].copy()
        ex = np.flatnonzero(explorers)
        if phase == Phase.PILOT:
            actions[ex] = self.rng.integers(self.sim.n_actions, size=ex.size)
            return actions
        if self.navigator is not None:
            actions[ex] = [self.navigator(int(states[i]), self.rng) for i in ex]
            return actions
        if self.epi is None or t % self.replan_interval == 0:
            self.refresh_epi()
        take = ex[self.rng.random(ex.size) < self.schedule.eps_explore]
        actions[take] = np.argmax(self.epi[states[take]], axis=1)
        return actions


class FisherSep(BeliefController):
    """Pilot, PVV-minimizing exploration, posterior exploitation.

    The design targets the current posterior-optimal policy; reward-parameter
    variances start at ``stated_var / kappa0`` (simulator self-consistency)
    and are refreshed from pilot logs through a Normal-Inverse-Gamma update.
    """

    name = "fisher_sep_r"

    def __init__(self, sim, obs_var, rng, schedule=None, n_explore=None, stated_var=None,
                 fisher_iters=60, mode="reward", design_init=None, explorer_start=None):
        schedule = schedule or PhaseSchedule(replan_interval=10)
        super().__init__(sim, obs_var, rng, schedule.replan_interval, alpha0=FISHER_ALPHA0)
        self.schedule = schedule
        self.n_explore = n_explore
        self.stated_var = float(obs_var if stated_var is None else stated_var)
        self.fisher_iters = int(fisher_iters)
        self.mode = mode
        self.design_init = design_init
        self.explorer_start = explorer_start
        self.kappa0 = kappa0_self_consistency(sim, self.stated_var, rng=rng)
        self.theta_var = self.stated_var / self.kappa0
        self.pilot_log = {}
        self.design = None
        self.phase = None

    def refresh_theta_var(self):
        tv = self.theta_var.copy()
        for (s, a), xs in self.pilot_log.items():
            prior = nig_prior(self.sim.rewards[s, a], self.stated_var, self.kappa0[s, a], FISHER_ALPHA0)
            post, _ = nig_update_and_tau(prior, np.asarray(xs))
            tv[s, a] = post.mean_variance
        self.theta_var = np.maximum(tv, 1e-12)

    def redesign(self, t):
        self.refresh_theta_var()
        mdp = self.posterior()
        target = value_iteration(mdp).policy()
        inputs = DesignInputs(self.theta_var, 1.0 / self.obs_var, self.belief.concentration, mdp.t_eff,
                              explorer_init=self.explorer_start)
        self.design = minimize_pvv(mdp, target, inputs, n_iter=self.fisher_iters, rng=self.rng,
                                   mode=self.mode, init=self.design or self.design_init)
        self.log(t, "design")

    def act(self, states, t):
        phase = self.schedule.phase(t)
        if phase != self.phase:
            self.log(t, f"phase:{phase.value}")
            self.phase = phase
        n = states.size if self.n_explore is None else min(int(self.n_explore), states.size)
        if phase == Phase.EXPLOIT:
            self.maybe_replan(t - self.schedule.t_pilot - self.schedule.t_explore)
            return self.policy[states]
        actions = self.policy[states].copy()
        if phase == Phase.PILOT:
            actions[:n] = self.rng.integers(self.sim.n_actions, size=n)
            return actions
        rel = t - self.schedule.t_pilot
        if self.design is None or rel % self.replan_interval == 0:
            self.redesign(t)
        take = self.rng.random(n) < self.schedule.eps_explore
        sampled = _sample_rows(self.design.probs, states[:n], self.rng)
        actions[:n] = np.where(take, sampled, actions[:n])
        return actions

    def observe(self, states, actions, rewards, next_states, t):
        if self.schedule.phase(t) == Phase.PILOT:
            n = states.size if self.n_explore is None else min(int(self.n_explore), states.size)
            for s, a, r in zip(states[:n], actions[:n], rewards[:n]):
                self.pilot_log.setdefault((int(s), int(a)), []).append(float(r))
        super().observe(states, actions, rewards, next_states, t)
