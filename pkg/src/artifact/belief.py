"""Conjugate beliefs anchored at a frozen simulator.

Gaussian reward means, Dirichlet transition rows, Normal-Inverse-Gamma
precision estimates, Beta prevalence beliefs, and the two simulator-credibility
estimators (pooled ``kappa_eff`` and the simulator-intrinsic ``kappa0``).
"""

from dataclasses import dataclass, replace

import numpy as np

from .errors import (
    InsufficientInformationError,
    InvalidObservationError,
    InvalidParameterError,
)
from .mdp import StochasticPolicy, TabularMDP, bellman_resolvent, value_iteration, visitation_distribution


@dataclass
class BeliefState:
    """Per-pair Gaussian reward posterior and Dirichlet transition posterior."""

    means: np.ndarray
    precisions: np.ndarray
    alpha: np.ndarray

    def __post_init__(self):
        self.means = np.array(self.means, dtype=float)
        self.precisions = np.array(self.precisions, dtype=float)
        self.alpha = np.array(self.alpha, dtype=float)
        s, k = self.means.shape
        if self.precisions.shape != (s, k) or self.alpha.shape != (s, k, s):
            raise InvalidParameterError("belief block shapes disagree")
        if np.any(self.precisions <= 0) or np.any(self.alpha <= 0):
            raise InvalidParameterError("precisions and concentrations must be positive")

    @property
    def n_states(self):
        return self.means.shape[0]

    @property
    def n_actions(self):
        return self.means.shape[1]

    def copy(self):
        return BeliefState(self.means.copy(), self.precisions.copy(), self.alpha.copy())

    @property
    def variances(self):
        return 1.0 / self.precisions

    @property
    def concentration(self):
        """Total Dirichlet mass per pair."""
        return self.alpha.sum(axis=2)

    def transition_means(self):
        return self.alpha / self.alpha.sum(axis=2, keepdims=True)

    def update(self, s, a, reward, next_state, obs_var):
        """In-place conjugate update with one transition."""
        reward = float(reward)
        if not np.isfinite(reward):
            raise InvalidObservationError("non-finite reward")
        if obs_var <= 0:
            raise InvalidParameterError("obs_var must be positive")
        prec = self.precisions[s, a]
        obs_prec = 1.0 / obs_var
        self.means[s, a] = (prec * self.means[s, a] + obs_prec * reward) / (prec + obs_prec)
        self.precisions[s, a] = prec + obs_prec
        if next_state is not None:
            self.alpha[s, a, next_state] += 1.0
        return self

    def update_batch(self, states, actions, rewards, next_states, obs_var):
        """In-place update with a batch; identical to sequential updates in any order."""
        states = np.asarray(states, dtype=int)
        actions = np.asarray(actions, dtype=int)
        rewards = np.asarray(rewards, dtype=float)
        if not np.all(np.isfinite(rewards)):
            raise InvalidObservationError("non-finite reward")
        obs_var = np.broadcast_to(np.asarray(obs_var, dtype=float), rewards.shape)
        if np.any(obs_var <= 0):
            raise InvalidParameterError("obs_var must be positive")
        w = 1.0 / obs_var
        s, k = self.means.shape
        add_prec = np.zeros((s, k))
        add_sum = np.zeros((s, k))
        np.add.at(add_prec, (states, actions), w)
        np.add.at(add_sum, (states, actions), w * rewards)
        new_prec = self.precisions + add_prec
        self.means = (self.precisions * self.means + add_sum) / new_prec
        self.precisions = new_prec
        if next_states is not None:
            np.add.at(self.alpha, (states, actions, np.asarray(next_states, dtype=int)), 1.0)
        return self


def init_belief(sim_rewards, sim_transitions, sigma0, alpha0, smoothing=None):
    """Prior centred on the simulator.

    Reward means equal the simulator rewards with precision ``1/sigma0**2``;
    Dirichlet rows are ``smoothing + alpha0 * P_sim``. The default smoothing
    ``1/|S|`` spreads a single pseudo-count over each row.
    """
    if not sigma0 > 0:
        raise InvalidParameterError("sigma0 must be positive")
    if not alpha0 >= 0:
        raise InvalidParameterError("alpha0 must be nonnegative")
    r = np.asarray(sim_rewards, dtype=float)
    p = np.asarray(sim_transitions, dtype=float)
    smoothing = 1.0 / p.shape[-1] if smoothing is None else float(smoothing)
    if not smoothing > 0:
        raise InvalidParameterError("smoothing must be positive")
    return BeliefState(
        means=r.copy(),
        precisions=np.full(r.shape, 1.0 / sigma0**2),
        alpha=smoothing + alpha0 * p,
    )


def bayes_update(belief, s, a, reward, next_state, obs_var):
    """Pure variant of :meth:`BeliefState.update`; the input is left untouched."""
    return belief.copy().update(s, a, reward, next_state, obs_var)


def posterior_mdp(belief, gamma, r_max=None):
    """Posterior-mean MDP: reward means and normalized Dirichlet rows."""
    return TabularMDP(belief.means, belief.transition_means(), gamma, r_max)


def sample_posterior_mdp(belief, gamma, rng, r_max=None):
    """One draw from the posterior; Dirichlet rows via Gamma normalization."""
    r = belief.means + rng.standard_normal(belief.means.shape) / np.sqrt(belief.precisions)
    g = rng.standard_gamma(belief.alpha)
    sums = g.sum(axis=2, keepdims=True)
    # Tiny concentrations can underflow every gamma variate in a row.
    empty = sums[..., 0] <= 0
    if np.any(empty):
        g[empty] = belief.alpha[empty]
        sums = g.sum(axis=2, keepdims=True)
    p = g / sums
    bound = float(np.max(np.abs(r)))
    if r_max is not None:
        bound = max(bound, float(r_max))
    return TabularMDP(r, p, gamma, bound)


@dataclass(frozen=True)
class NigPosterior:
    """Normal-Inverse-Gamma hyperparameters (mu, kappa, alpha, beta)."""

    mu: float
    kappa: float
    alpha_shape: float
    beta_rate: float

    def __post_init__(self):
        if not (self.kappa > 0 and self.alpha_shape > 0 and self.beta_rate > 0):
            raise InvalidParameterError("NIG kappa, alpha and beta must be positive")

    @property
    def precision_mean(self):
        if self.alpha_shape <= 1:
            raise InsufficientInformationError("alpha_shape must exceed 1")
        return self.alpha_shape / self.beta_rate

    @property
    def mean_variance(self):
        """Marginal posterior variance of the mean, ``beta / ((alpha - 1) kappa)``."""
        if self.alpha_shape <= 1:
            raise InsufficientInformationError("alpha_shape must exceed 1")
        return self.beta_rate / ((self.alpha_shape - 1.0) * self.kappa)


def nig_prior(sim_mean, sigma0_sq, kappa0, alpha0=2.0):
    """Simulator-anchored prior: ``mu0 = sim``, ``beta0 = alpha0 * sigma0**2``."""
    return NigPosterior(float(sim_mean), float(kappa0), float(alpha0), float(alpha0 * sigma0_sq))


def nig_update_and_tau(prior, samples):
    """Conjugate NIG update and the posterior-mean precision ``alpha_n / beta_n``."""
    x = np.asarray(samples, dtype=float).ravel()
    if not np.all(np.isfinite(x)):
        raise InvalidObservationError("non-finite sample")
    n = x.size
    if n == 0:
        if prior.alpha_shape <= 1:
            raise InsufficientInformationError("no samples and alpha0 <= 1")
        return prior, prior.alpha_shape / prior.beta_rate
    xbar = float(x.mean())
    sse = float(np.sum((x - xbar) ** 2))
    k0 = prior.kappa
    post = NigPosterior(
        mu=(k0 * prior.mu + n * xbar) / (k0 + n),
        kappa=k0 + n,
        alpha_shape=prior.alpha_shape + n / 2.0,
        beta_rate=prior.beta_rate + 0.5 * sse + k0 * n * (xbar - prior.mu) ** 2 / (2.0 * (k0 + n)),
    )
    if post.alpha_shape <= 1:
        raise InsufficientInformationError("posterior alpha_shape must exceed 1")
    return post, post.alpha_shape / post.beta_rate


KAPPA_FALLBACK = 2.0


def kappa_eff(pilot_pairs, n_min=2):
    """Pooled method-of-moments simulator credibility.

    ``pilot_pairs`` holds ``(n, sigma0_sq, sample_mean, sample_var, sim_mean)``
    tuples with Bessel-corrected ``sample_var``. Pairs with fewer than
    ``n_min`` samples or zero sample variance are skipped.
    """
    num = 0.0
    den = 0.0
    used = 0
    for n, s0sq, mean, var, mu0 in pilot_pairs:
        if n < n_min or not var > 0:
            continue
        z2 = (mean - mu0) ** 2 / (var / n)
        num += n * s0sq / var
        den += max(z2 - 1.0, 0.0)
        used += 1
    if used == 0 or den <= 0:
        return KAPPA_FALLBACK
    return max(1.0, num / den)


def sensitivity_weights(mdp, target, init=None, horizon=None):
    """``w[s,a] = sum_u d_tgt(u) (dV(u)/dtheta_{s,a})**2`` for the target policy."""
    m = bellman_resolvent(mdp, target)
    s_count = mdp.n_states
    if init is None:
        init = np.full(s_count, 1.0 / s_count)
    if horizon is None:
        horizon = max(1, int(round(10 * mdp.t_eff)))
    d = visitation_distribution(mdp, target, horizon, init)
    grad = m[:, :, None] * target.probs[None, :, :]
    return np.einsum("u,usa->sa", d, grad**2)


def rollout_reward_variance(sim, reward_noise_var, rollouts, rng, horizon=None, mix=0.5, start=None):
    """Empirical per-pair reward variance along simulator rollouts.

    Each step follows the simulator-optimal action with probability ``1 - mix``
    and a uniform action otherwise. Rewards are drawn as
    ``Normal(sim.rewards, reward_noise_var)``. Pairs seen fewer than twice get NaN.
    """
    s_count, k_count = sim.rewards.shape
    if horizon is None:
        horizon = max(1, int(round(sim.t_eff)))
    noise_sd = np.sqrt(np.broadcast_to(np.asarray(reward_noise_var, dtype=float), sim.rewards.shape))
    greedy = value_iteration(sim).greedy
    cum_p = np.cumsum(sim.transitions, axis=2)
    n = np.zeros((s_count, k_count))
    tot = np.zeros((s_count, k_count))
    tot2 = np.zeros((s_count, k_count))
    for _ in range(int(rollouts)):
        s = int(rng.integers(s_count)) if start is None else int(start)
        for _ in range(horizon):
            a = int(rng.integers(k_count)) if rng.random() < mix else int(greedy[s])
            r = sim.rewards[s, a] + noise_sd[s, a] * rng.standard_normal()
            n[s, a] += 1
            tot[s, a] += r
            tot2[s, a] += r * r
            s = min(int(np.searchsorted(cum_p[s, a], rng.random(), side="right")), s_count - 1)
    var = np.full((s_count, k_count), np.nan)
    ok = n >= 2
    var[ok] = (tot2[ok] - tot[ok] ** 2 / n[ok]) / (n[ok] - 1)
    return np.maximum(var, 0.0, where=ok, out=var)


def kappa0_from_parts(consistency, sensitivity, kappa_min=1.0, kappa_max=20.0):
    """``kappa_min + (kappa_max - kappa_min) * c * g_bar`` with ``g_bar = w / max w``."""
    w = np.asarray(sensitivity, dtype=float)
    top = float(np.max(w)) if w.size else 0.0
    g_bar = w / top if top > 0 else np.zeros_like(w)
    c = np.clip(np.nan_to_num(np.asarray(consistency, dtype=float), nan=0.0), 0.0, 1.0)
    return kappa_min + (kappa_max - kappa_min) * c * g_bar


def consistency_ratio(rollout_var, stated_var):
    """``min/max`` of rollout and stated variance; 0 where undefined."""
    v = np.asarray(rollout_var, dtype=float)
    s = np.broadcast_to(np.asarray(stated_var, dtype=float), v.shape)
    hi = np.fmax(v, s)
    lo = np.fmin(v, s)
    out = np.zeros(v.shape)
    ok = np.isfinite(v) & (hi > 0)
    out[ok] = lo[ok] / hi[ok]
    both_zero = np.isfinite(v) & (hi == 0)
    out[both_zero] = 1.0
    return out


def kappa0_self_consistency(
    sim,
    stated_var,
    rollouts=100,
    rng=None,
    kappa_min=1.0,
    kappa_max=20.0,
    reward_noise_var=None,
    horizon=None,
    start=None,
):
    """Simulator-intrinsic prior strength per pair.

    ``reward_noise_var`` is the simulator's own generative reward variance used
    in rollouts; by default the simulator is taken to generate rewards with its
    stated variance, so ``c`` measures only sampling agreement.
    """
    if rollouts < 1:
        raise InvalidParameterError("rollouts must be at least 1")
    if rng is None:
        rng = np.random.default_rng(0)
    stated = np.broadcast_to(np.asarray(stated_var, dtype=float), sim.rewards.shape)
    noise = stated if reward_noise_var is None else reward_noise_var
    v_hat = rollout_reward_variance(sim, noise, rollouts, rng, horizon=horizon, start=start)
    c = consistency_ratio(v_hat, stated)
    sop = value_iteration(sim).policy()
    w = sensitivity_weights(sim, sop)
    return kappa0_from_parts(c, w, kappa_min, kappa_max)


@dataclass(frozen=True)
class BetaBelief:
    a: float
    b: float

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise InvalidParameterError("Beta parameters must be positive")

    @property
    def mean(self):
        return self.a / (self.a + self.b)

    @property
    def variance(self):
        t = self.a + self.b
        return self.a * self.b / (t * t * (t + 1.0))


def beta_prior(p_sim, kappa):
    """``Beta(p * kappa + 1, (1 - p) * kappa + 1)``."""
    return BetaBelief(p_sim * kappa + 1.0, (1.0 - p_sim) * kappa + 1.0)


def beta_update(b, n_pos, n_tests):
    if n_pos < 0 or n_tests < 0 or n_pos > n_tests:
        raise InvalidObservationError(f"invalid counts: {n_pos} positives of {n_tests} tests")
    return replace(b, a=b.a + n_pos, b=b.b + (n_tests - n_pos))


class BetaMap:
    """Vectorized Beta beliefs over many zones."""

    def __init__(self, a, b):
        self.a = np.array(a, dtype=float)
        self.b = np.array(b, dtype=float)
        if np.any(self.a <= 0) or np.any(self.b <= 0):
            raise InvalidParameterError("Beta parameters must be positive")

    @classmethod
    def from_sim(cls, p_sim, kappa):
        p = np.asarray(p_sim, dtype=float)
        return cls(p * kappa + 1.0, (1.0 - p) * kappa + 1.0)

    def copy(self):
        return BetaMap(self.a.copy(), self.b.copy())

    def update(self, zone, n_pos, n_tests):
        if n_pos < 0 or n_tests < 0 or n_pos > n_tests:
            raise InvalidObservationError(f"invalid counts: {n_pos} positives of {n_tests} tests")
        self.a[zone] += n_pos
        self.b[zone] += n_tests - n_pos

    @property
    def mean(self):
        return self.a / (self.a + self.b)

    @property
    def variance(self):
        t = self.a + self.b
        return self.a * self.b / (t * t * (t + 1.0))

    def sample(self, rng):
        return rng.beta(self.a, self.b)


def uniform_policy_like(mdp):
    return StochasticPolicy.uniform(mdp.n_states, mdp.n_actions)
