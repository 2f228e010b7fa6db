"""Fisher-SEP design engine.

Value gradients through the Bellman resolvent, the posterior predictive value
variance (PVV) of a target policy as a function of an explorer's expected
pilot counts, a coordinate-descent PVV minimizer, the Exploration Priority
Index, and the finite-difference yield gradient for SIS worlds.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParameterError, NumericalFailureError
from .mdp import (
    StochasticPolicy,
    bellman_resolvent,
    policy_values,
    uniform_init,
    visitation_distribution,
)

MODES = ("joint", "reward", "transition")
SUPPORT_FLOOR = 1e-12


@dataclass
class DesignInputs:
    """Prior and measurement inputs of the PVV criterion.

    ``theta_var`` is the reward-parameter variance, ``tau_obs`` the
    per-observation precision, ``dirichlet_conc`` the total Dirichlet mass per
    pair (``inf`` pins the transition row), ``horizon_eff`` the count scale
    ``T`` in ``n = T d pi``. ``init`` is the start distribution of both
    visitation measures (uniform when omitted); ``explorer_init`` overrides it
    for the explorer alone, e.g. when units start at a known cell.
    """

    theta_var: np.ndarray
    tau_obs: np.ndarray
    dirichlet_conc: np.ndarray
    horizon_eff: float
    init: np.ndarray = None
    visitation_horizon: int = None
    explorer_init: np.ndarray = None

    def __post_init__(self):
        self.theta_var = np.asarray(self.theta_var, dtype=float)
        shape = self.theta_var.shape
        self.tau_obs = np.broadcast_to(np.asarray(self.tau_obs, dtype=float), shape).copy()
        self.dirichlet_conc = np.broadcast_to(
            np.asarray(self.dirichlet_conc, dtype=float), shape
        ).copy()
        if np.any(self.theta_var <= 0) or np.any(self.tau_obs <= 0) or np.any(self.dirichlet_conc <= 0):
            raise InvalidParameterError("theta_var, tau_obs and dirichlet_conc must be positive")
        if not self.horizon_eff > 0:
            raise InvalidParameterError("horizon_eff must be positive")

    def with_tau(self, tau_obs):
        return DesignInputs(
            self.theta_var, tau_obs, self.dirichlet_conc, self.horizon_eff, self.init,
            self.visitation_horizon, self.explorer_init,
        )

    def d_horizon(self):
        if self.visitation_horizon is not None:
            return int(self.visitation_horizon)
        return max(1, int(self.horizon_eff))

    def start(self, n_states):
        return uniform_init(n_states) if self.init is None else np.asarray(self.init, dtype=float)

    def explorer_start(self, n_states):
        if self.explorer_init is None:
            return self.start(n_states)
        return np.asarray(self.explorer_init, dtype=float)


@dataclass
class GradientTable:
    """``reward_grad[s, s', a'] = M[s, s'] pi(a'|s')``; transition gradient
    vector at ``(s', a')`` is ``trans_grad_scale[s, s', a'] * v_tgt``."""

    reward_grad: np.ndarray
    trans_grad_scale: np.ndarray
    v_tgt: np.ndarray

    def transition_grad(self, s, s_from, a):
        return self.trans_grad_scale[s, s_from, a] * self.v_tgt


def value_gradients(mdp, target):
    m = bellman_resolvent(mdp, target)
    rg = m[:, :, None] * target.probs[None, :, :]
    return GradientTable(
        reward_grad=rg,
        trans_grad_scale=mdp.gamma * rg,
        v_tgt=policy_values(mdp, target),
    )


def expected_counts(mdp, explorer, inputs):
    """``n[s, a] = T * d_explorer(s) * explorer(a|s)``."""
    d = visitation_distribution(mdp, explorer, inputs.d_horizon(), inputs.explorer_start(mdp.n_states))
    return inputs.horizon_eff * d[:, None] * explorer.probs


def _chart_quadratic(p, conc, n, g):
    """``g~' (Sigma~^{-1} + n F~)^{-1} g~`` in the drop-last chart of the support of p.

    Coordinates with ``p <= SUPPORT_FLOOR`` carry no Dirichlet tangent
    variance and are dropped before the chart is formed.
    """
    support = np.flatnonzero(p > SUPPORT_FLOOR)
    if support.size < 2 or not np.isfinite(conc):
        return 0.0
    ps = p[support] / p[support].sum()
    gs = g[support]
    q = ps[:-1]
    cov = (np.diag(q) - np.outer(q, q)) / conc
    fisher = np.diag(1.0 / q) + 1.0 / ps[-1]
    gc = gs[:-1] - gs[-1]
    a = np.linalg.inv(cov) + n * fisher
    x = np.linalg.solve(a, gc)
    return float(gc @ x)


@dataclass
class PvvTerms:
    """Target-side quantities of the PVV, fixed while the explorer varies."""

    reward_weight: np.ndarray
    trans_weight: np.ndarray
    p0: np.ndarray
    v_tgt: np.ndarray
    d_tgt: np.ndarray = field(repr=False, default=None)


def pvv_terms(mdp, target, inputs):
    grads = value_gradients(mdp, target)
    d_tgt = visitation_distribution(mdp, target, inputs.d_horizon(), inputs.start(mdp.n_states))
    w_r = np.einsum("u,usa->sa", d_tgt, grads.reward_grad**2)
    w_t = np.einsum("u,usa->sa", d_tgt, grads.trans_grad_scale**2)
    return PvvTerms(w_r, w_t, np.asarray(mdp.transitions), grads.v_tgt, d_tgt)


def pvv_given_counts(terms, counts, inputs, mode="joint"):
    """PVV for explicit pilot counts ``counts[s, a]``."""
    if mode not in MODES:
        raise InvalidParameterError(f"mode must be one of {MODES}")
    counts = np.asarray(counts, dtype=float)
    total = 0.0
    if mode in ("joint", "reward"):
        post_prec = 1.0 / inputs.theta_var + counts * inputs.tau_obs
        total += float(np.sum(terms.reward_weight / post_prec))
    if mode in ("joint", "transition"):
        s_count, k_count = counts.shape
        for s in range(s_count):
            for a in range(k_count):
                w = terms.trans_weight[s, a]
                if w == 0.0:
                    continue
                q = _chart_quadratic(terms.p0[s, a], inputs.dirichlet_conc[s, a], counts[s, a], terms.v_tgt)
                total += w * q
    if not np.isfinite(total):
        raise NumericalFailureError("non-finite PVV")
    return total


def compute_pvv(mdp, explorer, target, inputs, mode="joint"):
    """Posterior predictive variance of the target's value after the explorer's pilot."""
    terms = pvv_terms(mdp, target, inputs)
    return pvv_given_counts(terms, expected_counts(mdp, explorer, inputs), inputs, mode)


def minimize_pvv(mdp, target, inputs, n_iter=60, lr=0.3, init=None, rng=None, mode="reward", history=None):
    """Coordinate descent over stochastic explorers.

    Each iteration picks a random state and tries, for every action ``a``, the
    row ``(1 - lr) * row + lr * e_a``; the best candidate replaces the row only
    if it strictly lowers the PVV. ``history`` (a list) receives the accepted
    PVV after every iteration.
    """
    if n_iter < 1:
        raise InvalidParameterError("n_iter must be at least 1")
    if not 0.0 < lr < 1.0:
        raise InvalidParameterError("lr must lie in (0, 1)")
    rng = np.random.default_rng(0) if rng is None else rng
    s_count, k_count = mdp.rewards.shape
    terms = pvv_terms(mdp, target, inputs)
    pi = (np.full((s_count, k_count), 1.0 / k_count) if init is None else np.array(init.probs, dtype=float))

    def value(probs):
        return pvv_given_counts(terms, expected_counts(mdp, StochasticPolicy(probs), inputs), inputs, mode)

    base = value(pi)
    for _ in range(int(n_iter)):
        s = int(rng.integers(s_count))
        best, best_row = base, None
        for a in range(k_count):
            row = (1.0 - lr) * pi[s]
            row[a] += lr
            row /= row.sum()
            trial = pi.copy()
            trial[s] = row
            v = value(trial)
            if v < best:
                best, best_row = v, row
        if best_row is not None:
            pi[s] = best_row
            base = best
        if history is not None:
            history.append(base)
    return StochasticPolicy(pi)


def grid_minimize_pvv(mdp, target, inputs, steps=20, mode="reward"):
    """Exhaustive search over a probability grid; two-action problems only."""
    s_count, k_count = mdp.rewards.shape
    if k_count != 2:
        raise InvalidParameterError("grid search supports two actions")
    terms = pvv_terms(mdp, target, inputs)
    levels = np.linspace(0.0, 1.0, steps + 1)
    best, best_pi = np.inf, None
    for combo in np.array(np.meshgrid(*([levels] * s_count), indexing="ij")).reshape(s_count, -1).T:
        probs = np.column_stack([combo, 1.0 - combo])
        v = pvv_given_counts(terms, expected_counts(mdp, StochasticPolicy(probs), inputs), inputs, mode)
        if v < best:
            best, best_pi = v, probs
    return StochasticPolicy(best_pi)


def compute_epi(mdp, policy, belief, beta_conf, obs_var, horizon, normalize="obs_var"):
    """Exploration Priority Index ``d(s) * (reward_term + transition_term)``.

    ``d`` is the normalized discounted visitation from a uniform start.
    ``normalize="obs_var"`` divides the reward term by the observation
    variance; ``"r_max"`` divides it by ``R_max**2`` instead.
    """
    if not isinstance(policy, StochasticPolicy):
        policy = StochasticPolicy.deterministic(policy, mdp.n_actions)
    s_count = mdp.n_states
    d = visitation_distribution(mdp, policy, max(1, int(horizon)), uniform_init(s_count))
    beta = np.broadcast_to(np.asarray(beta_conf, dtype=float), mdp.rewards.shape)
    num = 1.0 / belief.precisions + beta**2
    if normalize == "obs_var":
        reward_term = num / np.asarray(obs_var, dtype=float)
    elif normalize == "r_max":
        reward_term = num / max(mdp.r_max, 1e-300) ** 2
    else:
        raise InvalidParameterError("normalize must be 'obs_var' or 'r_max'")
    g = mdp.gamma
    transition_term = g * mdp.r_max * (s_count - 1) / ((1.0 - g) * belief.alpha.sum(axis=2))
    return d[:, None] * (reward_term + transition_term)


def discounted_yield(sis_world, prevalence, t_look, gamma):
    """``sum_{t < t_look} gamma**t sum_j prev_{j,t} * n_tests * phi_j`` along the expected path."""
    mult = np.asarray(getattr(sis_world, "yield_multiplier", 1.0), dtype=float)
    n_tests = float(sis_world.tests_per_zone)
    prev = np.array(prevalence, dtype=float)
    total, w = 0.0, 1.0
    for _ in range(int(t_look)):
        total += w * float(np.sum(prev * mult)) * n_tests
        prev = sis_world.expected_step(prev)
        w *= gamma
    return total


def ysne_gradient(sis_world, zone, delta=0.01, t_look=15, gamma=0.95):
    """Forward finite-difference yield sensitivity to prevalence at ``zone``.

    ``sis_world`` supplies ``prevalence``, ``tests_per_zone``, an optional
    ``yield_multiplier`` and ``expected_step(prev)`` (noise-free SIS update).
    """
    base_prev = np.asarray(sis_world.prevalence, dtype=float)
    if not 0 <= zone < base_prev.size:
        raise InvalidParameterError(f"zone {zone} out of range")
    if t_look < 1:
        raise InvalidParameterError("t_look must be at least 1")
    bumped = base_prev.copy()
    bumped[zone] += delta
    return (discounted_yield(sis_world, bumped, t_look, gamma) - discounted_yield(sis_world, base_prev, t_look, gamma)) / delta


def spread_jacobian(sis_world, eps=1e-6):
    """Finite-difference Jacobian ``L[i, j] = d prev_i' / d prev_j`` of one SIS step."""
    base = np.asarray(sis_world.prevalence, dtype=float)
    f0 = sis_world.expected_step(base)
    jac = np.zeros((base.size, base.size))
    for j in range(base.size):
        x = base.copy()
        x[j] += eps
        jac[:, j] = (sis_world.expected_step(x) - f0) / eps
    return jac


def ysne_truncation_bound(sis_world, t_look, gamma):
    """Geometric tail ``(g rho)**T / (1 - g rho) * ||dy/dprev||``; inf if ``g rho >= 1``."""
    rho = float(np.max(np.abs(np.linalg.eigvals(spread_jacobian(sis_world)))))
    gr = gamma * rho
    if gr >= 1.0:
        return np.inf
    mult = np.asarray(getattr(sis_world, "yield_multiplier", 1.0), dtype=float)
    scale = float(sis_world.tests_per_zone) * float(np.max(mult))
    return gr**t_look / (1.0 - gr) * scale


@dataclass
class RankStabilityReport:
    m_factor: float
    trials: int
    ratios: np.ndarray

    @property
    def max_ratio(self):
        return float(np.max(self.ratios))

    @property
    def bound(self):
        return self.m_factor**2


def pvv_tau_rank_stability_check(
    mdp, target, inputs, m_factor=2.0, trials=10, rng=None, optimizer="coordinate", n_iter=60, lr=0.3, mode="reward", grid_steps=20
):
    """True-tau PVV of designs built with tau misspecified within ``[1/M, M]``.

    Returns the ratio ``PVV(pi(tau~); tau) / PVV(pi(tau); tau)`` per trial.
    """
    if m_factor < 1:
        raise InvalidParameterError("m_factor must be at least 1")
    rng = np.random.default_rng(0) if rng is None else rng

    def design(inp, seed):
        if optimizer == "grid":
            return grid_minimize_pvv(mdp, target, inp, steps=grid_steps, mode=mode)
        return minimize_pvv(mdp, target, inp, n_iter=n_iter, lr=lr, rng=np.random.default_rng(seed), mode=mode)

    terms = pvv_terms(mdp, target, inputs)

    def true_pvv(pi):
        return pvv_given_counts(terms, expected_counts(mdp, pi, inputs), inputs, mode)

    ratios = []
    for _ in range(int(trials)):
        seed = int(rng.integers(2**31))
        u = np.exp(rng.uniform(-np.log(m_factor), np.log(m_factor), size=inputs.tau_obs.shape))
        pi_star = design(inputs, seed)
        pi_tilde = design(inputs.with_tau(inputs.tau_obs * u), seed)
        ratios.append(true_pvv(pi_tilde) / true_pvv(pi_star))
    return RankStabilityReport(float(m_factor), int(trials), np.asarray(ratios))
