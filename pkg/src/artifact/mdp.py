"""Tabular MDPs, dynamic programming and visitation measures."""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidModelError, InvalidParameterError, NumericalFailureError

ROW_RENORM_TOL = 1e-6
ROW_SUM_TOL = 1e-9
TIE_TOL = 1e-9


def _frozen(x):
    x = np.array(x, dtype=float, copy=True)
    x.setflags(write=False)
    return x


@dataclass(frozen=True, eq=False)
class TabularMDP:
    """Finite discounted MDP.

    ``rewards[s, a]`` is the expected one-step reward and
    ``transitions[s, a, s']`` the next-state law. Rows that miss unit mass by
    less than 1e-6 are renormalized on construction; larger deviations raise.
    """

    rewards: np.ndarray
    transitions: np.ndarray
    gamma: float
    r_max: float = None

    def __post_init__(self):
        r = np.asarray(self.rewards, dtype=float)
        p = np.asarray(self.transitions, dtype=float)
        if r.ndim != 2 or p.ndim != 3 or p.shape != (r.shape[0], r.shape[1], r.shape[0]):
            raise InvalidModelError(f"shape mismatch: rewards {r.shape}, transitions {p.shape}")
        if r.shape[0] < 1 or r.shape[1] < 1:
            raise InvalidModelError("need at least one state and one action")
        if not (np.all(np.isfinite(r)) and np.all(np.isfinite(p))):
            raise InvalidModelError("non-finite reward or transition entry")
        if np.any(p < -ROW_SUM_TOL) or np.any(p > 1 + ROW_SUM_TOL):
            raise InvalidModelError("transition entry outside [0, 1]")
        p = np.clip(p, 0.0, 1.0)
        sums = p.sum(axis=2)
        if np.any(np.abs(sums - 1.0) > ROW_RENORM_TOL):
            worst = float(np.max(np.abs(sums - 1.0)))
            raise InvalidModelError(f"transition row off unit mass by {worst:.3g}")
        p = p / sums[:, :, None]
        gamma = float(self.gamma)
        if not (0.0 <= gamma < 1.0):
            raise InvalidModelError(f"gamma must lie in [0, 1), got {gamma}")
        bound = float(np.max(np.abs(r))) if self.r_max is None else float(self.r_max)
        if not np.isfinite(bound) or bound < 0:
            raise InvalidModelError("r_max must be finite and nonnegative")
        if np.any(np.abs(r) > bound + 1e-12):
            raise InvalidModelError("reward exceeds r_max")
        object.__setattr__(self, "rewards", _frozen(r))
        object.__setattr__(self, "transitions", _frozen(p))
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "r_max", bound)

    @property
    def n_states(self):
        return self.rewards.shape[0]

    @property
    def n_actions(self):
        return self.rewards.shape[1]

    @property
    def t_eff(self):
        return 1.0 / (1.0 - self.gamma)

    def replace(self, rewards=None, transitions=None, gamma=None, r_max=None):
        """Copy with some fields swapped; r_max widens to cover new rewards."""
        r = self.rewards if rewards is None else np.asarray(rewards, dtype=float)
        if r_max is None:
            r_max = max(self.r_max, float(np.max(np.abs(r))))
        return TabularMDP(
            r,
            self.transitions if transitions is None else transitions,
            self.gamma if gamma is None else gamma,
            r_max,
        )


@dataclass(frozen=True, eq=False)
class StochasticPolicy:
    """Per-state action distribution ``probs[s, a]``."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 2:
            raise InvalidParameterError("policy must be a [S, K] matrix")
        if not np.all(np.isfinite(p)) or np.any(p < -ROW_SUM_TOL):
            raise InvalidParameterError("policy entries must be finite and nonnegative")
        p = np.clip(p, 0.0, None)
        sums = p.sum(axis=1)
        if np.any(np.abs(sums - 1.0) > ROW_RENORM_TOL):
            raise InvalidParameterError("policy rows must sum to 1")
        object.__setattr__(self, "probs", _frozen(p / sums[:, None]))

    @classmethod
    def deterministic(cls, actions, n_actions):
        actions = np.asarray(actions, dtype=int)
        probs = np.zeros((actions.size, n_actions))
        probs[np.arange(actions.size), actions] = 1.0
        return cls(probs)

    @classmethod
    def uniform(cls, n_states, n_actions):
        return cls(np.full((n_states, n_actions), 1.0 / n_actions))

    @property
    def n_states(self):
        return self.probs.shape[0]

    @property
    def n_actions(self):
        return self.probs.shape[1]

    def sample(self, state, rng):
        return int(rng.choice(self.n_actions, p=self.probs[state]))


@dataclass(frozen=True, eq=False)
class ValueSolution:
    v: np.ndarray
    q: np.ndarray
    greedy: np.ndarray
    iterations: int = 0

    def policy(self):
        return StochasticPolicy.deterministic(self.greedy, self.q.shape[1])


def greedy_actions(q, tie_tol=TIE_TOL):
    """Lowest action index among the (near-)maximal entries of each row."""
    q = np.asarray(q, dtype=float)
    best = q.max(axis=1, keepdims=True)
    return np.argmax(q >= best - tie_tol, axis=1)


def bellman_backup(mdp, v):
    return mdp.rewards + mdp.gamma * (mdp.transitions @ v)


def value_iteration(mdp, tol=1e-10, max_iter=1_000_000):
    """Optimal values by repeated Bellman backups.

    Stops once successive iterates differ by less than ``tol`` in sup norm, so
    one further backup moves the returned ``v`` by at most ``gamma * tol``.
    """
    if tol <= 0:
        raise InvalidParameterError("tol must be positive")
    v = np.zeros(mdp.n_states)
    for it in range(1, max_iter + 1):
        q = bellman_backup(mdp, v)
        v_new = q.max(axis=1)
        if not np.all(np.isfinite(v_new)):
            raise NumericalFailureError("value iteration diverged")
        diff = np.max(np.abs(v_new - v))
        v = v_new
        if diff < tol:
            break
    else:
        raise NumericalFailureError("value iteration did not converge")
    q = bellman_backup(mdp, v)
    return ValueSolution(v=q.max(axis=1), q=q, greedy=greedy_actions(q), iterations=it)


def _check_policy(mdp, policy):
    if policy.probs.shape != mdp.rewards.shape:
        raise InvalidParameterError(
            f"policy shape {policy.probs.shape} does not match MDP {mdp.rewards.shape}"
        )


def _check_init(mdp, init):
    init = np.asarray(init, dtype=float)
    if init.shape != (mdp.n_states,) or np.any(init < 0) or abs(init.sum() - 1.0) > 1e-8:
        raise InvalidParameterError("init must be a distribution over states")
    return init


def policy_kernel(mdp, policy):
    """Policy-induced transition matrix ``P^pi`` and reward vector ``r^pi``."""
    _check_policy(mdp, policy)
    pi = policy.probs
    p_pi = np.einsum("sa,sat->st", pi, mdp.transitions)
    r_pi = np.einsum("sa,sa->s", pi, mdp.rewards)
    return p_pi, r_pi


def bellman_resolvent(mdp, policy):
    """``(I - gamma P^pi)^{-1}`` by a dense solve."""
    p_pi, _ = policy_kernel(mdp, policy)
    a = np.eye(mdp.n_states) - mdp.gamma * p_pi
    try:
        m = np.linalg.solve(a, np.eye(mdp.n_states))
    except np.linalg.LinAlgError as exc:
        raise NumericalFailureError(str(exc)) from exc
    if not np.all(np.isfinite(m)):
        raise NumericalFailureError("non-finite resolvent")
    return m


def policy_values(mdp, policy):
    """State values ``V^pi`` from the exact linear system."""
    p_pi, r_pi = policy_kernel(mdp, policy)
    try:
        v = np.linalg.solve(np.eye(mdp.n_states) - mdp.gamma * p_pi, r_pi)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailureError(str(exc)) from exc
    if not np.all(np.isfinite(v)):
        raise NumericalFailureError("non-finite policy value")
    return v


def policy_value(mdp, policy, init):
    """Discounted value ``init . (I - gamma P^pi)^{-1} r^pi``."""
    init = _check_init(mdp, init)
    return float(init @ policy_values(mdp, policy))


def finite_horizon_value(mdp, policy, init, horizon, discount=1.0):
    """Expected sum of ``discount**t`` weighted rewards over ``horizon`` steps."""
    init = _check_init(mdp, init)
    if horizon < 0:
        raise InvalidParameterError("horizon must be nonnegative")
    p_pi, r_pi = policy_kernel(mdp, policy)
    mu, total, w = init.copy(), 0.0, 1.0
    for _ in range(int(horizon)):
        total += w * float(mu @ r_pi)
        mu = mu @ p_pi
        w *= discount
    return total


def visitation_distribution(mdp, policy, horizon, init):
    """Normalized truncated discounted state visitation.

    ``d = (1 - g) / (1 - g**(H+1)) * sum_{t=0..H} g**t mu_t`` with
    ``mu_0 = init`` and ``mu_{t+1} = mu_t P^pi``.
    """
    if horizon < 1:
        raise InvalidParameterError("horizon must be at least 1")
    init = _check_init(mdp, init)
    p_pi, _ = policy_kernel(mdp, policy)
    g = mdp.gamma
    mu, d, w = init.copy(), np.zeros(mdp.n_states), 1.0
    for _ in range(int(horizon) + 1):
        d += w * mu
        mu = mu @ p_pi
        w *= g
    if g == 0.0:
        return d
    return d * (1.0 - g) / (1.0 - g ** (int(horizon) + 1))


def uniform_init(n_states):
    return np.full(n_states, 1.0 / n_states)


def point_init(n_states, s):
    x = np.zeros(n_states)
    x[s] = 1.0
    return x
