"""Two-period stateless experiment: closed forms and Monte Carlo checks.

A population of ``n`` units chooses between a status-quo action and an
alternative whose effect ``Delta ~ N(delta0, sigma0**2)``. Period 1 optionally
splits ``n_e`` units 50/50 between the arms; period 2 deploys the
posterior-preferred arm to everyone, weighted by ``gamma``.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

from .errors import InvalidParameterError

SQRT_2PI = np.sqrt(2.0 * np.pi)


def _phi(r):
    return np.exp(-0.5 * np.square(r)) / SQRT_2PI


def psi(r):
    """Standard-normal loss ``phi(r) - r * Phi(-r)``."""
    r = np.asarray(r, dtype=float)
    out = _phi(r) - r * ndtr(-r)
    out = np.maximum(out, np.maximum(0.0, -r))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class StatelessSpec:
    delta0: float
    sigma0: float
    sigma: float
    n: int
    gamma: float = 1.0

    def __post_init__(self):
        if not (self.sigma0 > 0 and self.sigma > 0):
            raise InvalidParameterError("sigma0 and sigma must be positive")
        if self.n < 1:
            raise InvalidParameterError("n must be at least 1")
        if not 0.0 <= self.gamma <= 1.0:
            raise InvalidParameterError("gamma must lie in [0, 1]")

    @property
    def kappa(self):
        return self.delta0 / self.sigma0

    @classmethod
    def from_kappa(cls, kappa, n, gamma=1.0, sigma0=1.0, sigma=1.0):
        return cls(kappa * sigma0, sigma0, sigma, int(n), gamma)


def preposterior_std(spec, n_e):
    """``nu(n_e) = sqrt(sigma0**4 n_e / (4 sigma**2 + sigma0**2 n_e))``."""
    n_e = np.asarray(n_e, dtype=float)
    s0sq = spec.sigma0**2
    return np.sqrt(s0sq * s0sq * n_e / (4.0 * spec.sigma**2 + s0sq * n_e))


def delta_v(spec, n_e):
    """Net value of an ``n_e``-unit pilot over deploying the prior choice.

    Symmetric in the sign of ``delta0``: the pilot's half on the non-prior arm
    costs ``|delta0|`` per unit.
    """
    n_e_arr = np.asarray(n_e, dtype=float)
    if np.any(n_e_arr < 0):
        raise InvalidParameterError("n_e must be nonnegative")
    nu = preposterior_std(spec, n_e_arr)
    safe = np.where(nu > 0, nu, 1.0)
    d0 = abs(spec.delta0)
    gain = np.where(nu > 0, spec.gamma * spec.n * nu * psi(d0 / safe), 0.0)
    out = -n_e_arr * d0 / 2.0 + gain
    return float(out) if out.ndim == 0 else out


def bayes_regret_no_experiment(spec):
    """``gamma * n * sigma0 * psi(|kappa|)``: expected loss of never experimenting."""
    return spec.gamma * spec.n * spec.sigma0 * psi(abs(spec.kappa))


def kappa_star(gamma, tol=1e-8, hi=3.0):
    """Root of ``2 gamma psi(kappa) = kappa`` on ``(0, hi]``; NaN if no sign change."""
    f = lambda k: 2.0 * gamma * psi(k) - k  # noqa: E731
    lo = 0.0
    if not (f(lo) > 0 > f(hi)):
        return float("nan")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if f(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def optimal_pilot(spec):
    """Integer scan of ``delta_v`` over ``0..n``; lowest index on ties."""
    grid = np.arange(spec.n + 1)
    values = delta_v(spec, grid)
    i = int(np.argmax(values))
    return i, float(values[i])


def threshold_and_optimum(spec):
    """``(kappa_star(gamma), n_e_star, delta_v(n_e_star))``."""
    if spec.gamma <= 0:
        return float("nan"), 0, 0.0
    n_e, value = optimal_pilot(spec)
    return kappa_star(spec.gamma), n_e, value


def full_information_breakeven(spec):
    """``-n delta0 / 2 + gamma n sigma0 psi(kappa)``: the limit value of a pilot on
    all units with perfect information, whose zero is exactly ``kappa_star``."""
    return -spec.n * spec.delta0 / 2.0 + spec.gamma * spec.n * spec.sigma0 * psi(spec.kappa)


def net_value_zero_crossing(gamma, n, sigma0=1.0, sigma=1.0, hi=3.0, tol=1e-6):
    """Smallest kappa > 0 at which the optimized pilot stops paying (``delta_v(n_e*) <= 0``)."""

    def best(k):
        return optimal_pilot(StatelessSpec.from_kappa(k, n, gamma, sigma0, sigma))[1]

    lo = 1e-9
    if best(hi) > 0:
        return float("nan")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if best(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _decide_and_score(spec, n_e, deltas, z):
    """Realized net value against the no-pilot protocol on the same draw.

    Period-1 unit noise cancels between the two protocols; the pilot's
    arm-mean contrast carries noise of variance ``4 sigma**2 / n_e``.
    """
    s0sq = spec.sigma0**2
    noise_var = 4.0 * spec.sigma**2 / n_e
    contrast = deltas + np.sqrt(noise_var) * z
    post_mean = spec.delta0 + s0sq / (s0sq + noise_var) * (contrast - spec.delta0)
    prior_arm = spec.delta0 >= 0
    chosen = post_mean > 0
    period2 = spec.gamma * spec.n * deltas * (chosen.astype(float) - float(prior_arm))
    period1 = -n_e / 2.0 * (deltas if prior_arm else -deltas)
    return period1 + period2


def _conditional_score(spec, n_e, deltas):
    """Expectation of :func:`_decide_and_score` over the pilot noise given Delta."""
    s0sq = spec.sigma0**2
    noise_var = 4.0 * spec.sigma**2 / n_e
    shrink = s0sq / (s0sq + noise_var)
    # post_mean > 0  <=>  z > -(delta0 + shrink (Delta - delta0)) / (shrink sqrt(noise_var))
    thresh = -(spec.delta0 + shrink * (deltas - spec.delta0)) / (shrink * np.sqrt(noise_var))
    p_choose = ndtr(-thresh)
    prior_arm = spec.delta0 >= 0
    period2 = spec.gamma * spec.n * deltas * (p_choose - float(prior_arm))
    period1 = -n_e / 2.0 * (deltas if prior_arm else -deltas)
    return period1 + period2


def mc_validate(spec, n_e, replications, rng, method="plain", batches=10):
    """Monte Carlo estimate of ``delta_v(n_e)`` as ``(mean, standard error)``.

    ``plain`` simulates the protocol draw by draw. ``conditional`` integrates
    the pilot noise analytically and stratifies the prior draws of Delta over
    ``batches`` independent stratified batches; its SE is the spread of batch
    means.
    """
    if replications < 1:
        raise InvalidParameterError("replications must be at least 1")
    if n_e <= 0:
        return 0.0, 0.0
    replications = int(replications)
    if method == "plain":
        deltas = spec.delta0 + spec.sigma0 * rng.standard_normal(replications)
        z = rng.standard_normal(replications)
        x = _decide_and_score(spec, float(n_e), deltas, z)
        se = float(x.std(ddof=1) / np.sqrt(replications)) if replications > 1 else float("nan")
        return float(x.mean()), se
    if method == "conditional":
        batches = max(2, min(int(batches), replications))
        per = replications // batches
        means = []
        for _ in range(batches):
            u = (np.arange(per) + rng.random(per)) / per
            deltas = spec.delta0 + spec.sigma0 * ndtri(u)
            means.append(_conditional_score(spec, float(n_e), deltas).mean())
        means = np.asarray(means)
        return float(means.mean()), float(means.std(ddof=1) / np.sqrt(batches))
    raise InvalidParameterError("method must be 'plain' or 'conditional'")


def mc_regret_no_experiment(spec, replications, rng):
    """Monte Carlo oracle-minus-prior-choice gap in period 2."""
    deltas = spec.delta0 + spec.sigma0 * rng.standard_normal(int(replications))
    prior_arm = spec.delta0 >= 0
    gap = spec.gamma * spec.n * (np.maximum(deltas, 0.0) - (deltas if prior_arm else 0.0))
    return float(gap.mean()), float(gap.std(ddof=1) / np.sqrt(gap.size))


def sweep(gammas, kappas, n=100, sigma0=1.0, sigma=1.0, replications=0, rng=None, method="conditional"):
    """Rows ``(kappa, gamma, delta_v_star, n_e_star, mc_mean, mc_se)``."""
    rows = []
    for g in gammas:
        for k in kappas:
            spec = StatelessSpec.from_kappa(float(k), n, float(g), sigma0, sigma)
            n_e, value = optimal_pilot(spec)
            if replications and n_e > 0:
                m, se = mc_validate(spec, n_e, replications, rng, method=method)
            else:
                m, se = (0.0, 0.0) if replications else (float("nan"), float("nan"))
            rows.append((float(k), float(g), value, n_e, m, se))
    return rows


def stateless_bandit_episode(spec, n_e, rng):
    """One realized episode at unit level: ``(delta, chosen_arm, total_reward, sop_reward)``.

    Pilot units alternate arms (the extra unit of an odd pilot goes to the
    alternative arm); unit noise is shared with the no-pilot counterfactual.
    """
    delta = spec.delta0 + spec.sigma0 * rng.standard_normal()
    noise1 = spec.sigma * rng.standard_normal(spec.n)
    arms = np.ones(spec.n, dtype=int)
    n_ctrl = int(n_e) // 2
    arms[:n_ctrl] = 0
    rewards = np.where(arms == 1, delta, 0.0) + noise1
    sop_rewards = delta + noise1
    if n_e > 0:
        m1 = rewards[n_ctrl:int(n_e)].mean() if int(n_e) - n_ctrl > 0 else spec.delta0
        m0 = rewards[:n_ctrl].mean() if n_ctrl > 0 else 0.0
        nv = spec.sigma**2 * (1.0 / max(int(n_e) - n_ctrl, 1) + 1.0 / max(n_ctrl, 1))
        s0sq = spec.sigma0**2
        post = spec.delta0 + s0sq / (s0sq + nv) * ((m1 - m0) - spec.delta0)
    else:
        post = spec.delta0
    chosen = int(post > 0)
    total = rewards.sum() + spec.gamma * spec.n * delta * chosen
    sop_total = sop_rewards.sum() + spec.gamma * spec.n * delta * int(spec.delta0 > 0)
    return delta, chosen, float(total), float(sop_total)
