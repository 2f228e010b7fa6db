"""Simulation-lemma diagnostics.

Structural bounds on the value gap between a simulator and the world, their
post-pilot refinement, pilot residual estimates, the horizon at which
transition error overtakes reward error, and identification checks on a
latent-confounded bandit.
"""

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParameterError

C_P = 1.0
LOW_CONFIDENCE_N = 5
RESIDUAL_HEADER = ("pair", "n", "eps_r_hat", "eps_p_hat", "flags")


@dataclass
class ErrorProfile:
    """Per-pair simulator errors split into calibration shift (h) and misspecification (m)."""

    eps_r_h: np.ndarray
    eps_r_m: np.ndarray
    eps_p_h: np.ndarray
    eps_p_m: np.ndarray

    def __post_init__(self):
        for name in ("eps_r_h", "eps_r_m", "eps_p_h", "eps_p_m"):
            x = np.abs(np.asarray(getattr(self, name), dtype=float))
            setattr(self, name, x)
        if np.any(self.eps_p_h > 2 + 1e-12) or np.any(self.eps_p_m > 2 + 1e-12):
            raise InvalidParameterError("L1 transition errors cannot exceed 2")

    @staticmethod
    def _sup(x):
        return float(np.max(x)) if x.size else 0.0

    @property
    def sup_r_h(self):
        return self._sup(self.eps_r_h)

    @property
    def sup_r_m(self):
        return self._sup(self.eps_r_m)

    @property
    def sup_p_h(self):
        return self._sup(self.eps_p_h)

    @property
    def sup_p_m(self):
        return self._sup(self.eps_p_m)

    @classmethod
    def from_models(cls, true_mdp, sim_mdp, misspec_share=0.0):
        """Errors between two models; ``misspec_share`` of each error is booked as m."""
        er = np.abs(true_mdp.rewards - sim_mdp.rewards)
        ep = np.abs(true_mdp.transitions - sim_mdp.transitions).sum(axis=2)
        f = float(misspec_share)
        return cls((1 - f) * er, f * er, (1 - f) * ep, f * ep)


def sim_lemma_bound(profile, gamma, r_max):
    """``2/(1-g) (er_h + er_m) + 2 g R/(1-g)**2 (ep_h + ep_m)`` in sup norms."""
    if not 0 <= gamma < 1:
        raise InvalidParameterError("gamma must lie in [0, 1)")
    er = profile.sup_r_h + profile.sup_r_m
    ep = profile.sup_p_h + profile.sup_p_m
    return 2.0 / (1.0 - gamma) * er + 2.0 * gamma * r_max / (1.0 - gamma) ** 2 * ep


def reward_rate(n, delta, r_max):
    """Hoeffding-type rate ``R/sqrt(2) * sqrt(log(1/delta)/n)``."""
    return r_max / np.sqrt(2.0) * np.sqrt(np.log(1.0 / delta) / n)


def transition_rate(n, delta, n_states, c_p=C_P):
    """Weissman-shape rate ``c_p sqrt(|S| log(1/delta) / n)``."""
    return c_p * np.sqrt(n_states * np.log(1.0 / delta) / n)


def post_pilot_bound(covered, counts, profile, delta, gamma, r_max, n_states, c_p=C_P):
    """Simulation-lemma bound after a pilot.

    Covered pairs swap their calibration-shift error for concentration rates in
    their pilot counts; uncovered pairs keep ``eps_h``; ``eps_m`` stays
    everywhere. Each block enters through its worst pair.
    """
    if not 0 < delta < 1:
        raise InvalidParameterError("delta must lie in (0, 1)")
    counts = np.asarray(counts, dtype=float)
    mask = np.zeros(profile.eps_r_h.shape, dtype=bool)
    for s, a in covered:
        mask[s, a] = True
    if np.any(counts[mask] < 1):
        raise InvalidParameterError("covered pairs need at least one sample")
    r_block = np.where(mask, 0.0, profile.eps_r_h)
    p_block = np.where(mask, 0.0, profile.eps_p_h)
    if mask.any():
        n = np.where(mask, counts, 1.0)
        r_block = np.where(mask, reward_rate(n, delta, r_max), r_block)
        p_block = np.where(mask, transition_rate(n, delta, n_states, c_p), p_block)
    er = float(np.max(r_block)) + profile.sup_r_m
    ep = float(np.max(p_block)) + profile.sup_p_m
    return 2.0 / (1.0 - gamma) * er + 2.0 * gamma * r_max / (1.0 - gamma) ** 2 * ep


@dataclass
class PilotLog:
    """Per-pair reward lists and next-state counts gathered by a pilot."""

    n_states: int
    rewards: dict = field(default_factory=dict)
    next_counts: dict = field(default_factory=dict)
    randomized: bool = True

    def add(self, s, a, reward, next_state=None):
        key = (int(s), int(a))
        self.rewards.setdefault(key, []).append(float(reward))
        if next_state is not None:
            row = self.next_counts.setdefault(key, np.zeros(self.n_states))
            row[int(next_state)] += 1.0

    def pairs(self):
        return sorted(set(self.rewards) | set(self.next_counts))

    def count(self, key):
        if key in self.rewards:
            return len(self.rewards[key])
        return int(self.next_counts[key].sum())


@dataclass
class ResidualRow:
    pair: tuple
    n: int
    eps_r_hat: float
    eps_p_hat: float
    flags: str


@dataclass
class ResidualReport:
    rows: list
    pooled_eps_r: float
    pooled_eps_p: float
    randomized_pilot: bool

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(RESIDUAL_HEADER)
        for r in self.rows:
            w.writerow([f"{r.pair[0]}:{r.pair[1]}", r.n, f"{r.eps_r_hat:.10g}", f"{r.eps_p_hat:.10g}", r.flags])
        return buf.getvalue()


def post_pilot_residuals(sim, pilot_log):
    """Bundled residuals ``|r_sim - rbar|`` and ``||P_sim - P_hat||_1`` per covered pair."""
    rows = []
    for key in pilot_log.pairs():
        s, a = key
        n = pilot_log.count(key)
        rs = pilot_log.rewards.get(key)
        er = abs(float(sim.rewards[s, a]) - float(np.mean(rs))) if rs else float("nan")
        cnt = pilot_log.next_counts.get(key)
        if cnt is not None and cnt.sum() > 0:
            ep = float(np.abs(sim.transitions[s, a] - cnt / cnt.sum()).sum())
        else:
            ep = float("nan")
        flags = []
        if n < LOW_CONFIDENCE_N:
            flags.append("low_confidence")
        if not pilot_log.randomized:
            flags.append("non_randomized_pilot")
        rows.append(ResidualRow(key, n, er, ep, "|".join(flags)))
    er_all = [r.eps_r_hat for r in rows if np.isfinite(r.eps_r_hat)]
    ep_all = [r.eps_p_hat for r in rows if np.isfinite(r.eps_p_hat)]
    return ResidualReport(
        rows,
        max(er_all) if er_all else float("nan"),
        max(ep_all) if ep_all else float("nan"),
        pilot_log.randomized,
    )


def crossover_horizon(eps_r_hat, eps_p_hat, gamma, r_max):
    """``T_eff R_max eps_p / eps_r``; ``inf`` when ``eps_r`` is zero."""
    if eps_r_hat < 0 or eps_p_hat < 0:
        raise InvalidParameterError("residuals must be nonnegative")
    if eps_r_hat == 0:
        return float("inf")
    return r_max * eps_p_hat / (eps_r_hat * (1.0 - gamma))


@dataclass
class LatentBandit:
    """Two-action bandit confounded by a discrete latent ``h``.

    ``prior[h]`` is the latent law, ``means[h, a]`` and ``variances[h, a]`` the
    reward moments. The behavior policy's propensity odds for action 1 are
    ``odds[h]`` (clipped to ``[1/M, M]`` by the caller).
    """

    prior: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    odds: np.ndarray

    def do_moments(self, a):
        """Interventional mean and variance (law of total variance)."""
        m = self.means[:, a]
        mean = float(self.prior @ m)
        var = float(self.prior @ self.variances[:, a] + self.prior @ (m - mean) ** 2)
        return mean, var

    def behavior_weights(self, a):
        """Latent law among units that the behavior policy assigns to ``a``."""
        p1 = self.odds / (1.0 + self.odds)
        pa = p1 if a == 1 else 1.0 - p1
        w = self.prior * pa
        return w / w.sum()

    def behavior_moments(self, a):
        q = self.behavior_weights(a)
        m = self.means[:, a]
        mean = float(q @ m)
        var = float(q @ self.variances[:, a] + q @ (m - mean) ** 2)
        return mean, var

    def sample_pilot(self, n, rng, p_treat=0.5):
        """Randomized S-measurable pilot: action independent of h."""
        h = rng.choice(self.prior.size, size=n, p=self.prior)
        a = (rng.random(n) < p_treat).astype(int)
        r = self.means[h, a] + np.sqrt(self.variances[h, a]) * rng.standard_normal(n)
        return a, r


def random_latent_bandit(rng, m_bound, n_latent=2):
    prior = rng.dirichlet(np.ones(n_latent))
    means = rng.normal(0.0, 1.0, size=(n_latent, 2))
    variances = rng.uniform(0.2, 2.0, size=(n_latent, 2))
    odds = np.exp(rng.uniform(-np.log(m_bound), np.log(m_bound), size=n_latent)) if m_bound > 1 else np.ones(n_latent)
    return LatentBandit(prior, means, variances, odds)


@dataclass
class SensitivityReport:
    m_bound: float
    ratios: np.ndarray
    pilot_rel_errors: np.ndarray

    @property
    def within_bounds(self):
        lo, hi = 1.0 / self.m_bound**2, self.m_bound**2
        return bool(np.all((self.ratios >= lo - 1e-12) & (self.ratios <= hi + 1e-12)))

    @property
    def max_pilot_rel_error(self):
        return float(np.max(self.pilot_rel_errors)) if self.pilot_rel_errors.size else 0.0


def variance_sensitivity_check(m_bound, trials, rng, pilot_samples=100_000, spec=None, n_latent=2):
    """Behavior/interventional variance ratios and randomized-pilot identification.

    For each sampled latent bandit (or the fixed ``spec``), records the
    behavior-to-do variance ratio for both actions and the relative error of
    the randomized pilot's empirical variance against the do-variance.
    """
    if m_bound < 1:
        raise InvalidParameterError("m_bound must be at least 1")
    ratios, errs = [], []
    for _ in range(int(trials)):
        bandit = spec if spec is not None else random_latent_bandit(rng, m_bound, n_latent)
        # pilot_samples is the expected count per action under a 50/50 randomization
        a_pilot, r_pilot = bandit.sample_pilot(2 * int(pilot_samples), rng) if pilot_samples else (None, None)
        for a in (0, 1):
            _, v_do = bandit.do_moments(a)
            _, v_beh = bandit.behavior_moments(a)
            ratios.append(v_beh / v_do)
            if pilot_samples:
                emp = float(np.var(r_pilot[a_pilot == a], ddof=1))
                errs.append(abs(emp - v_do) / v_do)
    return SensitivityReport(float(m_bound), np.asarray(ratios), np.asarray(errs))
