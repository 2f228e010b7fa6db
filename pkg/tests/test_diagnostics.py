import numpy as np
import pytest

from artifact.diagnostics import (
    ErrorProfile,
    LatentBandit,
    PilotLog,
    crossover_horizon,
    post_pilot_bound,
    post_pilot_residuals,
    reward_rate,
    sim_lemma_bound,
    transition_rate,
    variance_sensitivity_check,
)
from artifact.errors import InvalidParameterError
from artifact.experiments.diag import run_diag
from artifact.mdp import TabularMDP, policy_values
from conftest import random_mdp, random_policy


def perturbed_pair(seed):
    """A random true MDP and a simulator with injected reward and transition errors."""
    g = np.random.default_rng(seed)
    n, k = int(g.integers(2, 6)), int(g.integers(1, 4))
    true = random_mdp(g, n, k, float(g.uniform(0.3, 0.95)))
    r_sim = true.rewards + g.normal(0, 0.2, size=true.rewards.shape)
    mix = float(g.uniform(0, 0.5))
    p_sim = (1 - mix) * true.transitions + mix * g.dirichlet(np.ones(n), size=(n, k))
    r_max = max(true.r_max, float(np.max(np.abs(r_sim))))
    return TabularMDP(true.rewards, true.transitions, true.gamma, r_max), TabularMDP(r_sim, p_sim, true.gamma, r_max), g


class TestSimLemma:
    def test_zero_errors(self):
        z = np.zeros((2, 2))
        assert sim_lemma_bound(ErrorProfile(z, z, z, z), 0.9, 1.0) == 0.0

    def test_myopic(self):
        prof = ErrorProfile(np.full((1, 1), 0.1), np.full((1, 1), 0.05), np.full((1, 1), 1.0), np.zeros((1, 1)))
        assert sim_lemma_bound(prof, 0.0, 1.0) == pytest.approx(2 * 0.15)

    @pytest.mark.parametrize("seed", range(100))
    def test_dominates_realized_gap(self, seed):
        true, sim, g = perturbed_pair(seed)
        pi = random_policy(g, true.n_states, true.n_actions)
        gap = np.max(np.abs(policy_values(true, pi) - policy_values(sim, pi)))
        prof = ErrorProfile.from_models(true, sim, misspec_share=float(g.uniform()))
        assert gap <= sim_lemma_bound(prof, true.gamma, true.r_max) + 1e-12

    def test_transition_error_cap(self):
        z = np.zeros((1, 1))
        with pytest.raises(InvalidParameterError):
            ErrorProfile(z, z, np.full((1, 1), 2.5), z)

    def test_bad_gamma(self):
        z = np.zeros((1, 1))
        with pytest.raises(InvalidParameterError):
            sim_lemma_bound(ErrorProfile(z, z, z, z), 1.0, 1.0)


class TestPostPilot:
    prof = ErrorProfile(np.full((2, 2), 0.3), np.full((2, 2), 0.02), np.full((2, 2), 0.4), np.full((2, 2), 0.01))

    def test_no_coverage_is_prior_bound(self):
        b = post_pilot_bound([], np.zeros((2, 2)), self.prof, 0.05, 0.9, 1.0, 2)
        assert b == pytest.approx(sim_lemma_bound(self.prof, 0.9, 1.0))

    def test_full_coverage_limit(self):
        covered = [(s, a) for s in range(2) for a in range(2)]
        b = post_pilot_bound(covered, np.full((2, 2), 1e14), self.prof, 0.05, 0.9, 1.0, 2)
        floor = 2 / 0.1 * 0.02 + 2 * 0.9 / 0.01 * 0.01
        assert b == pytest.approx(floor, rel=1e-4)

    def test_reward_rate_value(self):
        assert reward_rate(100, 0.05, 1.0) == pytest.approx(np.sqrt(np.log(20) / 100) / np.sqrt(2))
        assert reward_rate(100, 0.05, 1.0) == pytest.approx(0.122, abs=5e-4)

    def test_monotone_improvement(self):
        covered = [(s, a) for s in range(2) for a in range(2)]
        n = 1e4
        assert reward_rate(n, 0.05, 1.0) < 0.3 and transition_rate(n, 0.05, 2) < 0.4
        b = post_pilot_bound(covered, np.full((2, 2), n), self.prof, 0.05, 0.9, 1.0, 2)
        assert b <= sim_lemma_bound(self.prof, 0.9, 1.0)

    def test_uncovered_pair_keeps_error(self):
        b = post_pilot_bound([(0, 0)], np.full((2, 2), 1e14), self.prof, 0.05, 0.9, 1.0, 2)
        assert b == pytest.approx(sim_lemma_bound(self.prof, 0.9, 1.0))

    def test_errors(self):
        with pytest.raises(InvalidParameterError):
            post_pilot_bound([(0, 0)], np.zeros((2, 2)), self.prof, 0.05, 0.9, 1.0, 2)
        with pytest.raises(InvalidParameterError):
            post_pilot_bound([], np.zeros((2, 2)), self.prof, 1.5, 0.9, 1.0, 2)


class TestResiduals:
    def test_bias_recovery(self):
        sim = TabularMDP(np.array([[0.0, 1.0]]), np.ones((1, 2, 1)), 0.5)
        g = np.random.default_rng(0)
        log = PilotLog(1)
        for r in 0.5 + g.normal(size=10_000):
            log.add(0, 0, r, 0)
        rep = post_pilot_residuals(sim, log)
        assert rep.rows[0].eps_r_hat == pytest.approx(0.5, abs=0.02)
        assert rep.rows[0].eps_p_hat == 0.0 and rep.rows[0].flags == ""

    def test_consistency_rate(self, rng):
        sim = random_mdp(rng, 3, 1)
        errs = {}
        for n in (100, 10_000):
            g = np.random.default_rng(n)
            log = PilotLog(3)
            nxt = g.choice(3, size=n, p=sim.transitions[0, 0])
            for r, s2 in zip(sim.rewards[0, 0] + g.normal(size=n), nxt):
                log.add(0, 0, r, s2)
            rep = post_pilot_residuals(sim, log)
            errs[n] = (rep.pooled_eps_r, rep.pooled_eps_p)
        assert errs[10_000][0] < errs[100][0] and errs[10_000][1] < errs[100][1]
        assert errs[10_000][0] < 0.05 and errs[10_000][1] < 0.05

    def test_flags(self, rng):
        sim = random_mdp(rng, 2, 2)
        log = PilotLog(2, randomized=False)
        log.add(1, 0, 0.3, 1)
        rep = post_pilot_residuals(sim, log)
        assert rep.rows[0].flags == "low_confidence|non_randomized_pilot"
        assert rep.to_csv().splitlines()[0] == "pair,n,eps_r_hat,eps_p_hat,flags"

    def test_permutation_equivariance(self, rng):
        sim = random_mdp(rng, 3, 2)
        perm = np.array([2, 0, 1])  # old state i becomes perm[i]
        inv = np.argsort(perm)
        sim2 = TabularMDP(sim.rewards[inv], sim.transitions[inv][:, :, inv], sim.gamma, sim.r_max)
        log, log2 = PilotLog(3), PilotLog(3)
        for _ in range(40):
            s, a, s2, r = rng.integers(3), rng.integers(2), rng.integers(3), rng.normal()
            log.add(s, a, r, s2)
            log2.add(perm[s], a, r, perm[s2])
        r1 = {row.pair: row for row in post_pilot_residuals(sim, log).rows}
        r2 = {row.pair: row for row in post_pilot_residuals(sim2, log2).rows}
        for (s, a), row in r1.items():
            other = r2[(int(perm[s]), a)]
            assert other.eps_r_hat == pytest.approx(row.eps_r_hat) and other.eps_p_hat == pytest.approx(row.eps_p_hat)


class TestCrossover:
    def test_values(self):
        assert crossover_horizon(0.1, 0.0, 0.9, 1.0) == 0.0
        assert crossover_horizon(0.1, 0.2, 0.9, 1.0) == pytest.approx(20.0)
        assert crossover_horizon(0.0, 0.2, 0.9, 1.0) == np.inf
        with pytest.raises(InvalidParameterError):
            crossover_horizon(-0.1, 0.2, 0.9, 1.0)


class TestIdentification:
    def test_no_confounding(self):
        rep = variance_sensitivity_check(1.0, 5, np.random.default_rng(0), pilot_samples=0)
        assert np.allclose(rep.ratios, 1.0)

    def test_ratio_bounds(self):
        rep = variance_sensitivity_check(2.0, 200, np.random.default_rng(1), pilot_samples=0)
        assert rep.within_bounds and np.all((rep.ratios >= 0.25) & (rep.ratios <= 4.0))

    def test_law_of_total_variance(self):
        b = LatentBandit(np.array([0.3, 0.7]), np.array([[0.0, 1.0], [2.0, -1.0]]), np.array([[1.0, 0.5], [0.5, 2.0]]), np.array([2.0, 0.5]))
        mean, var = b.do_moments(0)
        assert mean == pytest.approx(1.4)
        assert var == pytest.approx(0.3 * 1.0 + 0.7 * 0.5 + 0.3 * 1.96 + 0.7 * 0.36)

    def test_pilot_identifies_do_variance(self):
        rep = variance_sensitivity_check(2.0, 3, np.random.default_rng(2), pilot_samples=100_000)
        assert rep.max_pilot_rel_error < 0.01

    def test_bad_bound(self):
        with pytest.raises(InvalidParameterError):
            variance_sensitivity_check(0.5, 1, np.random.default_rng(0))


class TestDiagRun:
    def test_rows(self):
        report, rows = run_diag(42, pilot_steps=5, n_units=50)
        vals = dict(rows)
        assert vals["sop_value_gap_sup"] <= vals["sim_lemma_bound"]
        assert vals["covered_pairs"] == len(report.rows) > 0
        assert vals["t_eff"] == pytest.approx(20.0)

    def test_deterministic(self):
        assert run_diag(7, pilot_steps=3, n_units=20)[1] == run_diag(7, pilot_steps=3, n_units=20)[1]
