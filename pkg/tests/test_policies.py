import itertools

import numpy as np
import pytest
from scipy import stats

from artifact.belief import BeliefState
from artifact.envs.hiv import HivWorld
from artifact.envs.lock import build_stochastic_fork, lock_mdp
from artifact.envs.tabular import TabularWorld
from artifact.envs.vending import N_M, N_P
from artifact.errors import ConfigError
from artifact.experiments.fork import estimate_p_star, run_fork_trial, thompson_fork_reach
from artifact.experiments.lock import run_lock_trial
from artifact.mdp import TabularMDP, value_iteration
from artifact.policies.base import Phase, PhaseSchedule, break_detector
from artifact.policies.chain import EpsGreedy as ChainEps
from artifact.policies.chain import KgSep as ChainKg
from artifact.policies.chain import make_chain_controller, run_lock
from artifact.policies.hiv import assign_targets, make_hiv_controller, top_zones
from artifact.policies.optimism import OptimismAgent, optimistic_transitions
from artifact.policies.tabular import (
    ASop,
    EpsGreedy,
    FixedPolicy,
    Sep,
    Thompson,
    allocate_proportional,
    kg_augmented_q,
)
from artifact.policies.vending import GammaBelief, pilot_flags
from conftest import random_mdp


class TestBreakDetector:
    def test_flat(self):
        assert not break_detector([3.0] * 14)

    def test_jump(self):
        assert break_detector([2] * 7 + [5] * 7)

    def test_low_base_guard(self):
        assert not break_detector([1.0] * 7 + [9.0] * 7)

    def test_short_series(self):
        assert not break_detector([2] * 10)


class TestSchedule:
    def test_phases(self):
        s = PhaseSchedule(t_pilot=2, t_explore=3)
        assert [s.phase(t) for t in (0, 1, 2, 4, 5)] == [Phase.PILOT, Phase.PILOT, Phase.EXPLORE, Phase.EXPLORE, Phase.EXPLOIT]


class TestSop:
    def test_sim_equals_truth(self, rng):
        mdp = random_mdp(rng, 5, 3)
        assert np.array_equal(FixedPolicy(mdp).actions, FixedPolicy(mdp, "oracle").actions)

    def test_error_free_lock(self):
        ctrl = make_chain_controller("sop", 8)
        assert run_lock(np.zeros(8, dtype=bool), ctrl, 20, np.random.default_rng(0)) == 1.0

    def test_lock_table_entry(self):
        vals = [run_lock_trial(i, 42 + 100 * i, "sop", (5,), n_draws=300)[0][5] for i in range(300)]
        assert np.mean(vals) == pytest.approx(0.33, abs=0.06)

    def test_unknown_chain_policy(self):
        with pytest.raises(ConfigError):
            make_chain_controller("greedy", 5)


class TestEpsGreedy:
    def test_zero_eps_is_base(self, rng):
        sim = random_mdp(rng, 4, 3)
        ctrl = EpsGreedy(sim, 1.0, np.random.default_rng(0), eps=0.0)
        states = rng.integers(4, size=50)
        assert np.array_equal(ctrl.act(states, 0), FixedPolicy(sim).actions[states])

    def test_full_eps_is_uniform(self, rng):
        sim = random_mdp(rng, 2, 4)
        ctrl = EpsGreedy(sim, 1.0, np.random.default_rng(1), eps=1.0)
        acts = ctrl.act(np.zeros(10_000, dtype=int), 0)
        assert stats.chisquare(np.bincount(acts, minlength=4)).pvalue > 0.01

    def test_chain_reach(self):
        ctrl = ChainEps(eps=0.1)
        reach = run_lock(np.zeros(5, dtype=bool), ctrl, 20_000, np.random.default_rng(2))
        se = np.sqrt(0.774 * 0.226 / 20_000)
        assert abs(reach - 0.95**5) < 3 * se


class TestASop:
    def test_frozen_sim_world_tracks_sop(self):
        sim = lock_mdp(np.array([False, True, False, True]))
        ctrl = ASop(sim, 0.1, np.random.default_rng(0), replan_interval=1)
        world = TabularWorld(sim, 4, 0, np.random.default_rng(1))
        sop = FixedPolicy(sim).actions
        for t in range(12):
            s = world.states.copy()
            a = ctrl.act(s, t)
            assert np.array_equal(a, sop[s])
            r, s2 = world.step(a)
            ctrl.observe(s, a, r, s2, t)

    def test_posterior_crossing_time(self):
        sim = TabularMDP(np.array([[1.0, 0.5]]), np.ones((1, 2, 1)), 0.5)
        ctrl = ASop(sim, 3.0, np.random.default_rng(0), replan_interval=1)
        played = []
        for t in range(6):
            a = ctrl.act(np.array([0]), t)
            played.append(int(a[0]))
            ctrl.observe(np.array([0]), a, np.array([0.0 if a[0] == 0 else 0.5]), np.array([0]), t)
        # Mean of a_0 after n zero readouts is 1 / (1 + n / 3): it ties 0.5 at n = 3, drops below at n = 4.
        assert played == [0, 0, 0, 0, 1, 1]

    def test_chain_table_entry(self):
        vals = [run_lock_trial(i, 42 + 100 * i, "asop", (10,), n_draws=60)[0][10] for i in range(60)]
        assert np.mean(vals) >= 0.95


class TestKg:
    def test_certain_myopic(self):
        b = BeliefState(np.array([[0.3, 0.7]]), np.full((1, 2), 1e300), np.ones((1, 2, 1)))
        assert np.allclose(kg_augmented_q(b, 0, 1.0, 0.0, np.zeros(1)), [0.3, 0.7])

    def test_variance_monotone(self):
        b = BeliefState(np.zeros((1, 2)), np.array([[1.0, 4.0]]), np.ones((1, 2, 1)))
        q = kg_augmented_q(b, 0, 1.0, 0.9, np.zeros(1))
        assert q[0] > q[1]

    def test_reward_info_value(self):
        b = BeliefState(np.zeros((1, 1)), np.full((1, 1), 2.0), np.ones((1, 1, 1)))
        q = kg_augmented_q(b, 0, 0.5, 1.0, np.zeros(1))
        assert q[0] == pytest.approx(1 / 2 - 1 / 4)

    def test_chain_is_perfect(self):
        for i in range(30):
            assert run_lock_trial(i, 42 + 100 * i, "kg_sep", (15,), n_draws=30)[0][15] == 1.0

    def test_kg_tries_a0_at_unvisited(self):
        swapped = np.ones(6, dtype=bool)
        assert run_lock(swapped, ChainKg(), 10, np.random.default_rng(0)) == 1.0

    @pytest.mark.parametrize(
        "q,n,expected",
        [([1.0, 3.0], 4, [0, 1, 1, 1]), ([-1.0, -2.0], 3, [0, 0, 0]), ([1.0, 1.0], 1, [0]), ([1.0, 1.0, 1.0], 4, [0, 0, 1, 2])],
    )
    def test_allocation(self, q, n, expected):
        assert list(allocate_proportional(q, n)) == expected


class TestThompson:
    def test_degenerate_posterior_matches_asop(self, rng):
        sim = random_mdp(rng, 4, 2)
        th = Thompson(sim, 1.0, np.random.default_rng(0), replan_interval=1)
        th.belief = BeliefState(sim.rewards.copy(), np.full((4, 2), 1e20), sim.transitions * 1e12 + 1e-300)
        asop = ASop(sim, 1.0, np.random.default_rng(0), replan_interval=1)
        states = np.arange(4)
        assert np.array_equal(th.act(states, 0), asop.act(states, 0))

    def test_fork_prior_sampled_policy_varies(self):
        per_state, joint = estimate_p_star(8, 4000, np.random.default_rng(0))
        assert np.all((per_state > 0.3) & (per_state < 0.8))
        assert 0.0 < joint < per_state.min()

    def test_fork_reach_decays_with_length(self):
        reach = [thompson_fork_reach(k, 30, 60) for k in (6, 10)]
        assert reach[0] > reach[1]

    @pytest.mark.xfail(strict=True, reason="correlated prior draws and within-run learning lift reach above the product bound")
    def test_fork_reach_product_bound(self):
        per_state, _ = estimate_p_star(10, 4000, np.random.default_rng(0))
        p_star = float(np.mean(per_state[:9]))
        assert thompson_fork_reach(10, 30, 100) <= 30 * p_star**9

    def test_sop_halts_at_fork(self):
        values, extras, _ = run_fork_trial(42, "sop", (50,))
        assert values[50] < 5.0 and extras["first_fork"] >= 0

    def test_oracle_gets_through(self):
        values, _, _ = run_fork_trial(42, "oracle", (100,))
        assert values[100] > 50.0


class TestSep:
    def test_no_bursts_with_infinite_threshold(self, rng):
        true = random_mdp(rng, 4, 2, 0.8)
        sim = true.replace(rewards=true.rewards + 0.2)
        sched = PhaseSchedule(t_pilot=2, t_explore=3, replan_interval=2, reexplore_threshold=np.inf)
        ctrl = Sep(sim, 0.1, np.random.default_rng(0), schedule=sched)
        world = TabularWorld(true, 6, 0, np.random.default_rng(1), obs_sd=0.3)
        for t in range(40):
            s = world.states.copy()
            a = ctrl.act(s, t)
            r, s2 = world.step(a)
            ctrl.observe(s, a, r, s2, t)
        assert not any(tag == "reexplore" for _, tag, _ in ctrl.events)
        assert [tag for _, tag, _ in ctrl.events][:3] == ["phase:pilot", "phase:explore", "phase:exploit"]

    def test_epi_argmax_dispatch(self, rng):
        sim = random_mdp(rng, 3, 3)
        sched = PhaseSchedule(t_pilot=0, t_explore=10, eps_explore=1.0, replan_interval=100)
        ctrl = Sep(sim, 1.0, np.random.default_rng(0), schedule=sched)
        ctrl.epi = np.zeros((3, 3))
        ctrl.epi[1, 2] = 5.0
        acts = ctrl.act(np.array([1, 1, 1]), 1)
        assert np.all(acts == 2)


class TestOptimism:
    def test_converged_counts_are_greedy(self, rng):
        mdp = random_mdp(rng, 3, 2, 0.8)
        agent = OptimismAgent(3, 2, 0.8, mdp.r_max, variant="ucbvi")
        big = 1e15
        agent.n[:] = big
        agent.r_sum = np.clip(mdp.rewards, 0, None) * big
        agent.p_cnt = mdp.transitions * big
        agent.t = 10
        clipped = mdp.replace(rewards=np.clip(mdp.rewards, 0, None))
        assert np.array_equal(np.argmax(agent.plan(), axis=1), value_iteration(clipped).greedy)

    def test_forces_unvisited(self):
        agent = OptimismAgent(2, 3, 0.9, 1.0, variant="ucrl2")
        agent.observe(0, 0, 1.0, 1)
        assert agent.act(0, 1) == 1

    def test_optimistic_rows(self, rng):
        p_hat = rng.dirichlet(np.ones(5), size=(3, 2))
        v = rng.normal(size=5)
        radius = np.full((3, 2), 0.3)
        p = optimistic_transitions(p_hat, radius, v)
        assert np.allclose(p.sum(axis=-1), 1.0) and np.all(p >= -1e-12)
        assert np.all(np.abs(p - p_hat).sum(axis=-1) <= 0.3 + 1e-12)
        assert np.all(p @ v >= p_hat @ v - 1e-12)

    def test_bad_variant(self):
        with pytest.raises(ConfigError):
            OptimismAgent(2, 2, 0.9, 1.0, variant="psrl")


class TestHivHelpers:
    def test_top_zones_ties(self):
        assert top_zones([1.0, 3.0, 3.0, 2.0], 2) == [1, 2]
        assert top_zones([1.0, 3.0, 3.0, 2.0], 2, exclude=[1]) == [2, 3]

    def test_assignment_is_optimal(self):
        world = HivWorld(0)
        g = np.random.default_rng(0)
        for _ in range(5):
            pos = g.choice(40, size=4, replace=False)
            tgt = g.choice(40, size=4, replace=False)
            out = assign_targets(world.geo, pos, tgt)
            cost = sum(world.geo.distance(p, z) for p, z in zip(pos, out))
            brute = min(sum(world.geo.distance(p, z) for p, z in zip(pos, perm)) for perm in itertools.permutations(tgt))
            assert cost == brute and sorted(out) == sorted(tgt)

    def test_unknown_controller(self):
        with pytest.raises(ConfigError):
            make_hiv_controller("nope", HivWorld(0), np.random.default_rng(0))

    def test_moves_are_admissible(self):
        world = HivWorld(3)
        ctrl = make_hiv_controller("fisher_sep_t_nav", world, np.random.default_rng(0))
        for t in range(10):
            moves = ctrl.act(world, t)
            assert all(world.geo.admissible(p, k) for p, k in zip(world.positions, moves))
            ctrl.observe(world.step(moves))


class TestVendingHelpers:
    def test_gamma_belief(self):
        b = GammaBelief(np.array([2.0, 4.0]), 10.0)
        b.update(np.array([5.0, 1.0]), np.array([True, False]))
        assert np.allclose(b.mean, [25.0 / 11.0, 4.0])
        assert b.variance[0] == pytest.approx(25.0 / 121.0)

    def test_pilot_flags(self):
        sim = np.full((N_M, N_P), 4.0)
        sums = sim * 5
        sums[3, 2] = 5 * 12.0
        flags = pilot_flags(sums, np.full((N_M, N_P), 5), sim)
        assert flags[3, 2] and flags.sum() == 1
