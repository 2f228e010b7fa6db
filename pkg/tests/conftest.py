import numpy as np
import pytest

from artifact.mdp import StochasticPolicy, TabularMDP


def random_mdp(rng, n_states=5, n_actions=3, gamma=0.9, sparse=False):
    """Dirichlet transition rows and uniform rewards in [-1, 1]."""
    p = rng.dirichlet(np.ones(n_states), size=(n_states, n_actions))
    if sparse:
        p = np.where(p < 0.1, 0.0, p)
        p[..., 0] += 1e-3
        p /= p.sum(axis=2, keepdims=True)
    r = rng.uniform(-1.0, 1.0, size=(n_states, n_actions))
    return TabularMDP(r, p, gamma, r_max=1.0)


def random_policy(rng, n_states, n_actions):
    return StochasticPolicy(rng.dirichlet(np.ones(n_actions), size=n_states))


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip("abc:"))):
            terminalreporter.write_line(line)
