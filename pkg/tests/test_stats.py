import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from artifact.errors import InvalidParameterError
from artifact.stats import paired_stats, t_interval, wilcoxon_normal_approx, wilcoxon_one_sided


def test_all_positive_five():
    assert wilcoxon_one_sided([1, 2, 3, 4, 5]) == pytest.approx(1 / 32)


def test_identical_samples():
    x = np.arange(10.0)
    assert wilcoxon_one_sided(x - x) == 1.0
    assert paired_stats(x, x).wilcoxon_p_one_sided == 1.0


def test_exact_against_scipy():
    from scipy.stats import wilcoxon

    d = np.array([0.5, -1.2, 2.0, 3.1, -0.4, 1.7, 2.2, 0.9])
    assert wilcoxon_one_sided(d) == pytest.approx(wilcoxon(d, alternative="greater", method="exact").pvalue)


def test_exact_vs_normal_at_twelve():
    d = np.array([1.1, -0.3, 2.4, 0.8, -1.9, 3.3, 0.2, 1.4, -0.6, 2.7, 1.8, 0.5])
    assert abs(wilcoxon_one_sided(d) - wilcoxon_normal_approx(d)) < 0.01


def test_power():
    g = np.random.default_rng(0)
    hits = sum(wilcoxon_one_sided(g.normal(1.0, 1.0, 30)) < 0.05 for _ in range(100))
    assert hits >= 99


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-10, 10, allow_nan=False), min_size=1, max_size=10))
def test_p_in_unit_interval_and_sign_flip(d):
    p = wilcoxon_one_sided(d)
    q = wilcoxon_one_sided([-x for x in d])
    assert 0.0 <= p <= 1.0
    if any(x != 0 for x in d):
        assert p + q >= 1.0 - 1e-12


def test_pairing_integrity():
    a = np.array([5.0, 1.0, 7.0, 3.0, 8.0])
    b = a - np.array([1.0, 2.0, 3.0, 4.0, 5.0])
    rep = paired_stats(a, b)
    assert rep.mean_diff == pytest.approx(3.0)
    assert rep.paired_t_ci[0] < 3.0 < rep.paired_t_ci[1]
    shuffled = paired_stats(a, np.roll(b, 1))
    assert shuffled.mean_diff == pytest.approx(3.0)
    assert shuffled.two_se > rep.two_se


def test_constant_difference_zero_width():
    rep = paired_stats(np.full(6, 2.0), np.zeros(6))
    assert rep.paired_t_ci == (2.0, 2.0) and rep.two_se == 0.0


def test_errors():
    with pytest.raises(InvalidParameterError):
        paired_stats([1, 2], [1, 2, 3])
    with pytest.raises(InvalidParameterError):
        paired_stats([1, 2], [1, 2])
    with pytest.raises(InvalidParameterError):
        t_interval([])
