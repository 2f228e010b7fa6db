"""Paired and marginal statistics for common-seed trials."""

import itertools
from dataclasses import dataclass

import numpy as np
from scipy import stats as sps

from .errors import InvalidParameterError

EXACT_MAX_N = 12


def _signed_rank_stat(d):
    ranks = sps.rankdata(np.abs(d))
    return float(ranks[d > 0].sum()), ranks


def wilcoxon_one_sided(diffs):
    """One-sided signed-rank p-value for ``mean(diffs) > 0``.

    Zeros are dropped; ties among ``|d|`` get midranks. Exact enumeration of
    all sign patterns for ``n <= 12``, normal approximation with continuity
    correction above. No nonzero difference gives ``p = 1``.
    """
    d = np.asarray(diffs, dtype=float)
    d = d[d != 0]
    n = d.size
    if n == 0:
        return 1.0
    w_plus, ranks = _signed_rank_stat(d)
    if n <= EXACT_MAX_N:
        signs = np.array(list(itertools.product((0.0, 1.0), repeat=n)))
        dist = signs @ ranks
        return float(np.mean(dist >= w_plus - 1e-9))
    res = sps.wilcoxon(d, alternative="greater", method="approx", correction=True, zero_method="wilcox")
    return float(res.pvalue)


def wilcoxon_normal_approx(diffs):
    """Normal-approximation path at any ``n`` (for cross-checking the exact path)."""
    d = np.asarray(diffs, dtype=float)
    d = d[d != 0]
    if d.size == 0:
        return 1.0
    return float(sps.wilcoxon(d, alternative="greater", method="approx", correction=True).pvalue)


def t_interval(x, level=0.95):
    """Mean and ordinary t half-width; half-width 0 for constant or single samples."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if n == 0:
        raise InvalidParameterError("empty sample")
    mean = float(x.mean())
    if n < 2:
        return mean, float("nan")
    se = float(x.std(ddof=1) / np.sqrt(n))
    return mean, float(sps.t.ppf(0.5 + level / 2.0, n - 1) * se)


def two_se(x):
    x = np.asarray(x, dtype=float)
    if x.size < 2:
        return float("nan")
    return float(2.0 * x.std(ddof=1) / np.sqrt(x.size))


@dataclass(frozen=True)
class PairedReport:
    label: str
    n_pairs: int
    mean_diff: float
    paired_t_ci: tuple
    two_se: float
    wilcoxon_p_one_sided: float

    def row(self):
        lo, hi = self.paired_t_ci
        return [self.label, self.n_pairs, f"{self.mean_diff:.6f}", f"{lo:.6f}", f"{hi:.6f}",
                f"{self.two_se:.6f}", f"{self.wilcoxon_p_one_sided:.6g}"]


PAIRED_HEADER = ("comparison", "n_pairs", "mean_diff_pp", "ci95_lo", "ci95_hi", "two_se", "wilcoxon_p_one_sided")


def paired_stats(a, b, label="a-b", min_pairs=5):
    """Paired comparison of per-trial values ``a - b`` (already in pp of oracle)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise InvalidParameterError("paired samples must be 1-d and of equal length")
    if a.size < min_pairs:
        raise InvalidParameterError(f"need at least {min_pairs} pairs")
    d = a - b
    mean, half = t_interval(d)
    if not np.isfinite(half):
        half = 0.0
    return PairedReport(label, int(d.size), mean, (mean - half, mean + half), two_se(d),
                        wilcoxon_one_sided(d))
