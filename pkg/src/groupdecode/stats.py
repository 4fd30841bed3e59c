"""Accuracy metrics, exact Wilcoxon signed-rank tests, confidence intervals
and correlations used by the experiment reports.

The Wilcoxon test is exact (full sign-assignment distribution, midranks for
ties, zero differences dropped) up to ``EXACT_LIMIT`` pairs and switches to a
tie-corrected normal approximation beyond that.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats as _sps

EXACT_LIMIT = 20

SIDES = ("two", "greater", "less")


class UndefinedTestError(ValueError):
    """Raised when a test statistic is undefined for the given input."""


def accuracy(predictions, labels) -> float:
    """Fraction of predictions equal to labels."""
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if predictions.shape != labels.shape:
        raise ValueError(
            f"length mismatch: {predictions.shape} vs {labels.shape}"
        )
    if predictions.size == 0:
        raise ValueError("accuracy of empty input is undefined")
    return float(np.mean(predictions == labels))


def _midranks(values: np.ndarray) -> np.ndarray:
    """Ranks 1..n with ties sharing the mean rank of their block."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values), dtype=float)
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def _exact_wplus_counts(ranks2: np.ndarray) -> np.ndarray:
    """Distribution of W+ over all sign assignments.

    ``ranks2`` are the doubled midranks (integers even with ties).
    Returns counts[s] = number of sign vectors with doubled W+ == s.
    """
    total = int(ranks2.sum())
    counts = np.zeros(total + 1, dtype=np.float64)
    counts[0] = 1.0
    for r in ranks2:
        r = int(r)
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[: total + 1 - r]
        counts += shifted
    return counts


@dataclass(frozen=True)
class WilcoxonResult:
    statistic: float  # W+ = sum of ranks of positive differences
    p_value: float
    n_used: int  # pairs remaining after dropping zero differences
    method: str  # "exact" or "normal"
    sided: str

    def as_block(self, correction: str = "none") -> dict:
        """Stats block for embedding in JSON reports."""
        return {
            "test": "wilcoxon_signed_rank",
            "statistic": self.statistic,
            "p": self.p_value,
            "n": self.n_used,
            "sided": self.sided,
            "correction": correction,
        }


def wilcoxon_signed_rank(a, b=None, sided: str = "two") -> WilcoxonResult:
    """Wilcoxon signed-rank test on paired samples.

    ``a`` and ``b`` are the paired condition values; with ``b=None`` the
    entries of ``a`` are taken as the differences directly. ``sided`` is
    "two", "greater" (median difference > 0) or "less".
    """
    if sided not in SIDES:
        raise ValueError(f"sided must be one of {SIDES}")
    diffs = np.asarray(a, dtype=float)
    if b is not None:
        diffs = diffs - np.asarray(b, dtype=float)
    if not np.all(np.isfinite(diffs)):
        raise ValueError("differences must be finite")
    diffs = diffs[diffs != 0.0]
    n = len(diffs)
    if n == 0:
        raise UndefinedTestError("all differences are zero")

    absd = np.abs(diffs)
    ranks = _midranks(absd)
    w_plus = float(ranks[diffs > 0].sum())

    if n <= EXACT_LIMIT:
        ranks2 = np.rint(2.0 * ranks).astype(np.int64)
        counts = _exact_wplus_counts(ranks2)
        total = float(2.0**n)
        w2 = int(round(2.0 * w_plus))
        p_ge = counts[w2:].sum() / total
        p_le = counts[: w2 + 1].sum() / total
        method = "exact"
    else:
        mean = n * (n + 1) / 4.0
        _, tie_counts = np.unique(ranks, return_counts=True)
        tie_corr = float(((tie_counts**3 - tie_counts) / 48.0).sum())
        var = n * (n + 1) * (2 * n + 1) / 24.0 - tie_corr
        if var <= 0:
            raise UndefinedTestError("zero variance rank distribution")
        z = (w_plus - mean) / math.sqrt(var)
        p_ge = float(_sps.norm.sf(z))
        p_le = float(_sps.norm.cdf(z))
        method = "normal"

    if sided == "greater":
        p = p_ge
    elif sided == "less":
        p = p_le
    else:
        p = min(1.0, 2.0 * min(p_ge, p_le))
    return WilcoxonResult(w_plus, float(p), n, method, sided)


def sign_test(a, b=None, sided: str = "two") -> dict:
    """Exact sign test (binomial, p0=0.5) on paired differences."""
    if sided not in SIDES:
        raise ValueError(f"sided must be one of {SIDES}")
    diffs = np.asarray(a, dtype=float)
    if b is not None:
        diffs = diffs - np.asarray(b, dtype=float)
    diffs = diffs[diffs != 0.0]
    n = len(diffs)
    if n == 0:
        raise UndefinedTestError("all differences are zero")
    k = int(np.sum(diffs > 0))
    p_ge = sum(math.comb(n, i) for i in range(k, n + 1)) / 2.0**n
    p_le = sum(math.comb(n, i) for i in range(0, k + 1)) / 2.0**n
    if sided == "greater":
        p = p_ge
    elif sided == "less":
        p = p_le
    else:
        p = min(1.0, 2.0 * min(p_ge, p_le))
    return {"test": "sign", "statistic": k, "p": float(p), "n": n, "sided": sided, "correction": "none"}


def confidence_interval(values, level: float = 0.95) -> tuple[float, float]:
    """Student-t confidence interval for the mean: mean ± t · s/sqrt(n)."""
    values = np.asarray(values, dtype=float)
    n = len(values)
    if n < 2:
        raise ValueError("confidence interval needs at least 2 values")
    if not 0 < level < 1:
        raise ValueError("level must be in (0, 1)")
    mean = float(values.mean())
    s = float(values.std(ddof=1))
    half = float(_sps.t.ppf(0.5 + level / 2.0, n - 1)) * s / math.sqrt(n)
    return (mean - half, mean + half)


def bootstrap_interval(values, level: float = 0.95, n_boot: int = 2000, seed: int = 0) -> tuple[float, float]:
    """Percentile-bootstrap interval for the mean (alternative for PFI repeats)."""
    values = np.asarray(values, dtype=float)
    if len(values) < 2:
        raise ValueError("bootstrap interval needs at least 2 values")
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, len(values), size=(n_boot, len(values)))
    means = values[idx].mean(axis=1)
    lo, hi = np.quantile(means, [0.5 - level / 2.0, 0.5 + level / 2.0])
    return (float(lo), float(hi))


def pearson_r(x, y) -> tuple[float, float]:
    """Pearson product-moment correlation with p-value via the t transform."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError("x and y must have the same length")
    n = len(x)
    if n < 3:
        raise ValueError("pearson_r needs at least 3 points")
    xc = x - x.mean()
    yc = y - y.mean()
    sx = math.sqrt(float(xc @ xc))
    sy = math.sqrt(float(yc @ yc))
    if sx == 0.0 or sy == 0.0:
        raise ValueError("zero-variance input")
    r = float(xc @ yc) / (sx * sy)
    r = max(-1.0, min(1.0, r))
    if abs(r) == 1.0:
        return r, 0.0
    t = r * math.sqrt((n - 2) / (1.0 - r * r))
    p = 2.0 * float(_sps.t.sf(abs(t), n - 2))
    return r, min(1.0, p)


def binomial_interval(n: int, p0: float, level: float = 0.99) -> tuple[float, float]:
    """Central binomial interval for the success *fraction* under rate p0."""
    if n < 1:
        raise ValueError("n must be positive")
    alpha = 1.0 - level
    lo = float(_sps.binom.ppf(alpha / 2.0, n, p0)) / n
    hi = float(_sps.binom.ppf(1.0 - alpha / 2.0, n, p0)) / n
    return (lo, hi)


def bonferroni(p_values) -> list[float]:
    """Bonferroni-adjusted p-values (multiplied by m, capped at 1)."""
    p_values = list(p_values)
    m = len(p_values)
    return [min(1.0, p * m) for p in p_values]
