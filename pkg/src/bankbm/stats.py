"""Wilcoxon-Mann-Whitney two-sample test and significance stars.

Exact two-sided p comes from the full distribution of U over rank
allocations (computed by the standard counting recursion, which agrees
with literal enumeration) whenever the pooled sample has no ties and
n1 + n2 <= 20. Everything else takes the tie-corrected normal
approximation with continuity correction.
"""

from dataclasses import dataclass
import math

import numpy as np

EXACT_LIMIT = 20


@dataclass(frozen=True)
class UTestResult:
    u_statistic: float
    p_value: float
    method: str  # "exact" | "normal-approx"
    n1: int
    n2: int


def _midranks(pooled):
    """Average ranks (1-based) with ties sharing their midrank."""
    order = np.argsort(pooled, kind="mergesort")
    ranks = np.empty(len(pooled), dtype=np.float64)
    i = 0
    n = len(pooled)
    tie_sizes = []
    while i < n:
        j = i
        while j + 1 < n and pooled[order[j + 1]] == pooled[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        if j > i:
            tie_sizes.append(j - i + 1)
        i = j + 1
    return ranks, tie_sizes


def _exact_u_distribution(n1, n2):
    """Counts of rank allocations per U value, U = 0..n1*n2 (exact ints)."""
    # f[m][n][u] = f[m-1][n][u-n] + f[m][n-1][u]
    prev_col = [[1] for _ in range(n1 + 1)]  # n = 0 column
    for n in range(1, n2 + 1):
        col = [[1]]  # m = 0
        for m in range(1, n1 + 1):
            row = [0] * (m * n + 1)
            up = col[m - 1]          # f[m-1][n]
            left = prev_col[m]       # f[m][n-1]
            for u in range(m * n + 1):
                c = 0
                if u >= n and u - n < len(up):
                    c += up[u - n]
                if u < len(left):
                    c += left[u]
                row[u] = c
            col.append(row)
        prev_col = col
    return prev_col[n1]


def _normal_approx_p(u, n1, n2, tie_sizes):
    n = n1 + n2
    mu = 0.5 * n1 * n2
    tie_term = 0.0
    for t in tie_sizes:
        tie_term += t * t * t - t
    var = n1 * n2 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)))
    if var <= 0.0:
        return 1.0
    z = max(0.0, abs(u - mu) - 0.5) / math.sqrt(var)
    return math.erfc(z / math.sqrt(2.0))


def mann_whitney(a, b) -> UTestResult:
    """Two-sided Mann-Whitney U test; U is reported for sample `a`."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    n1, n2 = len(a), len(b)
    if n1 == 0 or n2 == 0:
        raise ValueError("mann_whitney requires two non-empty samples")
    pooled = np.concatenate([a, b])
    if not np.all(np.isfinite(pooled)):
        raise ValueError("mann_whitney requires finite sample values")

    ranks, tie_sizes = _midranks(pooled)
    r1 = float(ranks[:n1].sum())
    u = r1 - 0.5 * n1 * (n1 + 1.0)

    if not tie_sizes and n1 + n2 <= EXACT_LIMIT:
        dist = _exact_u_distribution(n1, n2)
        u_int = int(round(u))
        le = sum(dist[: u_int + 1])
        ge = sum(dist[u_int:])
        total = sum(dist)
        p = min(1.0, (2 * min(le, ge)) / total)
        method = "exact"
    else:
        p = _normal_approx_p(u, n1, n2, tie_sizes)
        method = "normal-approx"
    return UTestResult(u_statistic=u, p_value=p, method=method, n1=n1, n2=n2)


def significance_stars(p) -> str:
    """'***' at 1%, '**' at 5%, '*' at 10%, boundaries inclusive."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p-value outside [0,1]: {p}")
    if p <= 0.01:
        return "***"
    if p <= 0.05:
        return "**"
    if p <= 0.10:
        return "*"
    return ""
