"""Nonparametric tests, effect sizes, BCa bootstrap and concentration measures.

Exact null distributions for Mann-Whitney and Wilcoxon are built by dynamic
programming over *doubled* mid-ranks, which keeps every rank an integer and
makes tied samples exact as well.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np
from scipy import stats as sps

EXACT_MWU_MAX_PAIRS = 10_000
EXACT_WILCOXON_MAX_N = 20

# conventional |delta| anchors: negligible / small / medium / large
DELTA_NEGLIGIBLE = 0.147
DELTA_SMALL = 0.33
DELTA_MEDIUM = 0.474


class EmptySampleError(ValueError):
    pass


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    n1: int
    n2: int = 0
    tie_corrected: bool = False
    exact: bool = False


@dataclass(frozen=True)
class EffectEstimate:
    point: float
    ci_low: float
    ci_high: float
    ci_level: float = 0.95
    method: str = "BCa"
    resamples: int = 1000
    bootstrap_seed: int = 42
    degenerate: bool = False

    @property
    def contains_point(self) -> bool:
        return self.ci_low <= self.point <= self.ci_high


def _arr(x, name="sample") -> np.ndarray:
    a = np.asarray(x, dtype=float).ravel()
    if a.size == 0:
        raise EmptySampleError(f"{name} is empty")
    return a


def magnitude(delta: float) -> str:
    d = abs(delta)
    if d < DELTA_NEGLIGIBLE:
        return "negligible"
    if d < DELTA_SMALL:
        return "small"
    if d < DELTA_MEDIUM:
        return "medium"
    return "large"


# --- effect sizes -------------------------------------------------------------


def cliffs_delta(x, y) -> float:
    x, y = _arr(x, "x"), _arr(y, "y")
    s = np.sign(x[:, None] - y[None, :])
    return float(s.sum() / (x.size * y.size))


def _doubled_midranks(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return 2*midrank as ints, plus the tie-group sizes."""
    ranks = sps.rankdata(values, method="average")
    _, counts = np.unique(values, return_counts=True)
    return np.rint(2 * ranks).astype(np.int64), counts


# --- Mann-Whitney -----------------------------------------------------------------


def _mwu_exact_p(x: np.ndarray, y: np.ndarray, u: float) -> float:
    n1, n2 = x.size, y.size
    r2, _ = _doubled_midranks(np.concatenate([x, y]))
    smax = int(r2.sum())
    # ways[k, s]: subsets of size k whose doubled rank sum is s
    ways = np.zeros((n1 + 1, smax + 1))
    ways[0, 0] = 1.0
    for r in r2:
        ways[1:, r:] += ways[:-1, : smax + 1 - r].copy()
    dist = ways[n1]
    s = np.nonzero(dist)[0]
    # 2U = S - n1(n1+1) for doubled rank sum S
    twice_u = s - n1 * (n1 + 1)
    obs = abs(round(2 * u) - n1 * n2)
    extreme = np.abs(twice_u - n1 * n2) >= obs
    return float(min(1.0, dist[s[extreme]].sum() / dist.sum()))


def mann_whitney_u(x, y, exact: Union[bool, None] = None) -> TestResult:
    """Two-sided Mann-Whitney U with U = #{x > y} + 0.5 #{x = y}."""
    x, y = _arr(x, "x"), _arr(y, "y")
    n1, n2 = x.size, y.size
    d = x[:, None] - y[None, :]
    u = float((d > 0).sum() + 0.5 * (d == 0).sum())
    _, counts = np.unique(np.concatenate([x, y]), return_counts=True)
    ties = bool((counts > 1).any())
    if exact is None:
        exact = n1 * n2 <= EXACT_MWU_MAX_PAIRS
    if exact:
        return TestResult(u, _mwu_exact_p(x, y, u), n1, n2, ties, True)
    n = n1 + n2
    mu = n1 * n2 / 2
    tie_term = float((counts**3 - counts).sum()) / (n * (n - 1))
    var = n1 * n2 / 12 * ((n + 1) - tie_term)
    if var <= 0:
        return TestResult(u, 1.0, n1, n2, ties, False)
    z = max(0.0, abs(u - mu) - 0.5) / math.sqrt(var)
    return TestResult(u, float(min(1.0, 2 * sps.norm.sf(z))), n1, n2, ties, False)


# --- Wilcoxon signed-rank --------------------------------------------------------


def wilcoxon_signed_rank(diffs, exact: Union[bool, None] = None) -> TestResult:
    """Two-sided signed-rank test; zero differences are dropped first."""
    d = _arr(diffs, "diffs")
    d = d[d != 0]
    n = d.size
    if n == 0:
        return TestResult(0.0, 1.0, 0, 0, False, True)
    r2, counts = _doubled_midranks(np.abs(d))
    ties = bool((counts > 1).any())
    wplus2 = int(r2[d > 0].sum())
    total2 = int(r2.sum())
    w = min(wplus2, total2 - wplus2) / 2
    if exact is None:
        exact = n <= EXACT_WILCOXON_MAX_N
    if exact:
        dist = np.zeros(total2 + 1)
        dist[0] = 1.0
        for r in r2:
            dist[r:] += dist[: total2 + 1 - r].copy()
        s = np.arange(total2 + 1)
        extreme = np.abs(2 * s - total2) >= abs(2 * wplus2 - total2)
        p = float(min(1.0, dist[extreme].sum() / dist.sum()))
        return TestResult(w, p, n, 0, ties, True)
    mu = n * (n + 1) / 4
    var = n * (n + 1) * (2 * n + 1) / 24 - float((counts**3 - counts).sum()) / 48
    if var <= 0:
        return TestResult(w, 1.0, n, 0, ties, False)
    z = max(0.0, abs(wplus2 / 2 - mu) - 0.5) / math.sqrt(var)
    return TestResult(w, float(min(1.0, 2 * sps.norm.sf(z))), n, 0, ties, False)


# --- BCa bootstrap ------------------------------------------------------------------


def _jackknife(groups: list[np.ndarray], statistic: Callable) -> tuple[list[np.ndarray], bool]:
    out = []
    for j, g in enumerate(groups):
        if g.size < 2:
            return out, False
        vals = np.empty(g.size)
        for i in range(g.size):
            sub = list(groups)
            sub[j] = np.delete(g, i)
            vals[i] = statistic(*sub)
        out.append(vals)
    return out, True


def bca_interval(
    sample: Union[Sequence[float], tuple],
    statistic: Callable[..., float],
    B: int = 1000,
    seed: int = 42,
    level: float = 0.95,
) -> EffectEstimate:
    """BCa interval for ``statistic``.

    ``sample`` is one array, or a tuple of arrays for multi-sample
    statistics (each group is resampled independently).
    """
    groups = [np.asarray(g, dtype=float).ravel() for g in sample] if isinstance(sample, tuple) else [
        np.asarray(sample, dtype=float).ravel()
    ]
    if any(g.size < 2 for g in groups):
        raise ValueError("every sample needs at least 2 observations")
    theta = float(statistic(*groups))
    rng = np.random.default_rng(seed)
    idx = [rng.integers(0, g.size, (B, g.size)) for g in groups]
    reps = np.array([statistic(*(g[i[b]] for g, i in zip(groups, idx))) for b in range(B)], dtype=float)

    def _degenerate() -> EffectEstimate:
        lo, hi = np.quantile(reps, [(1 - level) / 2, (1 + level) / 2])
        return EffectEstimate(theta, float(lo), float(hi), level, "BCa", B, seed, True)

    frac = float(np.mean(reps < theta))
    if frac <= 0.0 or frac >= 1.0:
        return _degenerate()
    z0 = sps.norm.ppf(frac)

    jack, ok = _jackknife(groups, statistic)
    if not ok:
        return _degenerate()
    num = den = 0.0
    for g, vals in zip(groups, jack):
        u = (g.size - 1) * (vals.mean() - vals)
        num += float((u**3).sum()) / g.size**3
        den += float((u**2).sum()) / g.size**2
    a = num / (6 * den**1.5) if den > 0 else 0.0

    zs = sps.norm.ppf([(1 - level) / 2, (1 + level) / 2])
    adj = z0 + (z0 + zs) / (1 - a * (z0 + zs))
    alphas = sps.norm.cdf(adj)
    if not np.all(np.isfinite(alphas)):
        return _degenerate()
    lo, hi = np.quantile(reps, alphas)
    return EffectEstimate(theta, float(lo), float(hi), level, "BCa", B, seed, False)


# --- correlation -------------------------------------------------------------------


def spearman_rho(x, y) -> float:
    """Pearson correlation of mid-ranks; NaN when either input is constant."""
    x, y = _arr(x, "x"), _arr(y, "y")
    if x.size != y.size or x.size < 2:
        raise ValueError("spearman_rho needs two equal-length samples of size >= 2")
    rx, ry = sps.rankdata(x), sps.rankdata(y)
    rx, ry = rx - rx.mean(), ry - ry.mean()
    den = math.sqrt(float((rx**2).sum() * (ry**2).sum()))
    if den == 0:
        return float("nan")
    return float((rx * ry).sum() / den)


# --- concentration -------------------------------------------------------------------


def _nonneg(values) -> np.ndarray:
    v = _arr(values, "values")
    if (v < 0).any():
        raise ValueError("values must be non-negative")
    if not (v > 0).any():
        raise ValueError("at least one value must be positive")
    return np.sort(v)


def gini(values) -> float:
    v = _nonneg(values)
    n = v.size
    i = np.arange(1, n + 1)
    return float(2 * (i * v).sum() / (n * v.sum()) - (n + 1) / n)


def lorenz_points(values) -> list[tuple[float, float]]:
    v = _nonneg(values)
    n = v.size
    cum = np.cumsum(v) / v.sum()
    pts = [(0.0, 0.0)] + [((k + 1) / n, float(c)) for k, c in enumerate(cum)]
    pts[-1] = (1.0, 1.0)
    return pts


def lorenz_share(values, population_share: float = 0.8) -> float:
    """Share of total volume held by the bottom ``population_share`` of units."""
    pts = np.array(lorenz_points(values))
    return float(np.interp(population_share, pts[:, 0], pts[:, 1]))
