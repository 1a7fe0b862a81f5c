"""Brute-force reference implementations, written independently of molesim.stats."""

from __future__ import annotations

import itertools
import math

import numpy as np


def midranks(values):
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        avg = (i + j) / 2 + 1
        for k in range(i, j + 1):
            ranks[order[k]] = avg
        i = j + 1
    return ranks


def cliffs_delta(x, y):
    gt = sum(1 for a in x for b in y if a > b)
    lt = sum(1 for a in x for b in y if a < b)
    return (gt - lt) / (len(x) * len(y))


def mwu_u(x, y):
    return sum(1.0 if a > b else 0.5 if a == b else 0.0 for a in x for b in y)


def mwu_exact_p(x, y):
    """Permutation p over every split of the pooled sample (ties kept)."""
    pooled = list(x) + list(y)
    n1, n = len(x), len(x) + len(y)
    ranks = np.array(midranks(pooled))
    combos = np.array(list(itertools.combinations(range(n), n1)), dtype=int)
    u_all = ranks[combos].sum(axis=1) - n1 * (n1 + 1) / 2
    mu = n1 * (n - n1) / 2
    obs = abs(mwu_u(x, y) - mu)
    hits = int(np.sum(np.abs(u_all - mu) >= obs - 1e-9))
    return hits / len(combos)


def wilcoxon_exact(diffs):
    d = [v for v in diffs if v != 0]
    if not d:
        return 0.0, 1.0
    r = midranks([abs(v) for v in d])
    total = sum(r)
    wplus = sum(ri for ri, v in zip(r, d) if v > 0)
    w = min(wplus, total - wplus)
    hits = 0
    for signs in itertools.product((0, 1), repeat=len(d)):
        s = sum(ri for ri, bit in zip(r, signs) if bit)
        if abs(s - total / 2) >= abs(wplus - total / 2) - 1e-9:
            hits += 1
    return w, hits / 2 ** len(d)


def gini(values):
    n = len(values)
    mean = sum(values) / n
    return sum(abs(a - b) for a in values for b in values) / (2 * n * n * mean)


def spearman(x, y):
    rx, ry = midranks(list(x)), midranks(list(y))
    mx, my = sum(rx) / len(rx), sum(ry) / len(ry)
    num = sum((a - mx) * (b - my) for a, b in zip(rx, ry))
    den = math.sqrt(sum((a - mx) ** 2 for a in rx) * sum((b - my) ** 2 for b in ry))
    return float("nan") if den == 0 else num / den
