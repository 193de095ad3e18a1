"""Independent brute-force oracles used to freeze expected values.

Everything here is deliberately naive: enumeration, threshold sweeps,
closed forms. None of it shares code with the implementations it checks.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


def auprc_sweep(y, scores):
    """Average precision via an explicit confusion-matrix sweep."""
    y = np.asarray(y, dtype=float)
    scores = np.asarray(scores, dtype=float)
    thresholds = sorted(set(scores.tolist()), reverse=True)
    n_pos = float(np.sum(y == 1))
    area = 0.0
    prev_recall = 0.0
    for t in thresholds:
        predicted = scores >= t
        tp = float(np.sum(y[predicted] == 1))
        precision = tp / float(np.sum(predicted))
        recall = tp / n_pos
        area += (recall - prev_recall) * precision
        prev_recall = recall
    return area


def mwu_enumeration(a, b):
    """Two-sided exact Mann-Whitney p by listing all C(n+m, n) labelings.

    Assumes no ties. Returns (u_statistic_of_a, p_value).
    """
    a = list(map(float, a))
    b = list(map(float, b))
    n, m = len(a), len(b)
    u_obs = sum(1 for x in a for y_ in b if x > y_)
    low = min(u_obs, n * m - u_obs)
    total = 0
    hits = 0
    for positions in itertools.combinations(range(n + m), n):
        chosen = set(positions)
        u = 0
        seen_b = 0
        for i in range(n + m):
            if i in chosen:
                u += seen_b
            else:
                seen_b += 1
        total += 1
        if u <= low:
            hits += 1
    p = min(1.0, 2.0 * hits / total)
    return float(u_obs), p


def chi2_sf_closed_form(stat, dof):
    """Upper-tail chi-squared probability from closed forms (dof 1, 2, 4)."""
    if dof == 1:
        return math.erfc(math.sqrt(stat / 2.0))
    if dof == 2:
        return math.exp(-stat / 2.0)
    if dof == 4:
        return (1.0 + stat / 2.0) * math.exp(-stat / 2.0)
    raise ValueError("only dof 1, 2, 4 supported")


def shapley_brute_force(flat, x, n_features):
    """Exact Shapley values for one tree via subset enumeration.

    `flat` carries parallel node arrays (children_left, children_right,
    feature, threshold, value, cover); conditional expectations for
    out-of-coalition features follow cover weights.
    """
    left, right, feat, thr, val, cov = flat

    def cond_exp(node, coalition):
        if left[node] < 0:
            return val[node]
        f = feat[node]
        if f in coalition:
            nxt = left[node] if x[f] < thr[node] else right[node]
            return cond_exp(nxt, coalition)
        lo = cond_exp(left[node], coalition)
        hi = cond_exp(right[node], coalition)
        return (cov[left[node]] * lo + cov[right[node]] * hi) / cov[node]

    values = {}
    all_feats = list(range(n_features))
    for size in range(n_features + 1):
        for subset in itertools.combinations(all_feats, size):
            values[frozenset(subset)] = cond_exp(0, frozenset(subset))
    phi = np.zeros(n_features)
    fact = math.factorial
    for i in all_feats:
        rest = [f for f in all_feats if f != i]
        for size in range(len(rest) + 1):
            w = fact(size) * fact(n_features - size - 1) / fact(n_features)
            for subset in itertools.combinations(rest, size):
                s = frozenset(subset)
                phi[i] += w * (values[s | {i}] - values[s])
    return phi


def min_spanning_weight_exhaustive(dist):
    """Minimum spanning-tree weight by enumerating every Pruefer sequence.

    Vectorized across all n^(n-2) sequences; practical up to n = 9.
    """
    dist = np.asarray(dist, dtype=float)
    n = dist.shape[0]
    if n == 2:
        return float(dist[0, 1])
    grids = np.meshgrid(*([np.arange(n, dtype=np.int8)] * (n - 2)), indexing="ij")
    seqs = np.stack([g.ravel() for g in grids], axis=1)
    m = seqs.shape[0]
    rows = np.arange(m)
    degree = np.ones((m, n), dtype=np.int8)
    for j in range(n - 2):
        np.add.at(degree, (rows, seqs[:, j].astype(np.int64)), 1)
    weight = np.zeros(m)
    for j in range(n - 2):
        leaf = np.argmax(degree == 1, axis=1)
        v = seqs[:, j].astype(np.int64)
        weight += dist[leaf, v]
        degree[rows, leaf] -= 1
        degree[rows, v] -= 1
    first = np.argmax(degree == 1, axis=1)
    rest = degree.copy()
    rest[rows, first] = 0
    second = np.argmax(rest == 1, axis=1)
    weight += dist[first, second]
    return float(weight.min())
