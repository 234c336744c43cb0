"""Independent reference implementations used to check the library.

Everything here is written the slow, obvious way (python loops, sets,
enumeration) on purpose, so agreement with the vectorized library code is
meaningful.
"""

import itertools
import math

import numpy as np


def random_partial_matrix(rng, n, K, allow_complete=True):
    """Random top-t ordering matrix with depths in {1..K-2, K}.

    Depth K-1 is avoided so the raw matrix is already in the normalized
    form the library stores, keeping round-trip comparisons exact.
    """
    depths = [d for d in range(1, K - 1)] + ([K] if allow_complete else [])
    rows = np.zeros((n, K), dtype=np.int64)
    out_d = np.zeros(n, dtype=np.int64)
    for s in range(n):
        perm = rng.permutation(K) + 1
        d = int(depths[rng.integers(len(depths))])
        rows[s, :d] = perm[:d]
        out_d[s] = d
    return rows, out_d


def ordering_row_loglik(items, p):
    """Stagewise log-probability of one top-t ordering, by explicit sets.

    items: 1-based item labels in preference order; p: positive supports.
    """
    K = len(p)
    avail = set(range(1, K + 1))
    ll = 0.0
    for it in items:
        denom = sum(p[j - 1] for j in avail)
        ll += math.log(p[it - 1] / denom)
        avail.remove(it)
    return ll


def mixture_loglik_direct(supports, weights, orderings, nranked):
    """Observed-data mixture log-likelihood by brute force."""
    supports = np.asarray(supports, dtype=float)
    weights = np.asarray(weights, dtype=float)
    total = 0.0
    for s in range(orderings.shape[0]):
        items = [int(v) for v in orderings[s, : nranked[s]]]
        lik = sum(
            w * math.exp(ordering_row_loglik(items, supports[g]))
            for g, w in enumerate(weights)
        )
        total += math.log(lik)
    return total


def all_complete_orderings(K):
    return [list(perm) for perm in itertools.permutations(range(1, K + 1))]


def em_update_single(p, orderings, nranked, shape=None, rate=0.0):
    """One homogeneous minorize-maximize support update, by explicit loops.

    With shape=None a flat prior is used (shape 1, rate 0), giving the
    maximum-likelihood update.
    """
    N, K = orderings.shape
    p = np.asarray(p, dtype=float)
    if shape is None:
        shape = np.ones(K)
    gamma = np.zeros(K)
    denom = np.zeros(K)
    for s in range(N):
        avail = set(range(1, K + 1))
        for t in range(nranked[s]):
            it = int(orderings[s, t])
            gamma[it - 1] += 1.0
            rem = sum(p[j - 1] for j in avail)
            for j in avail:
                denom[j - 1] += 1.0 / rem
            avail.remove(it)
    return (np.asarray(shape) - 1.0 + gamma) / (rate + denom)


def responsibilities_direct(supports, weights, orderings, nranked):
    """Posterior component membership probabilities, by brute force."""
    G = len(weights)
    N = orderings.shape[0]
    z = np.zeros((N, G))
    for s in range(N):
        items = [int(v) for v in orderings[s, : nranked[s]]]
        for g in range(G):
            z[s, g] = weights[g] * math.exp(
                ordering_row_loglik(items, supports[g])
            )
        z[s] /= z[s].sum()
    return z


def support_conditional_direct(orderings, nranked, z_onehot, y, shape, rate):
    """Gamma full-conditional parameters for the supports, by explicit
    stage loops over the availability indicators."""
    N, K = orderings.shape
    G = z_onehot.shape[1]
    a = np.array(shape, dtype=float, copy=True)
    b = np.tile(np.asarray(rate, dtype=float)[:, None], (1, K))
    for s in range(N):
        g = int(np.argmax(z_onehot[s]))
        avail = set(range(1, K + 1))
        for t in range(nranked[s]):
            it = int(orderings[s, t])
            a[g, it - 1] += 1.0
            for j in avail:
                b[g, j - 1] += y[s, t]
            avail.remove(it)
    return a, b


def paired_counts_direct(orderings, nranked):
    """Pairwise preference counts by explicit rank comparison."""
    N, K = orderings.shape
    tau = np.zeros((K, K), dtype=np.int64)
    for s in range(N):
        rank = {int(orderings[s, t]): t + 1 for t in range(nranked[s])}
        for i in range(1, K + 1):
            for j in range(1, K + 1):
                if i == j:
                    continue
                ri = rank.get(i, K + 1)
                rj = rank.get(j, K + 1)
                if ri < rj:
                    tau[i - 1, j - 1] += 1
    return tau


def best_permutation_cost(vecs, ref):
    """Minimum total squared distance over all component permutations,
    via scipy's assignment solver (independent of the exhaustive search
    in the library)."""
    from scipy.optimize import linear_sum_assignment

    G = ref.shape[0]
    cost = np.zeros((G, G))
    for g in range(G):
        for h in range(G):
            cost[g, h] = ((vecs[h] - ref[g]) ** 2).sum()
    rows, cols = linear_sum_assignment(cost)
    return cost[rows, cols].sum(), cols
