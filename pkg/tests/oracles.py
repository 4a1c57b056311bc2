"""Independent brute-force oracles used to check the library's algorithms.

Everything here is deliberately naive: enumeration, finite differences,
and O(n^3) loops.  None of it shares code with the implementations under
test.
"""

import itertools

import numpy as np


def exhaustive_best_inertia(points: np.ndarray, num_clusters: int,
                            batch: int = 1 << 15) -> float:
    """Minimum k-means cost over every labeling of points into <= L clusters."""
    points = np.asarray(points, dtype=float)
    n = len(points)
    total = num_clusters ** n
    sq = np.sum(points ** 2)
    best = np.inf
    digits = num_clusters ** np.arange(n)
    for start in range(0, total, batch):
        codes = np.arange(start, min(start + batch, total))
        labels = (codes[:, None] // digits[None, :]) % num_clusters  # (B, n)
        cost = np.full(len(codes), sq)
        for c in range(num_clusters):
            mask = (labels == c).astype(float)  # (B, n)
            counts = mask.sum(axis=1)
            sums = mask @ points  # (B, dim)
            nonzero = counts > 0
            cost[nonzero] -= np.sum(sums[nonzero] ** 2, axis=1) / counts[nonzero]
        best = min(best, float(cost.min()))
    return best


def gini_of(labels) -> float:
    labels = np.asarray(labels)
    _, counts = np.unique(labels, return_counts=True)
    p = counts / len(labels)
    return float(1.0 - np.sum(p * p))


def brute_force_root_split(meta: np.ndarray, labels: np.ndarray):
    """Best (factor, value) one-vs-rest split by Gini decrease.

    Scans factors then values in ascending order and keeps strictly better
    candidates, so ties resolve to the smallest (factor, value) pair.
    Returns (decrease, factor, value) or None when no split helps.
    """
    k, t = meta.shape
    parent = gini_of(labels)
    best = None
    for factor in range(k):
        for value in sorted(set(int(v) for v in meta[factor])):
            eq = meta[factor] == value
            n_eq = int(eq.sum())
            if n_eq == 0 or n_eq == t:
                continue
            decrease = parent - (n_eq / t) * gini_of(labels[eq]) \
                - ((t - n_eq) / t) * gini_of(labels[~eq])
            if decrease <= 0.0:
                continue
            if best is None or decrease > best[0]:
                best = (decrease, factor, value)
    return best


def finite_difference_grads(loss_fn, arrays, step=1e-5):
    """Central finite differences of loss_fn() w.r.t. each array, in place."""
    grads = []
    for arr in arrays:
        g = np.zeros_like(arr)
        it = np.nditer(arr, flags=["multi_index"])
        while not it.finished:
            idx = it.multi_index
            orig = arr[idx]
            arr[idx] = orig + step
            up = loss_fn()
            arr[idx] = orig - step
            down = loss_fn()
            arr[idx] = orig
            g[idx] = (up - down) / (2 * step)
            it.iternext()
        grads.append(g)
    return grads


def naive_average_linkage(dist: np.ndarray, num_clusters: int) -> list[frozenset]:
    """Textbook agglomerative clustering over an explicit cluster list.

    Cluster pair distance is recomputed from scratch as the mean of all
    cross distances; ties pick the smallest pair of minimum member ids.
    """
    clusters = [frozenset([i]) for i in range(len(dist))]
    while len(clusters) > num_clusters:
        best = None
        for a, b in itertools.combinations(range(len(clusters)), 2):
            d = np.mean([dist[i, j] for i in clusters[a] for j in clusters[b]])
            key = (d, min(min(clusters[a]), min(clusters[b])),
                   max(min(clusters[a]), min(clusters[b])))
            if best is None or key < best[0]:
                best = (key, a, b)
        _, a, b = best
        merged = clusters[a] | clusters[b]
        clusters = [c for i, c in enumerate(clusters) if i not in (a, b)] + [merged]
    return sorted(clusters, key=min)


def naive_silhouette(dist: np.ndarray, labels: np.ndarray) -> float:
    scores = []
    for i in range(len(labels)):
        same = [j for j in range(len(labels)) if labels[j] == labels[i] and j != i]
        if not same:
            scores.append(0.0)
            continue
        a = np.mean([dist[i, j] for j in same])
        b = min(
            np.mean([dist[i, j] for j in range(len(labels)) if labels[j] == other])
            for other in set(labels) - {labels[i]}
        )
        denom = max(a, b)
        scores.append(0.0 if denom == 0 else (b - a) / denom)
    return float(np.mean(scores))
