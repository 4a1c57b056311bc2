"""Partition hidden neurons into factors of similarly behaving units.

Dissimilarity between two neurons is one minus the Pearson correlation of
their activation rows, so units that co-activate land in the same factor
regardless of scale.  Factors come from average-linkage agglomerative
clustering with a deterministic tie rule.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mlp import ActivationMatrix


@dataclass
class NeuronDistanceMatrix:
    values: np.ndarray  # (N, N), symmetric, zero diagonal, entries in [0, 2]
    neuron_ids: list[tuple[int, int]]

    @property
    def num_neurons(self) -> int:
        return self.values.shape[0]


@dataclass
class FactorPartition:
    num_factors: int
    assignment: np.ndarray  # neuron index -> factor index in [0, K)
    neuron_ids: list[tuple[int, int]]
    layer_selector: str = "all"

    def members(self, i: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == i)

    def sizes(self) -> list[int]:
        return [int(np.sum(self.assignment == i)) for i in range(self.num_factors)]


def neuron_distance(am: ActivationMatrix) -> NeuronDistanceMatrix:
    """Correlation distance 1 - r between activation rows.

    Rows with zero variance (dead units) get distance 1 to every other row
    and 0 to themselves, which keeps them clusterable without NaNs.
    """
    if am.num_samples < 2:
        raise ValueError("need at least 2 samples to correlate activations")
    x = am.values
    centered = x - x.mean(axis=1, keepdims=True)
    norms = np.linalg.norm(centered, axis=1)
    dead = np.array([bool(np.all(row == row[0])) for row in x]) | (norms == 0.0)

    unit = np.zeros_like(centered)
    alive = ~dead
    unit[alive] = centered[alive] / norms[alive, None]
    corr = np.clip(unit @ unit.T, -1.0, 1.0)
    dist = 1.0 - corr
    dist[dead, :] = 1.0
    dist[:, dead] = 1.0
    dist = (dist + dist.T) / 2.0
    np.fill_diagonal(dist, 0.0)
    return NeuronDistanceMatrix(values=np.clip(dist, 0.0, 2.0), neuron_ids=list(am.neuron_ids))


def _average_linkage_merges(values: np.ndarray) -> list[tuple[int, int]]:
    """Full merge sequence; each merge absorbs cluster b into cluster a (a < b).

    Clusters are identified by their smallest contained neuron index.  Ties on
    merge distance pick the lexicographically smallest (a, b) pair.
    """
    n = values.shape[0]
    dist = values.astype(float).copy()
    active = np.ones(n, dtype=bool)
    sizes = np.ones(n, dtype=float)
    merges = []
    big = np.inf
    work = dist.copy()
    work[~np.triu(np.ones((n, n), dtype=bool), k=1)] = big

    for _ in range(n - 1):
        flat = np.argmin(work)
        a, b = np.unravel_index(flat, work.shape)
        merges.append((int(a), int(b)))
        # Lance-Williams update for average linkage
        others = active.copy()
        others[a] = others[b] = False
        merged = (sizes[a] * dist[a, others] + sizes[b] * dist[b, others]) / (sizes[a] + sizes[b])
        dist[a, others] = merged
        dist[others, a] = merged
        sizes[a] += sizes[b]
        active[b] = False
        idx = np.flatnonzero(others)
        lo = idx[idx < a]
        hi = idx[idx > a]
        work[lo, a] = dist[lo, a]
        work[a, hi] = dist[a, hi]
        work[b, :] = big
        work[:, b] = big
    return merges


def cluster_neurons(dm: NeuronDistanceMatrix, num_factors: int,
                    layer_selector: str = "all") -> FactorPartition:
    """Cut the average-linkage dendrogram at ``num_factors`` clusters.

    Factor indices are canonical: factors are ordered by their smallest
    contained neuron index.
    """
    n = dm.num_neurons
    if not 1 <= num_factors <= n:
        raise ValueError(f"num_factors must lie in [1, {n}], got {num_factors}")
    merges = _average_linkage_merges(dm.values)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for a, b in merges[: n - num_factors]:
        parent[find(b)] = find(a)

    reps = sorted({find(i) for i in range(n)})
    factor_of = {rep: k for k, rep in enumerate(reps)}
    assignment = np.array([factor_of[find(i)] for i in range(n)], dtype=int)
    return FactorPartition(
        num_factors=num_factors,
        assignment=assignment,
        neuron_ids=list(dm.neuron_ids),
        layer_selector=layer_selector,
    )


def mean_silhouette(values: np.ndarray, assignment: np.ndarray) -> float:
    """Mean of (b-a)/max(a,b) over points; singleton clusters score 0."""
    n = len(assignment)
    labels = np.unique(assignment)
    scores = np.zeros(n)
    for i in range(n):
        own = assignment[i]
        same = (assignment == own)
        if same.sum() == 1:
            continue
        a = values[i, same].sum() / (same.sum() - 1)
        b = np.inf
        for c in labels:
            if c == own:
                continue
            b = min(b, values[i, assignment == c].mean())
        denom = max(a, b)
        scores[i] = 0.0 if denom == 0.0 else (b - a) / denom
    return float(scores.mean())


def select_num_factors(dm: NeuronDistanceMatrix, k_min: int, k_max: int) -> int:
    """K in [k_min, k_max] maximizing mean silhouette; ties go to smaller K."""
    n = dm.num_neurons
    if not 2 <= k_min <= k_max <= n - 1:
        raise ValueError(f"need 2 <= k_min <= k_max <= {n - 1}, got [{k_min}, {k_max}]")
    merges = _average_linkage_merges(dm.values)

    best_k = None
    best_score = -np.inf
    for k in range(k_min, k_max + 1):
        parent = list(range(n))

        def find(i):
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            return i

        for a, b in merges[: n - k]:
            parent[find(b)] = find(a)
        assignment = np.array([find(i) for i in range(n)])
        score = mean_silhouette(dm.values, assignment)
        if score > best_score:
            best_score = score
            best_k = k
    return best_k


def factor_activations(am: ActivationMatrix, fp: FactorPartition, i: int) -> ActivationMatrix:
    """Activation rows restricted to factor i, sample order preserved."""
    if not 0 <= i < fp.num_factors:
        raise ValueError(f"factor index {i} out of range [0, {fp.num_factors})")
    rows = fp.members(i)
    return ActivationMatrix(
        values=am.values[rows],
        neuron_ids=[am.neuron_ids[r] for r in rows],
        sample_ids=list(am.sample_ids),
    )


def partition_to_json(fp: FactorPartition) -> dict:
    return {
        "num_factors": fp.num_factors,
        "layer_selector": fp.layer_selector,
        "factors": [
            [f"{layer}:{unit}" for layer, unit in (fp.neuron_ids[r] for r in fp.members(i))]
            for i in range(fp.num_factors)
        ],
    }


def partition_from_json(obj: dict) -> FactorPartition:
    neuron_ids = []
    assignment = []
    for k, ids in enumerate(obj["factors"]):
        for token in ids:
            layer, _, unit = token.partition(":")
            neuron_ids.append((int(layer), int(unit)))
            assignment.append(k)
    return FactorPartition(
        num_factors=int(obj["num_factors"]),
        assignment=np.array(assignment, dtype=int),
        neuron_ids=neuron_ids,
        layer_selector=obj.get("layer_selector", "all"),
    )


def align_partition(fp: FactorPartition, neuron_ids: list[tuple[int, int]]) -> FactorPartition:
    """Re-index the assignment to follow ``neuron_ids`` (e.g. an ActivationMatrix order)."""
    factor_of = {nid: int(fp.assignment[i]) for i, nid in enumerate(fp.neuron_ids)}
    missing = [nid for nid in neuron_ids if nid not in factor_of]
    if missing or len(neuron_ids) != len(fp.neuron_ids):
        raise ValueError("partition neurons do not match the activation matrix")
    return FactorPartition(
        num_factors=fp.num_factors,
        assignment=np.array([factor_of[nid] for nid in neuron_ids], dtype=int),
        neuron_ids=list(neuron_ids),
        layer_selector=fp.layer_selector,
    )
