import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from treeview.factors import (FactorPartition, align_partition, cluster_neurons,
                              factor_activations, mean_silhouette, neuron_distance,
                              partition_from_json, partition_to_json,
                              select_num_factors)
from treeview.mlp import ActivationMatrix
from oracles import naive_average_linkage, naive_silhouette


def make_am(values, layer=0):
    values = np.asarray(values, dtype=float)
    return ActivationMatrix(
        values=values,
        neuron_ids=[(layer, u) for u in range(values.shape[0])],
        sample_ids=[str(j) for j in range(values.shape[1])],
    )


def planted_distance_matrix(block_sizes=(5, 5), seed=0):
    """Within-block distances <= 0.1, cross-block >= 0.9."""
    rng = np.random.default_rng(seed)
    n = sum(block_sizes)
    labels = np.repeat(np.arange(len(block_sizes)), block_sizes)
    dist = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            if labels[i] == labels[j]:
                dist[i, j] = dist[j, i] = rng.uniform(0.01, 0.1)
            else:
                dist[i, j] = dist[j, i] = rng.uniform(0.9, 1.0)
    from treeview.factors import NeuronDistanceMatrix
    return NeuronDistanceMatrix(values=dist, neuron_ids=[(0, u) for u in range(n)]), labels


class TestNeuronDistance:
    def test_duplicate_rows_distance_zero(self):
        am = make_am([[1.0, 2.0, 3.0], [1.0, 2.0, 3.0]])
        dm = neuron_distance(am)
        assert dm.values[0, 1] == pytest.approx(0.0, abs=1e-12)

    def test_negated_row_distance_two(self):
        am = make_am([[1.0, 2.0, 3.0], [-1.0, -2.0, -3.0]])
        dm = neuron_distance(am)
        assert dm.values[0, 1] == pytest.approx(2.0, abs=1e-12)

    def test_pearson_arithmetic(self):
        am = make_am([[1.0, 2.0, 3.0], [1.0, 2.0, 4.0]])
        dm = neuron_distance(am)
        expected = 1.0 - 9.0 / np.sqrt(84.0)
        assert dm.values[0, 1] == pytest.approx(expected, abs=1e-12)
        # independent numpy oracle
        assert dm.values[0, 1] == pytest.approx(
            1.0 - np.corrcoef(am.values)[0, 1], abs=1e-12)

    def test_dead_neuron_convention(self):
        am = make_am([[2.0, 2.0, 2.0], [1.0, 2.0, 3.0], [0.0, 0.0, 0.0]])
        dm = neuron_distance(am)
        assert dm.values[0, 0] == 0.0
        assert dm.values[0, 1] == 1.0
        assert dm.values[0, 2] == 1.0  # two dead neurons are still distance 1
        assert dm.values[2, 2] == 0.0

    def test_symmetry_range_diagonal(self):
        rng = np.random.default_rng(4)
        am = make_am(rng.normal(size=(10, 20)))
        dm = neuron_distance(am)
        assert np.array_equal(dm.values, dm.values.T)
        assert np.all(np.diag(dm.values) == 0.0)
        assert np.all((dm.values >= 0.0) & (dm.values <= 2.0))

    @settings(max_examples=40)
    @given(st.integers(0, 10_000), st.floats(0.1, 100.0), st.floats(-50.0, 50.0))
    def test_positive_affine_invariance(self, seed, scale, shift):
        rng = np.random.default_rng(seed)
        base = rng.normal(size=(5, 12))
        dm1 = neuron_distance(make_am(base))
        rescaled = base.copy()
        rescaled[2] = scale * rescaled[2] + shift
        dm2 = neuron_distance(make_am(rescaled))
        assert np.all(np.abs(dm1.values - dm2.values) < 1e-9)

    def test_needs_two_samples(self):
        with pytest.raises(ValueError):
            neuron_distance(make_am([[1.0], [2.0]]))


class TestClusterNeurons:
    def test_single_factor(self):
        dm, _ = planted_distance_matrix()
        fp = cluster_neurons(dm, 1)
        assert fp.num_factors == 1
        assert fp.sizes() == [10]

    def test_all_singletons(self):
        dm, _ = planted_distance_matrix()
        fp = cluster_neurons(dm, 10)
        assert fp.sizes() == [1] * 10
        assert fp.assignment.tolist() == list(range(10))

    def test_recovers_planted_blocks(self):
        dm, labels = planted_distance_matrix()
        fp = cluster_neurons(dm, 2)
        assert fp.assignment.tolist() == labels.tolist()

    def test_matches_naive_linkage_oracle(self):
        rng = np.random.default_rng(8)
        n = 12
        sym = rng.uniform(0.1, 1.9, size=(n, n))
        dist = (sym + sym.T) / 2
        np.fill_diagonal(dist, 0.0)
        from treeview.factors import NeuronDistanceMatrix
        dm = NeuronDistanceMatrix(values=dist, neuron_ids=[(0, u) for u in range(n)])
        for k in (2, 3, 5):
            fp = cluster_neurons(dm, k)
            ours = {frozenset(np.flatnonzero(fp.assignment == i).tolist())
                    for i in range(k)}
            oracle = {frozenset(c) for c in naive_average_linkage(dist, k)}
            assert ours == oracle

    def test_order_invariance_up_to_relabeling(self):
        dm, _ = planted_distance_matrix(block_sizes=(4, 3, 5), seed=2)
        fp = cluster_neurons(dm, 3)
        rng = np.random.default_rng(1)
        perm = rng.permutation(dm.num_neurons)
        from treeview.factors import NeuronDistanceMatrix
        dm_p = NeuronDistanceMatrix(
            values=dm.values[np.ix_(perm, perm)],
            neuron_ids=[dm.neuron_ids[i] for i in perm],
        )
        fp_p = cluster_neurons(dm_p, 3)
        original = {frozenset(np.flatnonzero(fp.assignment == i).tolist())
                    for i in range(3)}
        permuted = {
            frozenset(int(perm[j]) for j in np.flatnonzero(fp_p.assignment == i))
            for i in range(3)
        }
        assert original == permuted

    def test_partition_covers_all_neurons(self):
        dm, _ = planted_distance_matrix(block_sizes=(3, 4, 6), seed=5)
        for k in (1, 2, 4, 7):
            fp = cluster_neurons(dm, k)
            assert sum(fp.sizes()) == dm.num_neurons
            assert all(s >= 1 for s in fp.sizes())

    def test_k_out_of_range(self):
        dm, _ = planted_distance_matrix()
        with pytest.raises(ValueError):
            cluster_neurons(dm, 0)
        with pytest.raises(ValueError):
            cluster_neurons(dm, 11)


class TestSelectNumFactors:
    def test_planted_blocks_pick_two(self):
        dm, _ = planted_distance_matrix()
        assert select_num_factors(dm, 2, 5) == 2

    def test_silhouette_matches_naive(self):
        dm, labels = planted_distance_matrix(block_sizes=(4, 4, 4), seed=9)
        assignment = labels
        assert mean_silhouette(dm.values, assignment) == pytest.approx(
            naive_silhouette(dm.values, assignment), abs=1e-12)

    def test_equidistant_ties_break_small(self):
        n = 6
        dist = np.full((n, n), 0.5)
        np.fill_diagonal(dist, 0.0)
        from treeview.factors import NeuronDistanceMatrix
        dm = NeuronDistanceMatrix(values=dist, neuron_ids=[(0, u) for u in range(n)])
        assert select_num_factors(dm, 2, 4) == 2

    def test_empty_range_errors(self):
        dm, _ = planted_distance_matrix()
        with pytest.raises(ValueError):
            select_num_factors(dm, 4, 3)
        with pytest.raises(ValueError):
            select_num_factors(dm, 2, 10)  # k_max must be <= N-1


class TestFactorActivations:
    def test_full_matrix_for_single_factor(self):
        am = make_am(np.arange(12.0).reshape(3, 4))
        dm = neuron_distance(am)
        fp = cluster_neurons(dm, 1)
        fa = factor_activations(am, fp, 0)
        assert np.array_equal(fa.values, am.values)

    def test_planted_block_rows(self):
        rng = np.random.default_rng(3)
        base = rng.normal(size=(2, 30))
        block0 = base[0] + rng.normal(scale=0.01, size=(5, 30))
        block1 = base[1] + rng.normal(scale=0.01, size=(5, 30))
        am = make_am(np.vstack([block0, block1]))
        fp = cluster_neurons(neuron_distance(am), 2)
        fa0 = factor_activations(am, fp, 0)
        assert fa0.values.shape == (5, 30)
        assert np.array_equal(fa0.values, am.values[:5])
        assert fa0.neuron_ids == am.neuron_ids[:5]

    def test_index_out_of_range(self):
        am = make_am(np.eye(3))
        fp = cluster_neurons(neuron_distance(am), 2)
        with pytest.raises(ValueError):
            factor_activations(am, fp, 2)


class TestPartitionJson:
    def test_round_trip_and_alignment(self):
        dm, _ = planted_distance_matrix(block_sizes=(3, 4), seed=6)
        fp = cluster_neurons(dm, 2)
        again = partition_from_json(partition_to_json(fp))
        aligned = align_partition(again, fp.neuron_ids)
        assert aligned.assignment.tolist() == fp.assignment.tolist()

    def test_alignment_rejects_unknown_neurons(self):
        dm, _ = planted_distance_matrix(block_sizes=(3, 4), seed=6)
        fp = cluster_neurons(dm, 2)
        with pytest.raises(ValueError):
            align_partition(fp, [(9, 9)] * len(fp.neuron_ids))
