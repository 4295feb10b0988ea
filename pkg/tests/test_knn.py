"""Retrieval against a brute-force oracle and aggregation against hand values."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from knn_calibrate import (
    DataError,
    EmbeddingStore,
    aggregate,
    build_store,
    distance,
    knn_predict,
    retrieve,
)
from knn_calibrate.knn import NeighborSet
from knn_calibrate.store import RawEmbeddings


def random_store(n, dim, classes=3, seed=0):
    rng = np.random.default_rng(seed)
    raw = RawEmbeddings(
        rng.normal(size=(n, dim)).astype(np.float32),
        rng.integers(0, classes, size=n),
        classes,
    )
    return build_store(raw)


def brute_force_retrieve(store, q, k, metric, exclude=None):
    """Independent oracle: score every row one at a time, sort by (dist, index)."""
    scored = []
    for i in range(store.n):
        if i == exclude:
            continue
        row = store.vectors[i].astype(np.float64)
        if metric == "euclidean":
            d = float(np.sqrt(np.square(q - row).sum()))
        else:
            d = max(1.0 - float((q * row).sum()), 0.0)
        scored.append((d, i))
    scored.sort()
    return scored[: min(k, len(scored))]


def unit(v):
    v = np.asarray(v, dtype=np.float64)
    return v / np.linalg.norm(v)


class TestDistance:
    def test_identical_vectors(self):
        q = unit([1.0, 2.0, -1.0])
        assert distance(q, q, "euclidean") == 0.0
        assert distance(q, q, "cosine") == pytest.approx(0.0, abs=1e-12)

    def test_antipodal(self):
        q = unit([0.5, -0.5, 0.7])
        assert distance(q, -q, "euclidean") == pytest.approx(2.0, abs=1e-12)
        assert distance(q, -q, "cosine") == pytest.approx(2.0, abs=1e-12)

    def test_euclidean_cosine_identity(self):
        # on unit vectors: d_euc = sqrt(2 * d_cos)
        rng = np.random.default_rng(42)
        for _ in range(200):
            q = unit(rng.normal(size=6))
            x = unit(rng.normal(size=6))
            d_euc = distance(q, x, "euclidean")
            d_cos = distance(q, x, "cosine")
            assert d_euc == pytest.approx(math.sqrt(2.0 * d_cos), abs=1e-9)

    def test_dimension_mismatch(self):
        with pytest.raises(DataError, match="dimension"):
            distance(unit([1.0, 0.0]), unit([1.0, 0.0, 0.0]))

    def test_rejects_non_unit(self):
        with pytest.raises(DataError, match="unit-norm"):
            distance(np.array([3.0, 4.0]), unit([1.0, 0.0]))


class TestRetrieve:
    def test_single_row_store(self):
        store = random_store(1, 4, seed=1)
        q = unit(np.ones(4))
        result = retrieve(store, q, 1)
        assert list(result.indices) == [0]
        assert result.labels[0] == store.labels[0]

    def test_exclude_only_row_gives_empty(self):
        store = random_store(1, 4, seed=1)
        with pytest.warns(UserWarning, match="clamping"):
            result = retrieve(store, unit(np.ones(4)), 1, exclude=0)
        assert len(result) == 0

    def test_exclude_out_of_range(self):
        store = random_store(3, 4)
        with pytest.raises(DataError, match="exclude"):
            retrieve(store, unit(np.ones(4)), 1, exclude=3)

    @pytest.mark.parametrize("metric", ["euclidean", "cosine"])
    def test_matches_brute_force_oracle(self, metric):
        store = random_store(200, 8, seed=9)
        rng = np.random.default_rng(10)
        for _ in range(10):
            q = unit(rng.normal(size=8))
            got = retrieve(store, q, 16, metric=metric)
            expected = brute_force_retrieve(store, q, 16, metric)
            assert [(d, i) for d, i in zip(got.distances, got.indices)] == expected

    def test_ties_break_by_ascending_index(self):
        vectors = np.array(
            [[1.0, 0.0], [0.0, 1.0], [1.0, 0.0], [0.0, 1.0]], dtype=np.float32
        )
        store = EmbeddingStore(vectors, np.array([0, 1, 0, 1]), 2)
        result = retrieve(store, unit([1.0, 1.0]), 4)
        assert list(result.indices) == [0, 1, 2, 3]

    def test_k_clamps_to_store_size(self):
        store = random_store(5, 3, seed=2)
        with pytest.warns(UserWarning, match="clamping"):
            result = retrieve(store, unit(np.ones(3)), 16)
        assert len(result) == 5

    def test_metric_ranking_equivalence(self):
        # monotone relation d_euc = sqrt(2 d_cos) => same top-k index sets
        store = random_store(120, 8, seed=4)
        rng = np.random.default_rng(5)
        for _ in range(20):
            q = unit(rng.normal(size=8))
            euc = set(retrieve(store, q, 10, metric="euclidean").indices)
            cos = set(retrieve(store, q, 10, metric="cosine").indices)
            assert euc == cos


def neighbor_set(distances, labels, metric="euclidean"):
    distances = np.asarray(distances, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    order = np.argsort(distances, kind="stable")
    return NeighborSet(
        indices=np.arange(len(labels), dtype=np.int64)[order],
        distances=distances[order],
        labels=labels[order],
        k=len(labels),
        metric=metric,
    )


class TestAggregate:
    def test_single_neighbor_one_hot(self):
        probs = aggregate(neighbor_set([0.4], [2]), tau=0.7, class_count=4)
        np.testing.assert_array_equal(probs, [0.0, 0.0, 1.0, 0.0])

    def test_equal_distances_symmetric(self):
        probs = aggregate(neighbor_set([0.3, 0.3], [0, 1]), tau=1.0, class_count=2)
        np.testing.assert_allclose(probs, [0.5, 0.5], atol=1e-12)

    def test_worked_example(self):
        # d = (0, 1), tau = 1: p0 = 1 / (1 + e^-1)
        probs = aggregate(neighbor_set([0.0, 1.0], [0, 1]), tau=1.0, class_count=2)
        assert probs[0] == pytest.approx(0.7310585786300049, abs=1e-9)
        assert probs[1] == pytest.approx(0.2689414213699951, abs=1e-9)

    def test_empty_neighbors_error(self):
        with pytest.raises(DataError, match="empty"):
            aggregate(neighbor_set([], []), tau=1.0, class_count=2)

    def test_nonpositive_tau_error(self):
        with pytest.raises(DataError, match="tau"):
            aggregate(neighbor_set([0.1], [0]), tau=0.0, class_count=2)

    def test_absent_class_gets_exact_zero(self):
        probs = aggregate(neighbor_set([0.1, 0.2], [0, 0]), tau=1.0, class_count=3)
        assert probs[1] == 0.0 and probs[2] == 0.0

    def test_tiny_tau_does_not_underflow(self):
        probs = aggregate(
            neighbor_set([0.5, 0.6, 1.4], [1, 0, 0]), tau=0.01, class_count=2
        )
        assert np.isfinite(probs).all()
        assert probs[1] > 0.99

    @given(
        distances=st.lists(st.floats(0.0, 2.0), min_size=1, max_size=16),
        tau=st.sampled_from([0.01, 0.1, 1.0, 10.0]),
        data=st.data(),
    )
    @settings(max_examples=100, deadline=None)
    def test_simplex_property(self, distances, tau, data):
        labels = data.draw(
            st.lists(
                st.integers(0, 3), min_size=len(distances), max_size=len(distances)
            )
        )
        probs = aggregate(neighbor_set(distances, labels), tau, class_count=4)
        assert (probs >= 0).all()
        assert probs.sum() == pytest.approx(1.0, abs=1e-6)

    def test_entropy_nondecreasing_in_tau_one_neighbor_per_class(self):
        # with one neighbor per class the aggregate is a plain softmax of
        # the negated distances, whose entropy grows with temperature;
        # classes holding several neighbors do not obey this in general
        rng = np.random.default_rng(3)
        for _ in range(20):
            distances = rng.uniform(0, 2, size=5)
            neighbors = neighbor_set(distances, np.arange(5))
            entropies = []
            for tau in (0.01, 0.1, 1.0, 10.0):
                probs = aggregate(neighbors, tau, class_count=5)
                nonzero = probs[probs > 0]
                entropies.append(-(nonzero * np.log(nonzero)).sum())
            assert all(a <= b + 1e-12 for a, b in zip(entropies, entropies[1:]))


class TestKnnPredict:
    def test_single_class_store_one_hot(self):
        rng = np.random.default_rng(8)
        raw = RawEmbeddings(
            rng.normal(size=(20, 5)).astype(np.float32), np.ones(20, dtype=np.int64), 3
        )
        store = build_store(raw)
        probs = knn_predict(store, unit(rng.normal(size=5)), k=7, tau=0.5)
        np.testing.assert_array_equal(probs, [0.0, 1.0, 0.0])

    def test_tau_to_zero_concentrates_on_closest(self):
        store = random_store(50, 6, seed=12)
        q = unit(np.random.default_rng(13).normal(size=6))
        closest = retrieve(store, q, 1).labels[0]
        probs = knn_predict(store, q, k=16, tau=1e-6)
        assert probs[closest] >= 1.0 - 1e-6

    def test_large_tau_approaches_label_histogram(self):
        store = random_store(100, 6, classes=3, seed=20)
        q = unit(np.random.default_rng(21).normal(size=6))
        neighbors = retrieve(store, q, 16)
        histogram = np.bincount(neighbors.labels, minlength=3) / 16
        sharp = knn_predict(store, q, k=16, tau=0.01)
        smooth = knn_predict(store, q, k=16, tau=10.0)
        assert np.abs(smooth - histogram).sum() <= np.abs(sharp - histogram).sum()

    def test_permutation_invariance(self):
        store = random_store(60, 5, seed=30)
        q = unit(np.random.default_rng(31).normal(size=5))
        baseline = knn_predict(store, q, k=9, tau=0.7)
        perm = np.random.default_rng(32).permutation(store.n)
        shuffled = EmbeddingStore(
            store.vectors[perm], store.labels[perm], store.class_count
        )
        np.testing.assert_allclose(
            knn_predict(shuffled, q, k=9, tau=0.7), baseline, atol=1e-9
        )
