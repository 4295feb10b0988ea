"""Modulating factors, the calibrated loss, and leave-one-out priors."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from knn_calibrate import (
    DataError,
    ModulatingFactor,
    build_store,
    calibrated_loss,
    factor_value,
    load_priors,
    precompute_priors,
    save_priors,
)
from knn_calibrate.store import EmbeddingStore, RawEmbeddings

FOCAL2 = ModulatingFactor(kind="focal", gamma=2.0)
NLL1 = ModulatingFactor(kind="nll", alpha=1.0)


class TestFactorValue:
    def test_focal_at_endpoints_and_half(self):
        assert factor_value(FOCAL2, 1.0) == 0.0
        assert factor_value(FOCAL2, 0.5) == 0.25
        assert factor_value(FOCAL2, 0.0) == 1.0

    def test_nll_clamps_at_zero(self):
        assert factor_value(NLL1, 0.0) == pytest.approx(-math.log(1e-8), abs=1e-9)

    def test_focal_gamma_zero_is_constant_one(self):
        factor = ModulatingFactor(kind="focal", gamma=0.0)
        for p in (0.0, 0.3, 1.0):
            assert factor_value(factor, p) == 1.0

    def test_p_out_of_range(self):
        with pytest.raises(DataError, match=r"\[0, 1\]"):
            factor_value(FOCAL2, 1.5)
        with pytest.raises(DataError):
            factor_value(NLL1, -0.1)

    def test_unknown_kind_rejected(self):
        with pytest.raises(DataError, match="kind"):
            ModulatingFactor(kind="hinge")

    def test_negative_parameters_rejected(self):
        with pytest.raises(DataError):
            ModulatingFactor(kind="focal", gamma=-1.0)
        with pytest.raises(DataError):
            ModulatingFactor(kind="nll", alpha=-0.5)


class TestCalibratedLoss:
    def test_knn_correct_leaves_ce_unchanged(self):
        assert calibrated_loss(0.37, 1.0, FOCAL2) == 0.37
        assert calibrated_loss(0.37, 1.0, NLL1) == 0.37

    def test_maximal_focal_weight_doubles(self):
        assert calibrated_loss(1.0, 0.0, FOCAL2) == 2.0

    def test_hand_arithmetic(self):
        assert calibrated_loss(0.8, 0.5, FOCAL2) == pytest.approx(1.0, abs=1e-12)

    def test_negative_ce_rejected(self):
        with pytest.raises(DataError, match="ce_loss"):
            calibrated_loss(-0.1, 0.5, FOCAL2)

    @given(
        ce=st.floats(0.0, 10.0),
        p1=st.floats(0.0, 1.0),
        p2=st.floats(0.0, 1.0),
        factor=st.sampled_from([FOCAL2, NLL1, ModulatingFactor("focal", gamma=0.5)]),
    )
    @settings(max_examples=200, deadline=None)
    def test_nonincreasing_in_p(self, ce, p1, p2, factor):
        lo, hi = min(p1, p2), max(p1, p2)
        assert calibrated_loss(ce, lo, factor) >= calibrated_loss(ce, hi, factor)

    @given(ce=st.floats(0.0, 10.0), p=st.floats(0.0, 1.0), gamma=st.floats(0.0, 5.0))
    @settings(max_examples=200, deadline=None)
    def test_focal_bounds(self, ce, p, gamma):
        loss = calibrated_loss(ce, p, ModulatingFactor("focal", gamma=gamma))
        assert ce - 1e-12 <= loss <= 2.0 * ce + 1e-12


def store_from(vectors, labels, classes):
    raw = RawEmbeddings(np.asarray(vectors, dtype=np.float32), np.asarray(labels), classes)
    return build_store(raw)


def oracle_prior(store, i, k, tau):
    """Full sort excluding self, then the softmax ratio evaluated by hand."""
    q = store.vectors[i].astype(np.float64)
    scored = sorted(
        (float(np.linalg.norm(q - store.vectors[j].astype(np.float64))), j)
        for j in range(store.n)
        if j != i
    )[: min(k, store.n - 1)]
    weights = [math.exp(-d / tau) for d, _ in scored]
    total = sum(weights)
    same = sum(w for w, (_, j) in zip(weights, scored) if store.labels[j] == store.labels[i])
    return same / total


class TestPrecomputePriors:
    def test_identical_vectors_same_label(self):
        store = store_from([[1.0, 0.0], [1.0, 0.0]], [1, 1], 2)
        table = precompute_priors(store, k=1, tau=1.0)
        np.testing.assert_array_equal(table.priors, [1.0, 1.0])

    def test_identical_vectors_different_labels(self):
        store = store_from([[1.0, 0.0], [1.0, 0.0]], [0, 1], 2)
        table = precompute_priors(store, k=1, tau=1.0)
        np.testing.assert_array_equal(table.priors, [0.0, 0.0])

    def test_matches_oracle_on_random_store(self):
        rng = np.random.default_rng(17)
        store = build_store(
            RawEmbeddings(
                rng.normal(size=(50, 6)).astype(np.float32),
                rng.integers(0, 3, size=50),
                3,
            )
        )
        table = precompute_priors(store, k=8, tau=0.5)
        for i in range(store.n):
            assert table.priors[i] == pytest.approx(
                oracle_prior(store, i, 8, 0.5), abs=1e-12
            )

    def test_single_row_store_rejected(self):
        store = store_from([[1.0, 0.0]], [0], 2)
        with pytest.raises(DataError, match="at least 2"):
            precompute_priors(store, k=1, tau=1.0)

    def test_row_never_its_own_neighbor(self):
        # a duplicated vector with a unique label must not get prior 1
        store = store_from(
            [[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]], [2, 0, 0], 3
        )
        table = precompute_priors(store, k=2, tau=1.0)
        assert table.priors[0] == 0.0

    def test_priors_tsv_round_trip(self, tmp_path):
        store = store_from([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]], [0, 1, 0], 2)
        table = precompute_priors(store, k=2, tau=0.3, metric="cosine")
        path = tmp_path / "priors.tsv"
        save_priors(table, path)
        loaded = load_priors(path)
        np.testing.assert_array_equal(loaded.priors, table.priors)
        assert (loaded.k, loaded.tau, loaded.metric) == (2, 0.3, "cosine")
