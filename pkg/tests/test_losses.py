import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import cross_entropy_formula, triplet_exhaustive
from stenvan.errors import ContractError
from stenvan.losses import LabeledBatch, batch_hard_triplet, cross_entropy, pk_batch_compose
from stenvan.sampling import Track


class TestCrossEntropy:
    def test_uniform_two(self):
        assert cross_entropy(np.zeros((1, 2)), [0]) == pytest.approx(0.693147, abs=1e-6)

    @pytest.mark.parametrize("k", [2, 3, 5, 625, 1000])
    def test_uniform_is_log_k(self, k):
        assert cross_entropy(np.full((4, k), 3.7), [0, 1, k - 1, 1]) == math.log(k)

    def test_saturated(self):
        logits = np.zeros((2, 3))
        logits[0, 1] = logits[1, 2] = 1000.0
        assert cross_entropy(logits, [1, 2]) == pytest.approx(0.0, abs=1e-300)

    def test_formula(self):
        rng = np.random.default_rng(0)
        logits = rng.normal(size=(4, 5))
        labels = [0, 4, 2, 2]
        assert abs(cross_entropy(logits, labels) - cross_entropy_formula(logits, labels)) < 1e-12

    def test_out_of_range(self):
        with pytest.raises(ContractError):
            cross_entropy(np.zeros((2, 3)), [0, 3])

    @given(st.integers(1, 6), st.integers(1, 8), st.integers(0, 2**32 - 1))
    @settings(max_examples=50, deadline=None)
    def test_nonnegative(self, b, k, seed):
        rng = np.random.default_rng(seed)
        assert cross_entropy(rng.normal(scale=10, size=(b, k)), rng.integers(0, k, size=b)) >= 0


class TestTriplet:
    def test_identical_embeddings(self):
        batch = LabeledBatch(np.ones((4, 3)), [0, 0, 1, 1])
        assert abs(batch_hard_triplet(batch) - math.log(2)) < 1e-12

    def test_separated_pairs(self):
        batch = LabeledBatch(np.array([[0.0], [0.0], [10.0], [10.0]]), [0, 0, 1, 1])
        assert batch_hard_triplet(batch) == pytest.approx(math.log1p(math.exp(-10.0)), rel=1e-12)
        assert batch_hard_triplet(batch) == pytest.approx(4.54e-5, rel=1e-3)

    def test_against_exhaustive(self):
        rng = np.random.default_rng(1)
        emb = rng.normal(size=(8, 4))
        labels = [0, 0, 1, 1, 2, 2, 3, 3]
        assert abs(batch_hard_triplet(LabeledBatch(emb, labels)) - triplet_exhaustive(emb.tolist(), labels)) < 1e-10

    def test_missing_positive_names_identity(self):
        with pytest.raises(ContractError, match="identity 7"):
            batch_hard_triplet(LabeledBatch(np.zeros((3, 2)), [0, 0, 7]))

    def test_missing_negative(self):
        with pytest.raises(ContractError, match="negative"):
            batch_hard_triplet(LabeledBatch(np.zeros((3, 2)), [1, 1, 1]))

    @given(st.integers(2, 4), st.integers(2, 3), st.integers(1, 5), st.integers(0, 2**32 - 1))
    @settings(max_examples=100, deadline=None)
    def test_translation_invariant_and_oracle(self, p, k, d, seed):
        rng = np.random.default_rng(seed)
        emb = rng.normal(size=(p * k, d))
        labels = np.repeat(np.arange(p), k)
        shift = rng.normal(scale=5, size=d)
        base = batch_hard_triplet(LabeledBatch(emb, labels))
        assert abs(base - triplet_exhaustive(emb.tolist(), labels.tolist())) < 1e-10
        assert abs(batch_hard_triplet(LabeledBatch(emb + shift, labels)) - base) < 1e-10


class TestPKCompose:
    def catalog(self, counts):
        return [Track(length=10, id=pid) for pid, n in counts for _ in range(n)]

    def test_exhaustive(self):
        cat = self.catalog([(0, 2), (1, 2)])
        idx = pk_batch_compose(cat, 2, 2, seed=0)
        assert sorted(idx) == [0, 1, 2, 3]
        assert Counter(cat[i].id for i in idx) == {0: 2, 1: 2}

    def test_replacement_for_short_identity(self):
        cat = self.catalog([(5, 1)])
        assert pk_batch_compose(cat, 1, 4, seed=0) == [0, 0, 0, 0]

    def test_grouped_and_sized(self):
        cat = self.catalog([(i, 1 + i % 5) for i in range(20)])
        idx = pk_batch_compose(cat, 8, 4, seed=3)
        assert len(idx) == 32
        ids = [cat[i].id for i in idx]
        groups = [ids[g * 4 : (g + 1) * 4] for g in range(8)]
        assert all(len(set(g)) == 1 for g in groups)
        assert len({g[0] for g in groups}) == 8

    def test_no_replacement_when_enough(self):
        cat = self.catalog([(0, 6), (1, 6)])
        idx = pk_batch_compose(cat, 2, 4, seed=9)
        assert len(set(idx)) == 8

    def test_deterministic(self):
        cat = self.catalog([(i, 3) for i in range(10)])
        assert pk_batch_compose(cat, 4, 4, seed=2) == pk_batch_compose(cat, 4, 4, seed=2)

    def test_too_few_identities(self):
        with pytest.raises(ContractError):
            pk_batch_compose(self.catalog([(0, 3)]), 2, 2)

    def test_composed_batch_is_triplet_valid(self):
        cat = self.catalog([(i, 2) for i in range(12)])
        idx = pk_batch_compose(cat, 8, 4, seed=1)
        emb = np.random.default_rng(0).normal(size=(len(idx), 3))
        assert batch_hard_triplet(LabeledBatch(emb, [cat[i].id for i in idx])) > 0
