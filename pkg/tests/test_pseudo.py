"""Reference centroids, RSD vectors, consistency, selection, and quality."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from openevent.pseudo import (
    PseudoPair,
    compute_reference_matrix,
    consistency,
    consistency_matrix,
    entropy_bits,
    pair_is_correct,
    pseudo_label,
    quality,
    rsd,
    rsd_matrix,
    select_pairs,
    split_by_entropy,
)

from oracles import naive_select_pairs


class TestReferenceMatrix:
    def test_identical_unit_vectors(self):
        emb = np.array([[1.0, 0], [1.0, 0], [0, 1.0]])
        ref = compute_reference_matrix(emb, [0, 0, 1])
        np.testing.assert_allclose(ref.rows[0], [1, 0], atol=1e-15)

    def test_mean_then_normalize(self):
        emb = np.array([[1.0, 0], [0, 1.0], [5, 5]])
        ref = compute_reference_matrix(emb, [0, 0, 1])
        np.testing.assert_allclose(ref.rows[0], [1 / np.sqrt(2)] * 2, atol=1e-12)

    def test_rows_ordered_by_event_id(self):
        emb = np.array([[0.0, 2], [3.0, 0]])
        ref = compute_reference_matrix(emb, [7, 3])
        assert ref.event_ids == [3, 7]
        np.testing.assert_allclose(ref.rows[0], [1, 0], atol=1e-15)
        np.testing.assert_allclose(ref.rows[1], [0, 1], atol=1e-15)

    def test_random_against_loop_oracle(self):
        rng = np.random.default_rng(2)
        emb = rng.standard_normal((15, 6))
        labels = [0] * 5 + [1] * 5 + [2] * 5
        ref = compute_reference_matrix(emb, labels)
        for row, cls in zip(ref.rows, ref.event_ids):
            members = [emb[i] for i in range(15) if labels[i] == cls]
            mean = sum(members) / len(members)
            expect = mean / math.sqrt(float(mean @ mean))
            np.testing.assert_allclose(row, expect, atol=1e-12)
        assert np.allclose(np.linalg.norm(ref.rows, axis=1), 1.0, atol=1e-9)

    def test_zero_mean_rejected(self):
        emb = np.array([[1.0, 0], [-1.0, 0], [0, 1]])
        with pytest.raises(ValueError, match="zero-norm"):
            compute_reference_matrix(emb, [0, 0, 1])

    def test_single_class_rejected(self):
        with pytest.raises(ValueError, match="at least 2"):
            compute_reference_matrix(np.eye(3), [0, 0, 0])


class TestRsd:
    def orthonormal_ref(self, k=2):
        from openevent.pseudo import ReferenceMatrix

        return ReferenceMatrix(rows=np.eye(k), event_ids=list(range(k)))

    def test_axis_aligned_closed_form(self):
        """Logits (1, 0) give softmax (e/(e+1), 1/(e+1))."""
        out = rsd(np.array([1.0, 0.0]), self.orthonormal_ref())
        e = math.e
        np.testing.assert_allclose(out.p, [e / (e + 1), 1 / (e + 1)], atol=1e-12)

    def test_equidistant_gives_uniform(self):
        ref = self.orthonormal_ref(4)
        h = np.ones(4)
        out = rsd(h, ref)
        np.testing.assert_allclose(out.p, [0.25] * 4, atol=1e-15)
        assert out.entropy_bits == 2.0

    def test_random_against_direct_softmax(self):
        rng = np.random.default_rng(4)
        rows = rng.standard_normal((4, 6))
        rows /= np.linalg.norm(rows, axis=1, keepdims=True)
        from openevent.pseudo import ReferenceMatrix

        ref = ReferenceMatrix(rows=rows, event_ids=[0, 1, 2, 3])
        h = rng.standard_normal(6)
        out = rsd(h, ref)
        hn = h / math.sqrt(float(h @ h))
        logits = [float(hn @ r) for r in rows]
        exps = [math.exp(v) for v in logits]
        expect = [v / sum(exps) for v in exps]
        np.testing.assert_allclose(out.p, expect, atol=1e-12)

    def test_positive_scaling_invariance(self):
        ref = self.orthonormal_ref(3)
        h = np.array([0.3, -0.2, 0.9])
        np.testing.assert_allclose(rsd(h, ref).p, rsd(4.0 * h, ref).p, atol=1e-14)

    def test_sums_to_one(self):
        rng = np.random.default_rng(5)
        ref = self.orthonormal_ref(5)
        for _ in range(10):
            out = rsd(rng.standard_normal(5), ref)
            assert abs(out.p.sum() - 1.0) < 1e-9
            assert np.all(out.p >= 0)

    def test_zero_vector_rejected(self):
        with pytest.raises(ValueError, match="zero-norm"):
            rsd(np.zeros(2), self.orthonormal_ref())

    def test_matrix_matches_row_calls(self):
        rng = np.random.default_rng(6)
        ref = self.orthonormal_ref(3)
        emb = rng.standard_normal((7, 3))
        mat = rsd_matrix(emb, ref)
        for i in range(7):
            np.testing.assert_allclose(mat[i], rsd(emb[i], ref).p, atol=1e-14)

    def test_scale_closed_form(self):
        """Scaled logits (2, 0) give softmax (e^2/(e^2+1), 1/(e^2+1))."""
        out = rsd(np.array([1.0, 0.0]), self.orthonormal_ref(), scale=2.0)
        e2 = math.exp(2.0)
        np.testing.assert_allclose(out.p, [e2 / (e2 + 1), 1 / (e2 + 1)], atol=1e-12)

    def test_scale_default_is_one(self):
        ref = self.orthonormal_ref(3)
        h = np.array([0.4, -0.8, 0.2])
        np.testing.assert_allclose(rsd(h, ref).p, rsd(h, ref, scale=1.0).p, atol=0)

    def test_scale_sharpens_distribution(self):
        """Larger scale concentrates mass on the best-matching reference."""
        ref = self.orthonormal_ref(4)
        rng = np.random.default_rng(7)
        h = rng.standard_normal(4)
        entropies = [rsd(h, ref, scale=s).entropy_bits for s in (0.5, 1.0, 4.0, 16.0)]
        assert all(a > b for a, b in zip(entropies, entropies[1:]))

    def test_scale_preserves_embedding_scaling_invariance(self):
        ref = self.orthonormal_ref(3)
        h = np.array([0.3, -0.2, 0.9])
        np.testing.assert_allclose(
            rsd(h, ref, scale=5.0).p, rsd(4.0 * h, ref, scale=5.0).p, atol=1e-14
        )

    def test_nonpositive_scale_rejected(self):
        for bad in (0.0, -1.0):
            with pytest.raises(ValueError, match="scale"):
                rsd(np.array([1.0, 0.0]), self.orthonormal_ref(), scale=bad)


class TestConsistency:
    def test_identical(self):
        assert consistency([0.3, 0.7], [0.3, 0.7]) == pytest.approx(1.0, abs=1e-12)

    def test_disjoint_one_hots(self):
        assert consistency([1.0, 0.0], [0.0, 1.0]) == 0.0

    def test_reference_value(self):
        c = consistency([0.8, 0.2], [0.2, 0.8])
        assert c == pytest.approx(0.32 / 0.68, abs=1e-12)
        assert c == pytest.approx(0.4706, abs=1e-3)

    @given(
        st.lists(st.floats(0.01, 1), min_size=3, max_size=3),
        st.lists(st.floats(0.01, 1), min_size=3, max_size=3),
    )
    @settings(max_examples=60, deadline=None)
    def test_symmetric_and_unit_range(self, a, b):
        pa = np.array(a) / np.sum(a)
        pb = np.array(b) / np.sum(b)
        c1, c2 = consistency(pa, pb), consistency(pb, pa)
        assert c1 == pytest.approx(c2, abs=1e-12)
        assert -1e-12 <= c1 <= 1.0 + 1e-12


class TestPseudoLabel:
    def test_above_threshold(self):
        assert pseudo_label(0.51) == 1

    def test_exact_tie_is_negative(self):
        assert pseudo_label(0.5) == 0

    def test_below_threshold(self):
        assert pseudo_label(0.49) == 0


class TestQuality:
    def test_positive_keeps_consistency(self):
        assert quality(0.9, 1) == 0.9

    def test_negative_complements(self):
        assert quality(0.1, 0) == pytest.approx(0.9, abs=1e-12)

    def test_boundary(self):
        assert quality(0.5, 0) == 0.5

    @given(st.floats(0, 1))
    @settings(max_examples=60, deadline=None)
    def test_monotone_in_distance_from_threshold(self, c):
        """For rule-consistent labels, quality is 0.5 + |c - 0.5|."""
        label = pseudo_label(c)
        assert quality(c, label) == pytest.approx(0.5 + abs(c - 0.5), abs=1e-12)


class TestEntropy:
    def test_half_half_is_exactly_one_bit(self):
        assert entropy_bits(np.array([0.5, 0.5, 0.0, 0.0])) == 1.0

    def test_one_hot_zero(self):
        assert entropy_bits(np.array([0.0, 1.0, 0.0])) == 0.0

    def test_uniform_log2k(self):
        assert entropy_bits(np.full(4, 0.25)) == 2.0

    @given(st.lists(st.floats(0.001, 1), min_size=2, max_size=6))
    @settings(max_examples=80, deadline=None)
    def test_range(self, raw):
        p = np.array(raw) / np.sum(raw)
        h = entropy_bits(p)
        assert -1e-12 <= h <= math.log2(len(p)) + 1e-9


class TestSplitByEntropy:
    def test_even_split(self):
        high = split_by_entropy(np.array([0.1, 0.9, 0.5, 0.7]))
        assert list(high) == [False, True, False, True]

    def test_odd_median_goes_low(self):
        high = split_by_entropy(np.array([0.1, 0.2, 0.3, 0.4, 0.5]))
        assert high.sum() == 2
        assert list(high) == [False, False, False, True, True]

    def test_ties_break_by_index(self):
        high = split_by_entropy(np.array([1.0, 1.0, 1.0, 1.0]))
        assert list(high) == [False, False, True, True]


def clustered_rsd_rows():
    """Two tight RSD clusters: cross-cluster cosine far below 0.5."""
    a = np.array([[0.95, 0.05], [0.9, 0.1], [0.85, 0.15]])
    b = np.array([[0.05, 0.95], [0.1, 0.9], [0.15, 0.85]])
    return np.vstack([a, b])


class TestSelectPairs:
    def test_all_positive_block_exhausts_candidates(self):
        rows = np.array([[0.9, 0.1], [0.85, 0.15], [0.8, 0.2], [0.95, 0.05]])
        pairs = select_pairs(rows, seed=0)
        assert len(pairs) == 6  # every unordered pair, all positive
        assert all(p.label == 1 for p in pairs)

    def test_two_cluster_structure(self):
        rows = clustered_rsd_rows()
        pairs = select_pairs(rows, quotas=((5, 5), (5, 5)), seed=1)
        for p in pairs:
            same = (p.i < 3) == (p.j < 3)
            assert p.label == (1 if same else 0)
            assert p.label == pseudo_label(p.consistency)
            assert p.quality == pytest.approx(
                quality(p.consistency, p.label), abs=1e-12
            )

    def test_no_duplicate_unordered_pairs(self):
        rng = np.random.default_rng(7)
        rows = rng.dirichlet(np.ones(3), size=30)
        pairs = select_pairs(rows, seed=2)
        seen = {frozenset((p.i, p.j)) for p in pairs}
        assert len(seen) == len(pairs)

    def test_quota_bound(self):
        rng = np.random.default_rng(8)
        rows = rng.dirichlet(np.ones(4), size=25)
        quotas = ((3, 2), (1, 1))
        pairs = select_pairs(rows, quotas=quotas, seed=3)
        assert len(pairs) <= 25 * 5
        # per-anchor sampled counts respect the anchor's quota
        from collections import Counter

        anchored = Counter(p.i for p in pairs)
        ent = np.array(
            [entropy_bits(rows[i]) for i in range(25)]
        )
        high = split_by_entropy(ent)
        for i, count in anchored.items():
            assert count <= (5 if high[i] else 2)

    def test_determinism(self):
        rng = np.random.default_rng(9)
        rows = rng.dirichlet(np.ones(3), size=40)
        p1 = select_pairs(rows, seed=11)
        p2 = select_pairs(rows, seed=11)
        assert p1 == p2
        p3 = select_pairs(rows, seed=12)
        assert p1 != p3

    def test_matches_naive_selector(self):
        """Vectorized selection equals the loop-and-set reference, same seed."""
        rng = np.random.default_rng(10)
        rows = rng.dirichlet(np.ones(3) * 2, size=50)
        got = [
            (p.i, p.j, p.label, round(p.quality, 9))
            for p in select_pairs(rows, seed=21)
        ]
        expect = [
            (i, j, label, round(q, 9))
            for i, j, label, q in naive_select_pairs(rows, ((20, 20), (10, 10)), 21)
        ]
        assert got == expect

    def test_single_message_rejected(self):
        with pytest.raises(ValueError):
            select_pairs(np.array([[1.0, 0.0]]), seed=0)


class TestPairCorrectness:
    def test_agreement_cases(self):
        pos = PseudoPair(i=0, j=1, consistency=0.9, label=1, quality=0.9)
        neg = PseudoPair(i=0, j=2, consistency=0.2, label=0, quality=0.8)
        labels = [5, 5, 6]
        assert pair_is_correct(pos, labels)
        assert pair_is_correct(neg, labels)
        assert not pair_is_correct(pos, [5, 6, 6])
        assert not pair_is_correct(neg, [5, 5, 5])
