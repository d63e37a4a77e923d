"""Tests for the verification harness itself."""

import numpy as np
import pytest

from openevent.encoder import init_params
from openevent.graph import build_graph
from openevent.losses import PairBatch, pretrain_loss
from openevent.numeric_verify import (
    GradCheckReport,
    brute_force_metric,
    encoder_loss_gradcheck,
    finite_diff_check,
    kink_proximity,
    quadratic_self_test,
)
from openevent.seeds import rng_for

from conftest import mk_record


class TestChecker:
    def test_quadratic_self_test_is_exact(self):
        report = quadratic_self_test()
        assert report.max_rel_error < 1e-8
        assert report.passed()

    def test_wrong_gradient_is_caught(self):
        params = init_params(3, d_sem=2, d_h=2, heads=2)
        analytic = params.copy()
        for name in analytic.names():
            analytic.tensors[name] = 2.0 * params.tensors[name]
        # Sabotage one coordinate; the checker must localize it.
        analytic.tensors["W1.0"][0, 0] += 1.0
        report = finite_diff_check(
            lambda p: float(sum((t**2).sum() for t in p.tensors.values())),
            params,
            analytic,
        )
        assert not report.passed()
        assert report.worst_coordinate == "W1.0[0]"

    def test_report_threshold(self):
        report = GradCheckReport(max_rel_error=5e-4, worst_coordinate="x", eps=1e-4)
        assert report.passed(tol=1e-3)
        assert not report.passed(tol=1e-4)


class TestKinkProximity:
    def test_flags_value_near_zero(self):
        assert kink_proximity([np.array([0.7, -1e-5, 2.0])])

    def test_clean_values_pass(self):
        assert not kink_proximity([np.array([0.7, -0.4]), np.array([1.2])])

    def test_empty_arrays_ignored(self):
        assert not kink_proximity([np.array([])])

    def test_threshold_respected(self):
        assert kink_proximity([np.array([0.05])], threshold=0.1)
        assert not kink_proximity([np.array([0.05])], threshold=0.01)


class TestEncoderLossGradcheck:
    def _trial(self, seed):
        rng = rng_for(seed, "gradcheck-trial")
        records = []
        for i in range(8):
            records.append(
                mk_record(
                    i,
                    hours=float(i),
                    tokens=("t",),
                    author=f"a{i}",  # distinct: a shared author would wire a
                    hashtags=(f"#g{i % 3}",),  # complete graph, which collapses
                    entities=(f"x{i // 2}",),  # attention to identical embeddings;
                    event_id=i % 2,  # entities break neighborhood symmetry
                )
            )
        feats = rng.standard_normal((8, 5))
        graph = build_graph(records, feats)
        params = init_params(seed, d_sem=3, d_h=4, heads=2)
        labels = np.array([r.event_id for r in records])
        pairs = PairBatch(pos=[(0, 2), (1, 3)], neg=[(0, 1), (2, 5)])

        def emb_loss(emb):
            return pretrain_loss(pairs, emb, labels, a=1.0)

        def corner_values(emb):
            idx = np.array(pairs.pos + pairs.neg)
            return [np.linalg.norm(emb[idx[:, 0]] - emb[idx[:, 1]], axis=1)]

        return graph, params, emb_loss, corner_values

    def test_composition_gradient_matches(self):
        for seed in (0, 1, 2):
            graph, params, emb_loss, corners = self._trial(seed)
            report = encoder_loss_gradcheck(
                graph, params, emb_loss, extra_kink_values=corners
            )
            if report.kink_flagged:
                continue  # re-sampled trials are not graded
            assert report.passed(), (seed, report)

    def test_at_least_one_trial_graded(self):
        graded = 0
        for seed in range(6):
            graph, params, emb_loss, corners = self._trial(seed)
            report = encoder_loss_gradcheck(
                graph, params, emb_loss, extra_kink_values=corners
            )
            graded += not report.kink_flagged
        assert graded >= 1


class TestBruteForceMetricGuards:
    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            brute_force_metric([0, 1], [0])

    def test_size_limit(self):
        with pytest.raises(ValueError):
            brute_force_metric([0] * 21, [0] * 21)

    def test_empty(self):
        with pytest.raises(ValueError):
            brute_force_metric([], [])

    def test_perfect_small_case(self):
        nmi_val, ami_val = brute_force_metric([0, 0, 1, 1], [1, 1, 0, 0])
        assert abs(nmi_val - 1.0) < 1e-12
        assert abs(ami_val - 1.0) < 1e-12
