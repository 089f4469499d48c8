"""Tests for the likelihood-ratio attack engine."""

import numpy as np
import pytest
from pydantic import ValidationError

from seqmia.attack import (
    FALLBACK_DEGENERATE_SPLIT,
    FALLBACK_UNINFORMATIVE,
    all_variants,
    lira_score,
    run_attack,
    scores_for,
    shadow_subset,
    variant_label,
)
from seqmia.config import AttackConfig, Estimator, Pooling, ReductionKind, ReductionSpec
from seqmia.dataset import loo_indices, split_leave_one_out
from seqmia.errors import ConfigConflictError, DatasetValidationError, DimensionError
from seqmia.estimators import fit_class_models, gaussian_from_cov
from seqmia.evaluation import auc, roc
from seqmia.models import MembershipMask, ScoreTensor


def unit_gaussian(mean):
    return gaussian_from_cov(np.atleast_1d(np.asarray(mean, dtype=float)), np.eye(np.size(mean)))


class TestLiraScore:
    def test_identical_densities(self, rng):
        spec = unit_gaussian([0.3, -1.0])
        assert np.all(lira_score(rng.standard_normal((5, 2)), spec, spec) == 0.0)

    def test_equidistant_point(self):
        assert lira_score(np.array([0.5]), unit_gaussian(1.0), unit_gaussian(0.0)) == pytest.approx(0.0, abs=1e-15)

    def test_at_in_mean(self):
        assert lira_score(np.array([1.0]), unit_gaussian(1.0), unit_gaussian(0.0)) == pytest.approx(0.5, rel=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            lira_score(np.zeros(2), unit_gaussian([0.0, 0.0]), unit_gaussian(0.0))

    def test_shared_full_score_is_affine(self, rng):
        x_in = rng.standard_normal((30, 3)) + 1.0
        x_out = rng.standard_normal((30, 3))
        spec_in, spec_out = fit_class_models(x_in, x_out, Estimator.FULL, Pooling.SHARED)
        points = rng.standard_normal((50, 3))
        scores = lira_score(points, spec_in, spec_out)
        design = np.column_stack([points, np.ones(50)])
        coef, *_ = np.linalg.lstsq(design, scores, rcond=None)
        assert np.allclose(design @ coef, scores, atol=1e-9)


class TestConfig:
    def test_univariate_rejects_reduction(self):
        with pytest.raises(ValidationError, match="univariate"):
            AttackConfig(estimator=Estimator.UNIVARIATE, reduction=ReductionSpec(kind=ReductionKind.MIN_K, param=2))

    def test_shadow_count_bounds(self):
        with pytest.raises(ValidationError):
            AttackConfig(max_shadow_models=1)
        with pytest.raises(ConfigConflictError):
            AttackConfig(max_shadow_models=8).check_dims(8, 4)
        AttackConfig(max_shadow_models=7).check_dims(8, 4)

    def test_labels(self):
        assert variant_label(AttackConfig()) == "oas-shared"
        config = AttackConfig(
            estimator=Estimator.INDEPENDENT,
            pooling=Pooling.CLASS_WISE,
            reduction=ReductionSpec(kind=ReductionKind.MIN_K, param=2),
        )
        assert variant_label(config) == "independent-classwise+min2"

    def test_all_variants(self):
        labels = [variant_label(c) for c in all_variants()]
        assert len(labels) == 8 == len(set(labels))
        assert "univariate-classwise" in labels
        reduced = all_variants(ReductionSpec(kind=ReductionKind.GROUP, param=2))
        assert len(reduced) == 6
        assert all(c.estimator != Estimator.UNIVARIATE for c in reduced)


class TestShadowSubset:
    def test_unrestricted(self):
        assert shadow_subset(6, 2, None, 0).tolist() == [0, 1, 3, 4, 5]

    def test_all_others_is_leave_one_out(self):
        for target in range(6):
            assert np.array_equal(shadow_subset(6, target, 5, seed=3), loo_indices(6, target))

    def test_subset_is_sorted_and_excludes_target(self):
        chosen = shadow_subset(20, 4, 7, seed=11)
        assert len(chosen) == 7
        assert 4 not in chosen
        assert np.all(np.diff(chosen) > 0)
        assert np.array_equal(chosen, shadow_subset(20, 4, 7, seed=11))

    def test_same_permutation_for_every_target(self):
        perm = np.random.default_rng(5).permutation(10)
        for target in range(10):
            expected = np.sort(perm[perm != target][:4])
            assert np.array_equal(shadow_subset(10, target, 4, seed=5), expected)


class TestRunAttack:
    def test_matches_manual_fit(self, small_synthetic):
        _, tensor, mask, _ = small_synthetic
        config = AttackConfig(estimator=Estimator.OAS, pooling=Pooling.SHARED)
        result = run_attack(tensor, mask, config)
        assert result.scores.shape == (8, 12)
        assert not result.fallback.any()
        assert np.array_equal(result.labels, mask.mask)

        split = split_leave_one_out(tensor, mask, 2)
        rows = split.shadow_scores[:, 5, :]
        member = split.shadow_mask[:, 5]
        spec_in, spec_out = fit_class_models(rows[member], rows[~member], config.estimator, config.pooling)
        expected = lira_score(split.target_scores[5], spec_in, spec_out)
        assert result.scores[2, 5] == pytest.approx(expected, rel=1e-12)

    def test_univariate_uses_sequence_mean(self, small_synthetic):
        _, tensor, mask, _ = small_synthetic
        result = run_attack(tensor, mask, AttackConfig(estimator=Estimator.UNIVARIATE, pooling=Pooling.CLASS_WISE))
        means = tensor.data.mean(axis=-1)
        shadows = loo_indices(tensor.M, 0)
        member = mask.mask[shadows, 3]
        spec_in, spec_out = fit_class_models(
            means[shadows, 3][member][:, None], means[shadows, 3][~member][:, None], "univariate", "classwise"
        )
        assert result.scores[0, 3] == pytest.approx(lira_score(means[0, 3:4], spec_in, spec_out), rel=1e-10)

    def test_thread_count_does_not_change_scores(self, small_synthetic):
        _, tensor, mask, _ = small_synthetic
        config = AttackConfig(estimator=Estimator.FULL, pooling=Pooling.CLASS_WISE)
        serial = run_attack(tensor, mask, config, threads=1)
        parallel = run_attack(tensor, mask, config, threads=4)
        assert np.array_equal(serial.scores, parallel.scores)
        assert serial.per_canary_fallbacks == parallel.per_canary_fallbacks

    def test_all_shadow_models_reproduce_unrestricted(self, small_synthetic):
        _, tensor, mask, _ = small_synthetic
        full = run_attack(tensor, mask, AttackConfig())
        capped = run_attack(tensor, mask, AttackConfig(max_shadow_models=tensor.M - 1, seed=9))
        assert np.array_equal(full.scores, capped.scores)

    def test_scale_invariance(self, small_synthetic):
        _, tensor, mask, _ = small_synthetic
        config = AttackConfig(estimator=Estimator.OAS, pooling=Pooling.SHARED)
        base = run_attack(tensor, mask, config)
        scaled = run_attack(ScoreTensor(tensor.data * 3.0), mask, config)
        assert np.allclose(scaled.scores, base.scores, rtol=1e-9, atol=1e-9)

    def test_degenerate_canary_falls_back(self, rng):
        tensor = ScoreTensor(rng.standard_normal((5, 2, 2)))
        mask = np.zeros((5, 2), dtype=bool)
        mask[0, 0] = True
        mask[:2, 1] = True
        result = run_attack(tensor, MembershipMask(mask), AttackConfig(estimator=Estimator.INDEPENDENT))
        reasons = {(t, c): r for t, c, r in result.per_canary_fallbacks}
        assert reasons[(0, 0)] == FALLBACK_UNINFORMATIVE
        assert result.scores[0, 0] == 0.0
        assert reasons[(1, 0)] == FALLBACK_DEGENERATE_SPLIT
        assert np.isfinite(result.scores).all()
        assert result.fallback[1, 0]
        assert result.per_canary_fallbacks == sorted(result.per_canary_fallbacks)

    def test_needs_three_models(self, rng):
        tensor = ScoreTensor(rng.standard_normal((2, 3, 2)))
        mask = MembershipMask(np.array([[1, 0, 1], [0, 1, 0]], dtype=bool))
        with pytest.raises(DatasetValidationError):
            run_attack(tensor, mask, AttackConfig())

    def test_rows_are_long_format(self, small_synthetic):
        _, tensor, mask, _ = small_synthetic
        result = run_attack(tensor, mask, AttackConfig(estimator=Estimator.INDEPENDENT))
        rows = list(result.rows())
        assert len(rows) == 8 * 12
        assert rows[13]["target_index"] == 1 and rows[13]["canary_index"] == 1
        scores, labels = scores_for(result, [1])
        assert scores.shape == (12,)
        assert np.array_equal(labels, mask.mask[1])

    def test_no_signal_gives_chance_auc(self):
        rng = np.random.default_rng(2)
        tensor = ScoreTensor(rng.standard_normal((24, 150, 3)))
        mask = np.zeros((24, 150), dtype=bool)
        for canary in range(150):
            mask[rng.permutation(24)[:12], canary] = True
        result = run_attack(tensor, MembershipMask(mask), AttackConfig(estimator=Estimator.INDEPENDENT))
        assert auc(roc(result.scores, result.labels)) == pytest.approx(0.5, abs=0.03)

    def test_correlation_carries_the_signal(self, correlated_pair):
        tensor, mask = correlated_pair(40, 150, seed=4)
        full = run_attack(tensor, mask, AttackConfig(estimator=Estimator.FULL, pooling=Pooling.SHARED))
        oas = run_attack(tensor, mask, AttackConfig(estimator=Estimator.OAS, pooling=Pooling.SHARED))
        uni = run_attack(tensor, mask, AttackConfig(estimator=Estimator.UNIVARIATE, pooling=Pooling.SHARED))
        assert auc(roc(full.scores, full.labels)) > 0.9
        assert auc(roc(oas.scores, oas.labels)) > 0.88
        assert auc(roc(uni.scores, uni.labels)) == pytest.approx(0.5, abs=0.04)

    def test_independent_matches_full_on_diagonal_truth(self):
        rng = np.random.default_rng(8)
        scale = np.sqrt([1.0, 2.0, 0.5, 3.0])
        x_in = rng.standard_normal((10_000, 4)) * scale + 0.2
        x_out = rng.standard_normal((10_000, 4)) * scale
        ind_in, _ = fit_class_models(x_in, x_out, Estimator.INDEPENDENT, Pooling.CLASS_WISE)
        full_in, _ = fit_class_models(x_in, x_out, Estimator.FULL, Pooling.CLASS_WISE)
        dense = full_in.cov.to_dense()
        assert np.allclose(np.diag(dense), ind_in.cov.values, rtol=1e-2)
        off = dense - np.diag(np.diag(dense))
        assert np.abs(off).max() < 0.1
