"""Correlation statistics: exact examples, oracles, and report assembly."""

import math

import numpy as np
import pytest

from ktl.analytics import (
    CorrelationReport,
    TransformationRecord,
    bound_component_view,
    bound_surrogate,
    build_correlation_report,
    cca_first_correlation,
    pearson_r,
)
from ktl.errors import DegenerateInputError, ValidationError
from ktl.rng import make_rng


class TestPearson:
    def test_exact_linear_relation(self):
        assert pearson_r([1, 2, 3], [2, 4, 6]) == 1.0

    def test_negated_series(self):
        a = [0.3, -1.2, 2.2, 0.7]
        assert pearson_r(a, [-v for v in a]) == -1.0

    def test_matches_covariance_formula(self):
        rng = make_rng(0)
        for _ in range(20):
            a = rng.normal(size=30)
            b = rng.normal(size=30)
            cov = np.cov(a, b, ddof=1)
            expected = cov[0, 1] / math.sqrt(cov[0, 0] * cov[1, 1])
            assert pearson_r(a, b) == pytest.approx(expected, abs=1e-12)

    def test_affine_invariance(self):
        rng = make_rng(1)
        a = rng.normal(size=25)
        b = rng.normal(size=25)
        base = pearson_r(a, b)
        assert pearson_r(3.0 * a + 7.0, b) == pytest.approx(base, abs=1e-12)
        assert pearson_r(a, 0.5 * b - 2.0) == pytest.approx(base, abs=1e-12)

    def test_zero_variance_rejected(self):
        with pytest.raises(DegenerateInputError):
            pearson_r([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])


def grid_search_first_correlation(a, b, angles=100):
    """Exhaustive direction search for two 2-column views."""
    best = 0.0
    thetas = np.linspace(0.0, math.pi, angles, endpoint=False)
    for ta in thetas:
        ua = np.array([math.cos(ta), math.sin(ta)])
        pa = a @ ua
        for tb in thetas:
            ub = np.array([math.cos(tb), math.sin(tb)])
            best = max(best, abs(pearson_r(pa, b @ ub)))
    return best


class TestCca:
    def test_single_columns_reduce_to_absolute_pearson(self):
        rng = make_rng(2)
        a = rng.normal(size=(40, 1))
        b = -2.0 * a + rng.normal(size=(40, 1))
        corr, _, _ = cca_first_correlation(a, b)
        assert corr == pytest.approx(abs(pearson_r(a, b)), abs=1e-9)

    def test_invariance_to_invertible_mixing(self):
        rng = make_rng(3)
        a = rng.normal(size=(60, 3))
        mix = rng.normal(size=(3, 3)) + 3.0 * np.eye(3)
        corr, _, _ = cca_first_correlation(a, a @ mix)
        assert corr == pytest.approx(1.0, abs=1e-9)

    def test_matches_grid_search_oracle(self):
        rng = make_rng(4)
        a = rng.normal(size=(50, 2))
        b = np.column_stack([
            a[:, 0] + 0.5 * rng.normal(size=50),
            rng.normal(size=50),
        ])
        corr, _, _ = cca_first_correlation(a, b)
        oracle = grid_search_first_correlation(a, b)
        assert corr == pytest.approx(oracle, abs=1e-3)

    def test_returned_value_equals_projection_pearson(self):
        rng = make_rng(5)
        a = rng.normal(size=(45, 2))
        b = rng.normal(size=(45, 3))
        corr, wa, wb = cca_first_correlation(a, b)
        az = (a - a.mean(0)) / a.std(0)
        bz = (b - b.mean(0)) / b.std(0)
        assert corr == pytest.approx(pearson_r(az @ wa, bz @ wb), abs=1e-9)

    def test_dominates_single_columns(self):
        rng = make_rng(6)
        for _ in range(20):
            a = rng.normal(size=(30, 1))
            b = np.column_stack([
                a[:, 0] * 0.8 + rng.normal(size=30),
                a[:, 0] * 0.3 + rng.normal(size=30),
            ])
            corr, _, _ = cca_first_correlation(a, b)
            for j in range(2):
                assert corr >= abs(pearson_r(a, b[:, j])) - 1e-9

    def test_too_few_samples_rejected(self):
        with pytest.raises(ValidationError):
            cca_first_correlation(np.ones((3, 2)), np.ones((3, 2)))


class TestBoundSurrogate:
    def test_worked_example(self):
        value = bound_surrogate(k=1, n=256, d=2, lipschitz=2.0, mse=0.0016)
        assert value == pytest.approx(1.325, abs=1e-12)

    def test_k_equals_n_without_other_terms(self):
        # with zero mse and lipschitz only the vote-variance term remains
        assert bound_surrogate(64, 64, 3, 0.0, 0.0) == pytest.approx(
            1.0 / 8.0, abs=1e-12
        )

    def test_monotone_in_mse_and_lipschitz_and_n(self):
        base = bound_surrogate(5, 1000, 4, 1.0, 0.01)
        assert bound_surrogate(5, 1000, 4, 1.0, 0.02) > base
        assert bound_surrogate(5, 1000, 4, 1.5, 0.01) > base
        assert bound_surrogate(5, 2000, 4, 1.0, 0.01) < base

    def test_exponent_one_matches_raw_mse(self):
        raw = bound_surrogate(1, 100, 2, 0.0, 0.04, mse_exponent=1.0)
        assert raw == pytest.approx(1.0 + 0.04, abs=1e-12)


def make_records(errs, mses, norms=None, dims=None):
    norms = norms if norms is not None else [1.0 + i for i in range(len(errs))]
    dims = dims if dims is not None else [2 + i for i in range(len(errs))]
    return [
        TransformationRecord(f"t{i}", dims[i], mses[i], norms[i], {1: errs[i]})
        for i in range(len(errs))
    ]


class TestCorrelationReport:
    def test_error_equal_to_mse_gives_perfect_pearson(self):
        vals = [0.1, 0.2, 0.3, 0.4]
        report = build_correlation_report(make_records(vals, vals), 1)
        assert report.pearson_mse_vs_err == 1.0

    def test_constant_dimension_is_flagged_degenerate(self):
        report = build_correlation_report(
            make_records([0.1, 0.2, 0.3], [0.2, 0.3, 0.1], dims=[4, 4, 4]), 1
        )
        assert report.pearson_dim_vs_err is None
        assert "dim" in report.degenerate
        assert report.pearson_mse_vs_err is not None

    def test_cca_dominates_mse_only_pearson(self):
        rng = make_rng(7)
        for trial in range(10):
            errs = rng.uniform(0.05, 0.5, size=8)
            mses = errs * 0.8 + rng.uniform(0, 0.1, size=8)
            norms = rng.uniform(0.5, 4.0, size=8)
            records = make_records(errs.tolist(), mses.tolist(), norms.tolist())
            report = build_correlation_report(records, 1)
            assert report.cca_msenorm_vs_err >= abs(report.pearson_mse_vs_err) - 1e-9

    def test_too_few_records_rejected(self):
        with pytest.raises(ValidationError):
            build_correlation_report(make_records([0.1, 0.2], [0.1, 0.2]), 1)

    def test_missing_k_is_named(self):
        records = make_records([0.1, 0.2, 0.3], [0.1, 0.2, 0.3])
        with pytest.raises(ValidationError, match="k=5"):
            build_correlation_report(records, 5)

    def test_record_json_round_trip(self):
        rec = TransformationRecord("pca", 3, 0.12, 1.5, {1: 0.2, 5: 0.18},
                                   lipschitz=0.375, train_size=1000)
        back = TransformationRecord.from_dict(rec.to_dict())
        assert back == rec
        assert back.surrogate(1) == rec.surrogate(1)

    def test_surrogate_requires_norm_metadata(self):
        rec = TransformationRecord("raw", 4, 0.1, 2.0, {1: 0.3})
        assert rec.surrogate(1) is None


class TestBoundComponentView:
    def records(self):
        rng = make_rng(8)
        out = []
        for i in range(6):
            errs = {1: float(rng.uniform(0.1, 0.5)), 5: float(rng.uniform(0.1, 0.5))}
            out.append(TransformationRecord(
                f"t{i}", 2 + i, float(rng.uniform(0.05, 0.4)), 1.0,
                errs, lipschitz=0.5, train_size=800,
            ))
        return out

    def test_one_row_per_record_and_k(self):
        errors, comps = bound_component_view(self.records(), [1, 5])
        assert errors.shape == (12, 1)
        assert comps.shape == (12, 3)
        # first component depends only on k
        assert set(np.round(comps[:, 0], 12)) == {1.0, round(1 / math.sqrt(5), 12)}

    def test_feeds_cca(self):
        errors, comps = bound_component_view(self.records(), [1, 5])
        corr, _, _ = cca_first_correlation(errors, comps)
        assert 0.0 <= corr <= 1.0

    def test_missing_metadata_rejected(self):
        rec = TransformationRecord("raw", 4, 0.1, 2.0, {1: 0.3})
        with pytest.raises(ValidationError):
            bound_component_view([rec], [1])
