import json
import math

import numpy as np
import pytest
from scipy.stats import norm

from lending.services.core import (
    ConfigurationError,
    ContractViolation,
    DegenerateFitError,
    DomainError,
    FeatureVector,
    Outcome,
    ParseError,
    ResultsIOError,
)
from lending.services.datagen import (
    ApplicantPool,
    ApplicantStream,
    FeatureDistSpec,
    GroupSpec,
    LogisticModel,
    RepaymentSpec,
    WeightRule,
    augment_pool_from_model,
    build_pool,
    export_pool_csv,
    feature_pmf,
    fit_logistic_arrays,
    fit_logistic_model,
    group_return_probability,
    group_return_table,
    ingest_csv_pool,
    mask_batch,
    mask_missing,
    repayment_probability,
    rescale_column,
    resample_pool_by_label,
)
from lending.services.registry import distribution_type, get_pool_spec


class TestFeaturePmf:
    def test_uniform(self):
        assert all(feature_pmf(0.01, 100, l) == pytest.approx(0.01) for l in (1, 50, 100))

    def test_first_bin_of_increasing_trend(self):
        assert feature_pmf(0.0, 100, 1) == 0.0

    @pytest.mark.parametrize('a_s', [0.0, 0.005, 0.01, 0.015, 0.02])
    def test_sums_to_one(self, a_s):
        assert abs(sum(feature_pmf(a_s, 100, l) for l in range(1, 101)) - 1.0) <= 1e-12

    def test_negative_mass(self):
        with pytest.raises(ConfigurationError):
            feature_pmf(0.03, 100, 100)

    def test_bin_out_of_range(self):
        with pytest.raises(ContractViolation):
            feature_pmf(0.01, 100, 0)

    def test_binned_values_on_grid(self, rng):
        values = FeatureDistSpec('binned', 3, a_s=0.01, b_s=100).sample(5000, rng)
        assert values.min() >= 0.0 and values.max() <= 4.0
        np.testing.assert_allclose(values * 99 / 4, np.round(values * 99 / 4), atol=1e-9)

    def test_reflected_gaussian_mirrors_mean(self):
        plain = FeatureDistSpec('gaussian', 2, mean=2.0, sd=0.25).sample(20_000, np.random.default_rng(1))
        mirrored = FeatureDistSpec('gaussian', 2, mean=2.0, sd=0.25, reflect=True).sample(
            20_000, np.random.default_rng(1))
        np.testing.assert_allclose(plain + mirrored, 4.0)


class TestRepayment:
    def test_linear_type_one(self):
        _, spec = distribution_type(1, 100)
        assert repayment_probability(spec, FeatureVector(np.full(100, 4.0))) == pytest.approx(1.0)
        assert repayment_probability(spec, FeatureVector(np.zeros(100))) == 0.0

    def test_sigmoid_midpoint(self):
        spec = RepaymentSpec('sigmoid', WeightRule('constant', 2.0), -4.0)
        assert repayment_probability(spec, FeatureVector(np.full(10, 2.0))) == pytest.approx(0.5)

    def test_out_of_support(self):
        _, spec = distribution_type(1, 3)
        with pytest.raises(DomainError):
            repayment_probability(spec, FeatureVector([8.0, 8.0, 8.0]))
        with pytest.raises(DomainError):
            repayment_probability(spec, FeatureVector.from_entries([1.0, None, 1.0]))

    def test_weight_rules(self):
        np.testing.assert_allclose(WeightRule('ramp', 0.0, span=5.0).resolve(6), [0, 1, 2, 3, 4, 5])
        v = WeightRule('v_shape').resolve(100)
        assert v[0] == pytest.approx(1.5) and v[50] == pytest.approx(0.1)
        assert v.min() == pytest.approx(0.1)
        assert v[49] == pytest.approx(1.5 - 7 / 495 * 49)
        with pytest.raises(ConfigurationError):
            WeightRule('normal', 2.0, sd=4.0).resolve(5)

    def test_random_weights_frozen_by_generator(self):
        _, spec = distribution_type(16, 8)
        first = spec.resolve(8, np.random.default_rng(4)).weights
        assert first == spec.resolve(8, np.random.default_rng(4)).weights
        assert first != spec.resolve(8, np.random.default_rng(5)).weights


def rectified_moments(mu, sigma):
    a = mu / sigma
    mean = mu * norm.cdf(a) + sigma * norm.pdf(a)
    second = (mu ** 2 + sigma ** 2) * norm.cdf(a) + mu * sigma * norm.pdf(a)
    return mean, second - mean ** 2


class TestGroupReturn:
    def test_single_member_matches_normal_cdf(self):
        spec = GroupSpec('basic', gain_mean=1.42, gain_sd=0.5, interest_rate=0.35)
        p = group_return_probability(spec, 1, mc_samples=1_000_000, rng=np.random.default_rng(0))
        assert p == pytest.approx(norm.cdf(0.14), abs=0.005)

    def test_large_group_matches_clt(self):
        spec = GroupSpec('basic', gain_mean=1.42, gain_sd=0.5, interest_rate=0.35)
        p = group_return_probability(spec, 100, mc_samples=20_000, rng=np.random.default_rng(1))
        mean, var = rectified_moments(1.42, 0.5)
        expected = norm.cdf((100 * mean - 135.0) / math.sqrt(100 * var))
        assert p == pytest.approx(expected, abs=0.015)
        assert 0.9 < p < 0.95

    def test_unreachable_threshold(self):
        spec = GroupSpec('basic', gain_mean=-3.0, gain_sd=0.5, interest_rate=5.0)
        assert group_return_probability(spec, 1, mc_samples=10_000) == 0.0

    def test_break_even_size(self):
        table = group_return_table(np.array([1.42]), 100, 0.5, 0.35, 20_000, np.random.default_rng(2))
        reward = np.arange(1, 101) * (table[0] * 0.35 + (1 - table[0]) * -1.0)
        crossing = int(np.flatnonzero(reward > 0)[0]) + 1
        assert 15 <= crossing <= 25

    def test_table_matches_scalar(self):
        table = group_return_table(np.array([1.42]), 5, 0.5, 0.35, 200_000, np.random.default_rng(3))
        spec = GroupSpec('basic', gain_mean=1.42, gain_sd=0.5, interest_rate=0.35)
        for size in (1, 5):
            p = group_return_probability(spec, size, mc_samples=200_000, rng=np.random.default_rng(8))
            assert table[0, size - 1] == pytest.approx(p, abs=0.01)

    def test_advanced_needs_member_model(self):
        with pytest.raises(ConfigurationError):
            GroupSpec('advanced')


class TestMasking:
    def test_no_masking(self, rng):
        v = FeatureVector([1.0, 2.0, 3.0])
        assert mask_missing(v, 0.0, rng) == v

    def test_mask_everything(self, rng):
        assert np.isnan(mask_missing(FeatureVector([1.0, 2.0]), 1.0, rng).entries).all()

    def test_missing_fraction(self):
        masked = mask_batch(np.ones((10_000, 100)), 0.5, np.random.default_rng(6))
        assert abs(np.isnan(masked).mean() - 0.5) <= 0.015

    def test_invalid_probability(self, rng):
        with pytest.raises(ContractViolation):
            mask_batch(np.ones((2, 2)), 1.5, rng)


class TestStream:
    def test_draw(self, uniform_pool, rng):
        batch = ApplicantStream(uniform_pool, missing_p=0.25).draw(40, rng, period=7)
        assert len(batch) == 40 and batch.period == 7
        assert batch.features.shape == (40, 3)
        np.testing.assert_array_equal(np.isnan(batch.true_features), False)
        observed = ~np.isnan(batch.features)
        np.testing.assert_array_equal(batch.features[observed], batch.true_features[observed])
        assert batch.observed().features is batch.features

    def test_swap_checks_dimension(self, uniform_pool):
        stream = ApplicantStream(uniform_pool)
        other = ApplicantPool(np.ones((5, 2)), np.full(5, 0.5), np.ones(5, dtype=np.int64))
        with pytest.raises(ConfigurationError):
            stream.swap(other)

    def test_pool_arrays_are_read_only(self, uniform_pool):
        with pytest.raises(ValueError):
            uniform_pool.probs[0] = 0.1


class TestCsv:
    def test_rescale(self):
        np.testing.assert_allclose(rescale_column(np.array([0.0, 5.0, 10.0])), [0.0, 2.0, 4.0])
        np.testing.assert_array_equal(rescale_column(np.array([0.0, 1.0, 4.0])), [0.0, 1.0, 4.0])

    def test_ingest(self, tmp_path):
        path = tmp_path / 'loans.csv'
        path.write_text('amount,term,label\n0,5,1\n,10,0\n2,2.5,1\n', encoding='utf-8')
        pool = ingest_csv_pool(path)
        assert pool.size == 3 and pool.n == 2
        assert np.isnan(pool.features[1, 0])
        np.testing.assert_allclose(pool.features[:, 1], [2.0, 4.0, 1.0])
        np.testing.assert_array_equal(pool.probs, [1.0, 0.0, 1.0])
        assert pool.provenance['feature_columns'] == ['amount', 'term']

    def test_non_numeric_cell_names_row_and_column(self, tmp_path):
        path = tmp_path / 'bad.csv'
        path.write_text('amount,label\n1,1\nlots,0\n', encoding='utf-8')
        with pytest.raises(ParseError, match=r"row 3.*'amount'"):
            ingest_csv_pool(path)

    def test_missing_header(self, tmp_path):
        path = tmp_path / 'noheader.csv'
        path.write_text('1,0\n2,1\n', encoding='utf-8')
        with pytest.raises(ParseError, match='header'):
            ingest_csv_pool(path)

    def test_missing_label_column(self, tmp_path):
        path = tmp_path / 'nolabel.csv'
        path.write_text('amount,term\n1,2\n', encoding='utf-8')
        with pytest.raises(ParseError, match='label'):
            ingest_csv_pool(path)

    def test_label_values(self, tmp_path):
        path = tmp_path / 'labels.csv'
        path.write_text('amount,label\n1,2\n', encoding='utf-8')
        with pytest.raises(ParseError):
            ingest_csv_pool(path)

    def test_file_not_found(self, tmp_path):
        with pytest.raises(ResultsIOError):
            ingest_csv_pool(tmp_path / 'absent.csv')

    def test_export_then_ingest(self, tmp_path, uniform_pool):
        path = export_pool_csv(uniform_pool, tmp_path / 'out' / 'pool.csv')
        meta = json.loads((tmp_path / 'out' / 'pool.csv.meta.json').read_text(encoding='utf-8'))
        assert 'size' not in meta or meta['size'] == uniform_pool.size
        again = ingest_csv_pool(path)
        np.testing.assert_allclose(again.probs, uniform_pool.probs)
        np.testing.assert_allclose(again.features, uniform_pool.features)


class TestLogistic:
    def test_intercept_only_matches_base_rate(self):
        X = np.zeros((1000, 2))
        y = np.r_[np.ones(600), np.zeros(400)]
        model = fit_logistic_arrays(X, y)
        assert model.predict(np.zeros((1, 2)))[0] == pytest.approx(0.6, abs=0.01)

    def test_recovers_generating_model(self):
        rng = np.random.default_rng(10)
        X = rng.uniform(0.0, 4.0, (10_000, 2))
        truth = LogisticModel(np.array([0.8, -0.5]), np.array([-0.3, -0.2]))
        y = (rng.random(10_000) < truth.predict(X)).astype(float)
        model = fit_logistic_arrays(X, y)
        assert np.mean(np.abs(model.predict(X) - truth.predict(X))) <= 0.02

    def test_single_class(self):
        with pytest.raises(DegenerateFitError):
            fit_logistic_arrays(np.ones((5, 2)), np.ones(5))

    def test_fit_from_records(self):
        records = [(FeatureVector([0.0]), Outcome.RETURNED), (FeatureVector([0.0]), Outcome.DEFAULTED)]
        model = fit_logistic_model(records)
        assert model.predict(np.zeros((1, 1)))[0] == pytest.approx(0.5, abs=1e-6)
        with pytest.raises(ContractViolation):
            fit_logistic_model([(FeatureVector([0.0]), Outcome.NOT_APPLICABLE)])

    def test_missing_entries_drop_out_of_logit(self):
        model = LogisticModel(np.array([1.0, 2.0]), np.array([0.5, 0.5]))
        np.testing.assert_allclose(model.logits(np.array([[1.0, np.nan]])), [1.5])


class TestAugmentation:
    def test_resampled_rows_come_from_source(self, rng):
        source = np.array([[0.0, 1.0], [2.0, 3.0], [4.0, 0.5]])
        pool = augment_pool_from_model(source, LogisticModel(np.zeros(2), np.zeros(2)), 10, rng)
        assert pool.size == 10
        assert all(any(np.array_equal(row, s) for s in source) for row in pool.features)
        np.testing.assert_allclose(pool.probs, 0.5)

    def test_certain_model_never_defaults(self, rng):
        source = np.array([[1.0], [2.0]])
        pool = augment_pool_from_model(source, LogisticModel(np.zeros(1), np.array([60.0])), 5000, rng)
        batch = ApplicantStream(pool).draw(5000, rng)
        assert batch.repays.all()

    def test_empty_source(self, rng):
        with pytest.raises(ConfigurationError):
            augment_pool_from_model(np.empty((0, 2)), LogisticModel(np.zeros(2), np.zeros(2)), 5, rng)

    def test_resample_by_label(self, rng):
        labels = np.r_[np.ones(80), np.zeros(20)]
        pool = ApplicantPool(rng.uniform(0, 4, (100, 2)), labels, np.ones(100, dtype=np.int64))
        resampled = resample_pool_by_label(pool, 20_000, 0.25, rng)
        assert abs((resampled.probs == 0.0).mean() - 0.25) <= 0.02
        with pytest.raises(ConfigurationError):
            resample_pool_by_label(ApplicantPool(np.ones((3, 1)), np.full(3, 0.5), np.ones(3)), 10, 0.2, rng)


def test_build_pool_is_reproducible_and_bounded():
    spec = get_pool_spec('type5', n_features=6)
    first = build_pool(spec, 300, np.random.default_rng(8), seed=8)
    second = build_pool(spec, 300, np.random.default_rng(8), seed=8)
    np.testing.assert_array_equal(first.features, second.features)
    np.testing.assert_array_equal(first.probs, second.probs)
    assert first.features.shape == (300, 6)
    assert np.all((first.probs >= 0) & (first.probs <= 1))
    assert np.all(first.group_sizes == 1)
    assert first.provenance == {'spec': 'type5', 'seed': 8, 'size': 300}


def test_build_pool_rejects_negative_size(rng):
    with pytest.raises(ConfigurationError):
        build_pool(get_pool_spec('type5', n_features=3), -1, rng)
