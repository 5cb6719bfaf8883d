import math

import numpy as np
import pytest

from lending.services.core import (
    Action,
    Box,
    ConfigurationError,
    ContractViolation,
    DegenerateNormalizationError,
    FeatureVector,
    LendingRecord,
    Outcome,
    UtilityConfig,
)
from lending.services.datagen import ApplicantPool
from lending.services.harness import (
    PeriodStats,
    ScenarioConfig,
    ValueSample,
    compute_metrics,
    estimate_gradient_bound,
    get_metrics,
    maximize_value,
    normalized_utility,
    recovered_after_shift,
    regret_bound,
    regret_diagnostic,
    rise_time,
    run_scenario,
    shift_recovery,
)
from lending.services.learner import LearnerConfig, MultiStartConfig, StepSchedule
from lending.services.policy import LinkKind


def small_scenario(**kwargs):
    defaults = dict(pool='type5', T=20, N_t=10, replications=2, seed=1, pool_size=2000, n_features=5,
                    learner=LearnerConfig(multi_start=MultiStartConfig(4, 2, 2, multi_periods=5, window=2)))
    defaults.update(kwargs)
    return ScenarioConfig(**defaults)


def make_record(action, outcome, utility=UtilityConfig()):
    return LendingRecord.build(FeatureVector([1.0]), 1, 0.5, action, outcome, utility, 1)


class TestComputeMetrics:
    def test_all_approved(self):
        periods = [[make_record(Action.APPROVED, Outcome.RETURNED)] * 4 for _ in range(3)]
        series = compute_metrics(periods, 'approve_all')
        np.testing.assert_array_equal(series.approval_rate, [1.0, 1.0, 1.0])
        np.testing.assert_allclose(series.mean_utility, 0.35)
        assert series.converged_default_rate == 0.0

    def test_no_approvals_means_zero_default_rate(self):
        periods = [[make_record(Action.REJECTED, Outcome.NOT_APPLICABLE)] * 3]
        series = compute_metrics(periods)
        assert series.default_rate[0] == 0.0
        assert series.approval_rate[0] == 0.0

    def test_rates(self):
        period = [make_record(Action.APPROVED, Outcome.RETURNED), make_record(Action.APPROVED, Outcome.DEFAULTED),
                  make_record(Action.REJECTED, Outcome.NOT_APPLICABLE), make_record(Action.REJECTED,
                                                                                      Outcome.NOT_APPLICABLE)]
        series = compute_metrics([period, period])
        assert series.approval_rate[0] == pytest.approx(0.5)
        assert series.default_rate[0] == pytest.approx(0.5)
        assert series.mean_utility[0] == pytest.approx((0.35 - 1.0) / 4)
        np.testing.assert_allclose(series.avg_cum_utility, [-0.65, -0.65])

    def test_empty_stream(self):
        with pytest.raises(ContractViolation):
            compute_metrics([])

    def test_shift_splits_rise_time(self):
        stats = [PeriodStats(10, 10, 0, 3.5)] * 5 + [PeriodStats(10, 10, 10, -10.0)] * 5
        series = compute_metrics(stats, shift_period=5)
        assert series.post_shift_rise_time is not None


class TestRiseTime:
    def test_step_change(self):
        means = np.r_[np.zeros(19), np.ones(81)]
        assert rise_time(means) == 28

    def test_flat(self):
        assert rise_time(np.full(60, 0.5)) == 1

    def test_empty(self):
        assert rise_time(np.empty(0)) is None


class TestShiftRecovery:
    def test_levels(self):
        means = np.r_[np.full(30, 0.25), np.full(10, -0.5), np.full(20, 0.125)]
        assert shift_recovery(means, 30) == (0.25, 0.125)

    @pytest.mark.parametrize('final,expected', [(0.25, True), (0.21, True), (0.19, False)])
    def test_within_tolerance_of_plateau(self, final, expected):
        means = np.r_[np.full(30, 0.25), np.full(10, -0.5), np.full(20, final)]
        assert recovered_after_shift(means, 30) is expected

    def test_negative_plateau(self):
        means = np.r_[np.full(20, -0.5), np.full(20, -0.55)]
        assert recovered_after_shift(means, 20)

    @pytest.mark.parametrize('shift_period', [5, 36])
    def test_needs_a_window_on_each_side(self, shift_period):
        with pytest.raises(ContractViolation):
            shift_recovery(np.zeros(40), shift_period)


class TestNormalization:
    @pytest.mark.parametrize('converged,expected', [(0.3, 1.0), (-0.1, -1.0), (0.1, 0.0)])
    def test_scale(self, converged, expected):
        assert normalized_utility(converged, lowest=-0.1, perfect=0.3) == pytest.approx(expected)

    def test_degenerate(self):
        with pytest.raises(DegenerateNormalizationError):
            normalized_utility(0.1, lowest=0.2, perfect=0.2)


class TestRegretBound:
    def test_values(self):
        assert regret_bound(1.0, 1.0, 100) == pytest.approx(0.15)
        assert regret_bound(1.0, 1.0, 1) == pytest.approx(1.5)

    @pytest.mark.parametrize('D,G,T', [(0.0, 1.0, 10), (1.0, -1.0, 10), (1.0, 1.0, 0)])
    def test_invalid(self, D, G, T):
        with pytest.raises(ContractViolation):
            regret_bound(D, G, T)


@pytest.fixture
def value_pool():
    rng = np.random.default_rng(21)
    features = rng.uniform(0.0, 4.0, (4000, 3))
    return ApplicantPool(features, np.clip(features.mean(axis=1) / 4.0 + 0.3, 0.0, 1.0),
                         np.ones(4000, dtype=np.int64))


class TestValueEstimates:
    def test_value_rises_toward_corner_when_every_reward_is_positive(self):
        rng = np.random.default_rng(0)
        sample = ValueSample(rng.uniform(0.0, 4.0, (500, 2)), rng.uniform(0.1, 1.0, 500))
        z_star = maximize_value(sample, LinkKind.CASE_A, Box(0.0, 1.0), 4)
        np.testing.assert_allclose(z_star, 1.0, atol=1e-6)

    def test_gradient_terms_average_to_gradient(self):
        rng = np.random.default_rng(6)
        sample = ValueSample(rng.uniform(0.0, 4.0, (300, 2)), rng.uniform(-1.0, 0.35, 300))
        z = np.array([0.5, 0.2, 0.1, 0.3])
        terms = sample.gradient_terms(z, LinkKind.CASE_B)
        assert terms.shape == (300, 4)
        np.testing.assert_allclose(terms.mean(axis=0), sample.gradient(z, LinkKind.CASE_B))
        np.testing.assert_allclose(sample.gradient_stderr(z, LinkKind.CASE_B),
                                   terms.std(axis=0, ddof=1) / math.sqrt(300))
        single = ValueSample(np.ones((1, 2)), np.ones(1))
        np.testing.assert_array_equal(single.gradient_stderr(z, LinkKind.CASE_B), np.zeros(4))

    def test_gradient_bound_is_positive(self, value_pool):
        G = estimate_gradient_bound(value_pool, LearnerConfig(), UtilityConfig(), 0.1,
                                    np.random.default_rng(1), samples=2000)
        assert G > 0 and math.isfinite(G)

    def test_regret_diagnostic_fields(self, value_pool):
        cfg = LearnerConfig()
        z_history = np.random.default_rng(2).uniform(0.0, 1.0, (25, 6))
        diag = regret_diagnostic(value_pool, z_history, cfg, UtilityConfig(), 0.0, 3000,
                                 np.random.default_rng(3))
        assert diag.T == 25
        assert diag.D == pytest.approx(cfg.box.diameter(6))
        assert diag.bound == pytest.approx(regret_bound(diag.D, diag.G, 25))
        assert math.isfinite(diag.gap) and diag.gap_stderr >= 0.0

    def test_regret_scores_each_side_of_a_shift_on_its_own_pool(self):
        rng = np.random.default_rng(4)
        features = rng.uniform(0.5, 4.0, (2000, 3))
        ones = np.ones(2000, dtype=np.int64)
        always_repays = ApplicantPool(features, np.ones(2000), ones)
        never_repays = ApplicantPool(features, np.zeros(2000), ones)
        cfg = LearnerConfig(box=Box(0.0, 1.0))
        # approve-leaning iterates before the shift, reject-leaning after: optimal on both segments
        z_history = np.vstack([np.ones((10, 6)), np.zeros((10, 6))])

        split = regret_diagnostic(always_repays, z_history, cfg, UtilityConfig(), 0.0, 1000,
                                  np.random.default_rng(5), G=1.0, shifted=never_repays, shift_period=10)
        assert split.T == 20
        assert split.gap == pytest.approx(0.0, abs=1e-9)

        after_only = regret_diagnostic(never_repays, z_history, cfg, UtilityConfig(), 0.0, 1000,
                                       np.random.default_rng(5), G=1.0)
        assert after_only.gap > 0.1


class TestScenarioConfig:
    def test_unknown_algorithm(self):
        with pytest.raises(ConfigurationError):
            ScenarioConfig(algorithms=('learner', 'oracle'))

    def test_duplicate_algorithm(self):
        with pytest.raises(ConfigurationError):
            ScenarioConfig(algorithms=('perfect', 'perfect'))

    def test_shift_period_inside_horizon(self):
        with pytest.raises(ConfigurationError):
            ScenarioConfig(T=10, shifted_pool='type19', shift_period=10)

    def test_shift_case_defaults(self):
        cfg = ScenarioConfig.for_shift_case(1)
        assert (cfg.pool, cfg.shifted_pool, cfg.shift_period) == ('type1', 'type19', 250)


class TestRunScenario:
    def test_shape(self):
        result = run_scenario(small_scenario(T=1, replications=1, algorithms=('perfect',)))
        (series,) = result.series['perfect']
        assert series.periods == 1

    def test_zero_periods(self):
        result = run_scenario(small_scenario(T=0, replications=1))
        assert all(s.periods == 0 for s in result.all_series())

    def test_same_seed_same_output(self):
        cfg = small_scenario(algorithms=('learner', 'perfect', 'logistic'), missing_p=0.2)
        first, second = run_scenario(cfg), run_scenario(cfg)
        for name in cfg.algorithms:
            for a, b in zip(first.series[name], second.series[name]):
                np.testing.assert_array_equal(a.mean_utility, b.mean_utility)
        np.testing.assert_array_equal(first.series['learner'][0].z, second.series['learner'][0].z)

    def test_learner_variants_share_applicants(self):
        result = run_scenario(small_scenario(algorithms=('learner', 'learner_a', 'approve_all')))
        for plain, case_a in zip(result.series['learner'], result.series['learner_a']):
            np.testing.assert_array_equal(plain.mean_utility, case_a.mean_utility)
        assert all(np.all(s.approval_rate == 1.0) for s in result.series['approve_all'])

    def test_learner_parameters_recorded_before_each_period(self):
        result = run_scenario(small_scenario(algorithms=('learner',), replications=1))
        z = result.series['learner'][0].z
        assert z.shape == (20, 10)
        assert Box().contains(z)

    def test_approve_all_expected_utility(self, csv_pool):
        cfg = ScenarioConfig(pool=csv_pool(0.8), algorithms=('approve_all',), T=2000, N_t=10, replications=1)
        (series,) = run_scenario(cfg).series['approve_all']
        assert series.mean_utility.mean() == pytest.approx(0.8 * 0.35 - 0.2, abs=0.015)

    def test_pool_swaps_after_shift_period(self, csv_pool):
        cfg = ScenarioConfig(pool=csv_pool(1.0, name='before.csv'), shifted_pool=csv_pool(0.0, name='after.csv'),
                             shift_period=5, algorithms=('approve_all',), T=10, N_t=4, replications=1)
        (series,) = run_scenario(cfg).series['approve_all']
        np.testing.assert_allclose(series.mean_utility[:5], 0.35)
        np.testing.assert_allclose(series.mean_utility[5:], -1.0)

    def test_normalization(self, csv_pool):
        cfg = ScenarioConfig(pool=csv_pool(0.5), algorithms=('perfect', 'approve_all'), T=60, N_t=10,
                             replications=2)
        result = run_scenario(cfg)
        assert all(s.normalized_utility == pytest.approx(1.0) for s in result.series['perfect'])
        assert np.mean([s.normalized_utility for s in result.series['approve_all']]) == pytest.approx(-1.0)

    def test_regret_requested(self):
        cfg = small_scenario(algorithms=('learner',), replications=1, regret_sample=500,
                             learner=LearnerConfig(schedule=StepSchedule.theoretic(1.0),
                                                   multi_start=MultiStartConfig.single()))
        (series,) = run_scenario(cfg).series['learner']
        assert series.regret is not None and series.regret.T == 20

    def test_metrics_counters(self):
        before = get_metrics()['scenarios_run']
        run_scenario(small_scenario(T=2, replications=1, algorithms=('perfect',)))
        assert get_metrics()['scenarios_run'] == before + 1

    @pytest.mark.slow
    def test_parallel_replications_match_serial(self):
        cfg = small_scenario(algorithms=('learner', 'perfect'))
        serial, parallel = run_scenario(cfg, jobs=1), run_scenario(cfg, jobs=2)
        for a, b in zip(serial.series['learner'], parallel.series['learner']):
            np.testing.assert_array_equal(a.mean_utility, b.mean_utility)
