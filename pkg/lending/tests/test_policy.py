import math

import numpy as np
import pytest

from lending.services.core import Action, ContractViolation, DomainError, FeatureVector, PolicyParams
from lending.services.policy import (
    LinkKind,
    approval_gradient_batch,
    evaluate_policy,
    feature_gradient,
    link_derivative,
    link_value,
    policy_derivative,
    preference_q,
    sample_decision,
    sample_decisions,
)


def params(phi, eps):
    return PolicyParams(np.array(phi, dtype=float), np.array(eps, dtype=float))


class TestPreference:
    def test_missing_entry_is_skipped(self):
        z = params([0.5, 1.0], [0.1, 0.2])
        assert preference_q(z, FeatureVector.from_entries([2.0, None])) == pytest.approx(0.55)

    def test_all_missing(self):
        assert preference_q(params([0.5, 1.0], [0.1, 0.2]), FeatureVector.from_entries([None, None])) == 0.0

    def test_full(self):
        assert preference_q(params([0.5, 1.0], [0.1, 0.2]), FeatureVector([2.0, 1.0])) == pytest.approx(1.15)

    def test_dimension_mismatch(self):
        with pytest.raises(ContractViolation):
            preference_q(params([0.5], [0.1]), FeatureVector([1.0, 2.0]))


class TestLinks:
    @pytest.mark.parametrize('kind,q,expected', [
        (LinkKind.CASE_A, 0.0, 0.0),
        (LinkKind.CASE_A, math.log(2), 0.5),
        (LinkKind.CASE_B, math.log(3), 0.5),
        (LinkKind.CASE_B, 0.0, 0.0),
    ])
    def test_value(self, kind, q, expected):
        assert link_value(kind, q) == pytest.approx(expected)

    @pytest.mark.parametrize('kind,q,expected', [
        (LinkKind.CASE_A, 0.0, 1.0),
        (LinkKind.CASE_B, 0.0, 0.5),
        (LinkKind.CASE_A, 1.0, math.exp(-1)),
    ])
    def test_derivative(self, kind, q, expected):
        assert link_derivative(kind, q) == pytest.approx(expected)

    @pytest.mark.parametrize('kind', list(LinkKind))
    def test_negative_q_is_rejected(self, kind):
        with pytest.raises(DomainError):
            link_value(kind, -0.1)
        with pytest.raises(DomainError):
            link_derivative(kind, -1e-9)

    @pytest.mark.parametrize('kind', list(LinkKind))
    def test_concave_increasing_in_unit_interval(self, kind):
        q = np.linspace(0.0, 40.0, 2001)
        v = link_value(kind, q)
        d = link_derivative(kind, q)
        assert np.all((v >= 0) & (v < 1) | (q > 30))
        assert np.all(np.diff(v) >= 0)
        assert np.all(d > 0)
        assert np.all(np.diff(d) <= 0)

    @pytest.mark.parametrize('kind', list(LinkKind))
    def test_derivative_matches_finite_difference(self, kind):
        q = np.array([0.3, 1.0, 2.5, 6.0])
        h = 1e-6
        numeric = (link_value(kind, q + h) - link_value(kind, q - h)) / (2 * h)
        np.testing.assert_allclose(link_derivative(kind, q), numeric, rtol=1e-6)

    def test_case_b_is_stable_for_large_q(self):
        assert link_value(LinkKind.CASE_B, 1e4) == pytest.approx(1.0)
        assert link_derivative(LinkKind.CASE_B, 1e4) >= 0.0

    def test_case_b_derivative_does_not_overflow(self):
        q = np.array([0.0, 50.0, 800.0, 1e4])
        with np.errstate(over='raise', invalid='raise'):
            d = link_derivative(LinkKind.CASE_B, q)
        assert d[0] == pytest.approx(0.5)
        assert np.all(np.isfinite(d)) and np.all(d >= 0.0)
        assert d[-1] == 0.0

    def test_parse(self):
        assert LinkKind.parse('a') is LinkKind.CASE_A
        assert LinkKind.parse('CaseB') is LinkKind.CASE_B
        with pytest.raises(DomainError):
            LinkKind.parse('C')


class TestGradients:
    @pytest.mark.parametrize('k,expected', [(1, 2.0), (4, 0.0), (3, 1.0), (2, 0.0)])
    def test_feature_gradient(self, k, expected):
        assert feature_gradient(FeatureVector.from_entries([2.0, None]), k) == expected

    @pytest.mark.parametrize('k', [0, 5])
    def test_feature_gradient_out_of_range(self, k):
        with pytest.raises(ContractViolation):
            feature_gradient(FeatureVector.from_entries([2.0, None]), k)

    def test_policy_derivative_closed_form(self):
        z = params([0.5], [0.0])
        s = FeatureVector([2.0])
        grad = policy_derivative(z, s, LinkKind.CASE_A, Action.APPROVED)
        assert grad[0] == pytest.approx(2 * math.exp(-1), abs=1e-5)
        rejected = policy_derivative(z, s, LinkKind.CASE_A, Action.REJECTED)
        assert rejected[0] == pytest.approx(-0.73576, abs=1e-5)

    def test_missing_coordinates_have_zero_derivative(self):
        z = params([0.5, 0.3, 0.2], [0.1, 0.1, 0.1])
        s = FeatureVector.from_entries([1.0, None, 3.0])
        grad = policy_derivative(z, s, LinkKind.CASE_B, Action.APPROVED)
        assert grad[1] == 0.0 and grad[4] == 0.0
        assert np.all(grad[[0, 2, 3, 5]] > 0)

    @pytest.mark.parametrize('kind', list(LinkKind))
    def test_exact_gradient_against_finite_differences(self, kind):
        rng = np.random.default_rng(0)
        z = rng.uniform(0.2, 1.0, 8)
        s = FeatureVector.from_entries([1.5, None, 0.25, 3.0])
        grad = evaluate_policy(PolicyParams.from_vector(z), s, kind).grad_p
        h = 1e-6
        for k in range(z.size):
            up, down = z.copy(), z.copy()
            up[k] += h
            down[k] -= h
            numeric = (evaluate_policy(PolicyParams.from_vector(up), s, kind).p
                       - evaluate_policy(PolicyParams.from_vector(down), s, kind).p) / (2 * h)
            assert grad[k] == pytest.approx(numeric, abs=1e-7)

    def test_batch_matches_single(self):
        z = params([0.5, 1.0], [0.1, 0.2])
        X = np.array([[2.0, np.nan], [2.0, 1.0], [np.nan, np.nan]])
        q, p, grad = approval_gradient_batch(z.vector, X, LinkKind.CASE_A)
        for i in range(3):
            single = evaluate_policy(z, FeatureVector(X[i]), LinkKind.CASE_A)
            assert q[i] == pytest.approx(single.q)
            assert p[i] == pytest.approx(single.p)
            np.testing.assert_allclose(grad[i], single.grad_p)


class TestSampling:
    def test_certain_outcomes(self, rng):
        assert sample_decision(1.0, rng) is Action.APPROVED
        assert sample_decision(0.0, rng) is Action.REJECTED

    def test_probability_outside_unit_interval(self, rng):
        with pytest.raises(ContractViolation):
            sample_decision(1.2, rng)
        with pytest.raises(ContractViolation):
            sample_decisions(np.array([0.5, -0.1]), rng)

    def test_fair_coin(self):
        approved = sample_decisions(np.full(100_000, 0.5), np.random.default_rng(2024))
        assert abs(approved.mean() - 0.5) < 0.01
