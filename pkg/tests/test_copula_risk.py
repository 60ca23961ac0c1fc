import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.special import ndtr
from scipy.stats import norm

from src.copula_risk import (
    CorrelationModel,
    ProbabilityCache,
    build_covariance,
    calibrate_marginal,
    contingency_joint,
    contingency_probability,
    correlation,
    frechet_bounds,
    joint_outage_probability,
)
from src.errors import DomainError, NotRepairable, ToleranceNotMet, ValidationError
from src.grid_model import apply_probabilities, rate_to_probability
from src.mvn import bvnu, orthant_probability_mc


def same_place(a, b):
    return 0.0


@pytest.mark.parametrize("p", [1e-6, 1.045e-4, 0.01, 0.3, 0.499])
def test_marginal_calibration(p):
    marginal = calibrate_marginal(p)
    assert marginal.mu == 1.0
    assert marginal.sigma > 0
    assert marginal.cdf_at_zero() == pytest.approx(p, rel=1e-12)


@pytest.mark.parametrize("p", [0.0, 0.5, 0.7, -0.1])
def test_marginal_domain(p):
    with pytest.raises(DomainError):
        calibrate_marginal(p)


def test_correlation_decay():
    model = CorrelationModel(0.5, 100.0)
    assert correlation(model, 0.0) == 0.5
    assert correlation(model, 100.0) == pytest.approx(0.5 / math.e)
    assert correlation(CorrelationModel(0.0, 100.0), 0.0) == 0.0


def test_zero_reach_correlates_only_coincident_branches():
    model = CorrelationModel(0.7, 0.0)
    assert correlation(model, 0.0) == 0.7
    assert correlation(model, 1e-3) == 0.0


@pytest.mark.parametrize("rho0,L", [(1.0, 10.0), (-0.1, 10.0), (0.5, -1.0)])
def test_model_validation(rho0, L):
    with pytest.raises(ValidationError):
        CorrelationModel(rho0, L)


def test_covariance_requires_distance():
    marginals = [calibrate_marginal(0.01)] * 2
    with pytest.raises(ValidationError, match="bind"):
        build_covariance(marginals, CorrelationModel(0.5, 10.0), (1, 2))


@pytest.mark.parametrize("k", [1, 6])
def test_covariance_size_limits(k):
    with pytest.raises(ValidationError):
        build_covariance([calibrate_marginal(0.01)] * k, CorrelationModel(0.0, 10.0), tuple(range(k)))


def test_covariance_entries():
    marginals = [calibrate_marginal(0.01), calibrate_marginal(0.02)]
    cov = build_covariance(marginals, CorrelationModel(0.4, 10.0, distance=same_place), (1, 2))
    s1, s2 = marginals[0].sigma, marginals[1].sigma
    np.testing.assert_allclose(cov.matrix, [[s1 * s1, 0.4 * s1 * s2], [0.4 * s1 * s2, s2 * s2]])
    np.testing.assert_allclose(cov.correlation, [[1.0, 0.4], [0.4, 1.0]])
    assert not cov.repaired


def test_indefinite_covariance_not_repairable():
    def distance(a, b):
        return 1e6 if (a, b) == (2, 3) else 0.0

    marginals = [calibrate_marginal(0.01)] * 3
    with pytest.raises(NotRepairable):
        build_covariance(marginals, CorrelationModel(0.9, 1.0, distance=distance), (1, 2, 3))


def test_frechet_bounds():
    assert frechet_bounds([0.2, 0.3]) == (0.0, 0.2)
    assert frechet_bounds([0.9, 0.8]) == pytest.approx((0.7, 0.8))


def test_independent_pair_is_product(stress_case):
    p = stress_case.branch_probability(11)
    joint = contingency_joint(stress_case, (11, 21), CorrelationModel(0.0, 50.0))
    assert joint.value == pytest.approx(p * p, rel=1e-12)
    assert joint.method == "bivariate"
    assert joint.tolerance_met


def test_pair_matches_bivariate_normal(stress_case):
    p = stress_case.branch_probability(11)
    h = -1.0 / calibrate_marginal(p).sigma
    joint = contingency_joint(stress_case, (12, 11), CorrelationModel(0.6, 50.0))
    assert joint.value == pytest.approx(bvnu(-h, -h, 0.6), rel=1e-12)
    assert p * p < joint.value <= p


def test_joint_probability_increases_with_rho0(stress_case):
    values = [contingency_probability(stress_case, (19, 20), CorrelationModel(r, 100.0)) for r in (0.0, 0.3, 0.6, 0.9)]
    assert values == sorted(values)
    assert values[0] < values[-1]


def test_triple_against_quadrature(stress_case):
    rho = 0.4
    p = stress_case.branch_probability(28)
    h = -1.0 / calibrate_marginal(p).sigma
    a, b = math.sqrt(rho), math.sqrt(1.0 - rho)
    expected, _ = quad(lambda z: norm.pdf(z) * ndtr((h - a * z) / b) ** 3, -12, 12, epsabs=1e-18, epsrel=1e-10, limit=200)
    joint = contingency_joint(stress_case, (28, 29, 30), CorrelationModel(rho, 10.0, distance=same_place))
    assert joint.method == "lattice"
    assert joint.value == pytest.approx(expected, rel=1e-2)


def test_strict_tolerance(stress_case):
    model = CorrelationModel(0.5, 10.0, distance=same_place)
    with pytest.raises(ToleranceNotMet):
        contingency_joint(stress_case, (28, 29, 30), model, abs_tol=1e-30, rel_tol=1e-30, strict=True)


def test_lenient_tolerance_flags_result(stress_case, caplog):
    model = CorrelationModel(0.5, 10.0, distance=same_place)
    joint = contingency_joint(stress_case, (28, 29, 30), model, abs_tol=1e-30, rel_tol=1e-30)
    assert not joint.tolerance_met
    assert "exceeds target" in caplog.text


def test_covariance_dimension_checked():
    marginals = [calibrate_marginal(0.01)] * 3
    cov = build_covariance(marginals[:2], CorrelationModel(0.0, 1.0), (1, 2))
    with pytest.raises(ValidationError):
        joint_outage_probability(marginals, cov)


def test_repeated_branch_rejected(stress_case):
    with pytest.raises(ValidationError):
        contingency_joint(stress_case, (11, 11), CorrelationModel(0.0, 1.0))


def test_zero_marginal(stress_case):
    case = apply_probabilities(stress_case, {11: 0.0})
    joint = contingency_joint(case, (11, 12), CorrelationModel(0.5, 10.0))
    assert joint.value == 0.0
    assert joint.method == "zero-marginal"


def test_probability_cache(stress_case):
    cache = ProbabilityCache(stress_case)
    model = CorrelationModel(0.5, 50.0)
    first = cache.probability((12, 11), model)
    second = cache.probability((11, 12), model)
    assert first == second
    assert cache.hits == 1
    assert len(cache) == 1
    cache.probability((11, 12), CorrelationModel(0.5, 100.0))
    assert len(cache) == 2


def test_marginal_calibration_round_trip():
    rng = np.random.default_rng(17)
    for p in np.exp(rng.uniform(math.log(1e-8), math.log(0.499), size=1000)):
        assert calibrate_marginal(p).cdf_at_zero() == pytest.approx(p, rel=1e-12)


def test_rate_to_probability_is_linear_and_monotone():
    rates = np.sort(np.random.default_rng(23).uniform(0.0, 100.0, size=1000))
    probabilities = [rate_to_probability(r) for r in rates]
    assert probabilities == sorted(probabilities)
    np.testing.assert_allclose(probabilities, rates / 8760.0, rtol=1e-12)


def line_distance(positions):
    def distance(a, b):
        return abs(positions[a] - positions[b])
    return distance


def test_joint_symmetric_under_branch_order():
    marginals = [calibrate_marginal(p) for p in (0.03, 0.1, 0.2)]
    model = CorrelationModel(0.6, 100.0, distance=line_distance({1: 0.0, 2: 40.0, 3: 150.0}))
    reference = joint_outage_probability(marginals, build_covariance(marginals, model, (1, 2, 3)))
    for order in [(2, 0, 1), (1, 2, 0), (2, 1, 0)]:
        permuted = [marginals[i] for i in order]
        branches = tuple(i + 1 for i in order)
        joint = joint_outage_probability(permuted, build_covariance(permuted, model, branches))
        tolerance = 3.0 * (joint.abs_error_estimate + reference.abs_error_estimate) + 1e-15
        assert abs(joint.value - reference.value) <= tolerance


def test_contingency_joint_ignores_listing_order(stress_case):
    model = CorrelationModel(0.4, 100.0)
    assert contingency_joint(stress_case, (30, 11, 21), model).value == contingency_joint(stress_case, (21, 30, 11), model).value


def test_independent_branch_factors_out():
    marginals = [calibrate_marginal(p) for p in (0.05, 0.1, 0.2)]

    def distance(a, b):
        return 0.0 if {a, b} == {1, 2} else 1e9

    cov = build_covariance(marginals, CorrelationModel(0.5, 10.0, distance=distance), (1, 2, 3))
    assert cov.correlation[0, 2] == 0.0
    joint = joint_outage_probability(marginals, cov)
    h1, h2 = marginals[0].threshold, marginals[1].threshold
    expected = 0.2 * bvnu(-h1, -h2, 0.5)
    assert joint.value == pytest.approx(expected, abs=1e-8)
    assert joint.value == pytest.approx(expected, rel=1e-2)


def test_independent_triple_is_product(stress_case):
    p = [stress_case.branch_probability(b) for b in (11, 21, 30)]
    joint = contingency_joint(stress_case, (11, 21, 30), CorrelationModel(0.0, 100.0))
    assert joint.value == pytest.approx(p[0] * p[1] * p[2], abs=1e-8, rel=1e-6)
    assert joint.tolerance_met


def test_rare_triple_meets_absolute_target(caplog):
    marginals = [calibrate_marginal(1e-4)] * 3
    cov = build_covariance(marginals, CorrelationModel(0.1, 10.0, distance=same_place), (1, 2, 3))
    joint = joint_outage_probability(marginals, cov)
    assert joint.tolerance_met
    assert 1e-12 < joint.value < 1e-4
    assert "exceeds target" not in caplog.text


def random_fixture(k, index):
    """Marginals and covariance from an exponential kernel over random points on a line."""
    rng = np.random.default_rng([31, k, index])
    marginals = [calibrate_marginal(p) for p in rng.uniform(0.05, 0.3, size=k)]
    positions = dict(enumerate(rng.uniform(0.0, 300.0, size=k)))
    model = CorrelationModel(rng.uniform(0.0, 0.9), rng.uniform(50.0, 300.0), distance=line_distance(positions))
    return marginals, build_covariance(marginals, model, tuple(range(k))), rng


@pytest.mark.parametrize("k,index", [(2, i) for i in range(50)] + [(3, i) for i in range(25)])
def test_joint_agrees_with_monte_carlo(k, index):
    marginals, cov, rng = random_fixture(k, index)
    joint = joint_outage_probability(marginals, cov)
    estimate, standard_error = orthant_probability_mc(np.ones(k), cov.matrix, 400_000, rng)
    assert abs(joint.value - estimate) <= 4.0 * standard_error + joint.abs_error_estimate
