"""Prior distributions, change specs, and data generation."""

import math

import numpy as np
import pytest

from qcdetect import (
    ChangeSpec,
    NO_CHANGE,
    ObservationBatch,
    PriorSpec,
    Scenario,
    gaussian_stream,
    generate,
    prior_mass,
    prior_tail,
    replication_rng,
    sample_change,
)
from qcdetect.scenarios import ARChannelSpec


def test_geometric_mass_head():
    prior = PriorSpec.geometric(rho=0.5)
    assert prior_mass(prior, 0) == 0.5


def test_geometric_mass_with_head_mass():
    # (1-q) * rho * (1-rho)^k = 0.5 * 0.5 * 0.5
    prior = PriorSpec.geometric(rho=0.5, q=0.5)
    assert prior_mass(prior, 1) == pytest.approx(0.125, abs=1e-15)


def test_polynomial_tail_zeta_normalizer():
    # sum (k+1)^-2 = pi^2/6, so pi_0 = 6/pi^2
    prior = PriorSpec.polynomial_tail(beta=1.0)
    assert prior_mass(prior, 0) == pytest.approx(6.0 / math.pi**2, abs=1e-12)


def test_geometric_tail_values():
    prior = PriorSpec.geometric(rho=0.5)
    assert prior_tail(prior, 0) == 1.0
    assert prior_tail(prior, 2) == pytest.approx(0.25, abs=1e-15)


def test_tail_at_zero_is_one_minus_head_mass():
    for prior in (
        PriorSpec.geometric(rho=0.3, q=0.3),
        PriorSpec.polynomial_tail(beta=1.5, q=0.3),
        PriorSpec.point_mass(4, q=0.3),
    ):
        assert prior_tail(prior, 0) == pytest.approx(0.7, abs=1e-15)


@pytest.mark.parametrize(
    "prior",
    [
        PriorSpec.geometric(rho=0.2),
        PriorSpec.geometric(rho=0.05, q=0.25),
        PriorSpec.polynomial_tail(beta=0.8),
        PriorSpec.polynomial_tail(beta=2.5, q=0.1),
        PriorSpec.point_mass(7, q=0.05),
    ],
)
def test_mass_sums_to_one_with_analytic_tail(prior):
    partial = sum(prior.mass(k) for k in range(10_001))
    total = partial + prior.tail(10_001) + prior.q
    assert total == pytest.approx(1.0, abs=1e-10)


@pytest.mark.parametrize(
    "prior",
    [
        PriorSpec.geometric(rho=0.2, q=0.1),
        PriorSpec.polynomial_tail(beta=1.2),
        PriorSpec.point_mass(500),
    ],
)
def test_tail_differences_recover_mass(prior):
    for n in range(1000):
        assert prior.tail(n) - prior.tail(n + 1) == pytest.approx(
            prior.mass(n), abs=1e-12
        )


def test_geometric_tail_rate_matches_log_tail_slope():
    prior = PriorSpec.geometric(rho=0.3)
    n = 1000
    assert abs(prior.log_tail(n)) / n == pytest.approx(
        abs(math.log1p(-0.3)), abs=1e-6
    )
    assert prior.tail_rate == pytest.approx(abs(math.log1p(-0.3)))


def test_polynomial_tail_rate_is_zero():
    assert PriorSpec.polynomial_tail(beta=1.0).tail_rate == 0.0


def test_point_mass_has_no_tail_rate():
    with pytest.raises(ValueError):
        PriorSpec.point_mass(3).tail_rate


def test_prior_means():
    assert PriorSpec.geometric(rho=0.1).mean() == pytest.approx(9.0)
    assert PriorSpec.point_mass(5).mean() == 5.0
    assert math.isinf(PriorSpec.polynomial_tail(beta=1.0).mean())
    # sum k (k+1)^-(1+b) / zeta(1+b) = (zeta(b) - zeta(1+b)) / zeta(1+b)
    from scipy.special import zeta

    beta = 2.0
    expected = (zeta(beta) - zeta(1 + beta)) / zeta(1 + beta)
    assert PriorSpec.polynomial_tail(beta=beta).mean() == pytest.approx(expected, rel=1e-12)


def test_invalid_priors_rejected():
    with pytest.raises(ValueError):
        PriorSpec.geometric(rho=0.0)
    with pytest.raises(ValueError):
        PriorSpec.geometric(rho=0.5, q=1.0)
    with pytest.raises(ValueError):
        PriorSpec.polynomial_tail(beta=0.0)
    with pytest.raises(ValueError):
        PriorSpec.point_mass(-1)


def test_sample_point_mass_is_degenerate():
    rng = np.random.default_rng(0)
    prior = PriorSpec.point_mass(5)
    assert all(sample_change(prior, rng) == 5 for _ in range(10))


def test_sample_near_degenerate_geometric():
    rng = np.random.default_rng(0)
    prior = PriorSpec.geometric(rho=1.0 - 1e-15)
    assert all(sample_change(prior, rng) == 0 for _ in range(100))


def test_sample_geometric_mean():
    prior = PriorSpec.geometric(rho=0.1)
    rng = np.random.default_rng(2024)
    n = 1_000_000
    values = np.fromiter((prior.sample(rng) for _ in range(n)), dtype=float, count=n)
    se = math.sqrt(0.9) / 0.1 / math.sqrt(n)
    assert abs(values.mean() - 9.0) <= 3 * se


def test_sample_polynomial_tail_matches_masses():
    prior = PriorSpec.polynomial_tail(beta=2.0, q=0.2)
    rng = np.random.default_rng(7)
    n = 50_000
    values = np.fromiter((prior.sample(rng) for _ in range(n)), dtype=float, count=n)
    assert abs((values == -1).mean() - 0.2) <= 3 * math.sqrt(0.2 * 0.8 / n)
    for k in (0, 1, 3):
        p = prior.mass(k)
        assert abs((values == k).mean() - p) <= 4 * math.sqrt(p * (1 - p) / n)


def test_sample_head_mass_frequency():
    prior = PriorSpec.geometric(rho=0.4, q=0.3)
    rng = np.random.default_rng(11)
    n = 50_000
    hits = sum(sample_change(prior, rng) == -1 for _ in range(n))
    assert abs(hits / n - 0.3) <= 3 * math.sqrt(0.3 * 0.7 / n)


# -- generation -----------------------------------------------------------------


def _scenario():
    return Scenario((gaussian_stream(theta=2.0), ARChannelSpec(coeffs=(0.5,), theta=1.0)))


def test_generate_is_reproducible():
    scenario = _scenario()
    change = ChangeSpec(nu=3, subset=(0, 1))
    a = generate(scenario, change, 20, replication_rng(5, 0)).data
    b = generate(scenario, change, 20, replication_rng(5, 0)).data
    np.testing.assert_array_equal(a, b)


def test_change_before_start_equals_change_at_zero():
    # nu = -1 and nu = 0 put every observation post-change
    scenario = _scenario()
    a = generate(scenario, ChangeSpec(nu=-1, subset=(0,)), 15, replication_rng(1, 0)).data
    b = generate(scenario, ChangeSpec(nu=0, subset=(0,)), 15, replication_rng(1, 0)).data
    np.testing.assert_array_equal(a, b)


def test_change_beyond_horizon_is_pure_noise():
    scenario = _scenario()
    with_change = generate(
        scenario, ChangeSpec(nu=50, subset=(0,)), 20, replication_rng(2, 0)
    ).data
    noise = generate(
        scenario, ChangeSpec(NO_CHANGE, ()), 20, replication_rng(2, 0)
    ).data
    np.testing.assert_array_equal(with_change, noise)


def test_zero_amplitude_change_equals_no_change():
    scenario = _scenario()
    a = generate(
        scenario, ChangeSpec(nu=0, subset=(0, 1), theta=(0.0, 0.0)), 25, replication_rng(3, 0)
    ).data
    b = generate(scenario, ChangeSpec(NO_CHANGE, ()), 25, replication_rng(3, 0)).data
    np.testing.assert_array_equal(a, b)


def test_generate_rejects_bad_inputs():
    scenario = _scenario()
    with pytest.raises(ValueError):
        generate(scenario, ChangeSpec(nu=0, subset=(0,)), 0, replication_rng(0, 0))
    with pytest.raises(ValueError):
        generate(scenario, ChangeSpec(nu=0, subset=(5,)), 10, replication_rng(0, 0))


def test_change_spec_validation():
    with pytest.raises(ValueError):
        ChangeSpec(nu=-2, subset=(0,))
    with pytest.raises(ValueError):
        ChangeSpec(nu=0, subset=())
    with pytest.raises(ValueError):
        ChangeSpec(nu=0, subset=(0, 1), theta=(1.0,))
    spec = ChangeSpec(nu=2, subset=(1, 0), theta=(0.5, 1.5))
    assert spec.subset == (0, 1)


def test_observation_batch_requires_finite_matrix():
    with pytest.raises(ValueError):
        ObservationBatch(np.array([[1.0, math.inf]]))
    with pytest.raises(ValueError):
        ObservationBatch(np.zeros(3))
    batch = ObservationBatch(np.zeros((4, 2)))
    assert batch.horizon == 4 and batch.n_streams == 2


def test_replication_rng_counter_keying():
    a = replication_rng(99, 1).normal(size=4)
    b = replication_rng(99, 1).normal(size=4)
    c = replication_rng(99, 2).normal(size=4)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)
