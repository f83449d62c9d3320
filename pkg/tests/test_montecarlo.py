"""Monte Carlo estimators: determinism, estimator validity, accounting."""

import math

import numpy as np
import pytest

from qcdetect import (
    ChangeSpec,
    Detector,
    DetectorConfig,
    GridSpec,
    InfeasibleHorizonError,
    MCConfig,
    PriorSpec,
    Scenario,
    SubsetWeights,
    estimate_average_risk,
    estimate_bayes_delay,
    estimate_conditional_delay,
    estimate_pfa,
    gaussian_stream,
    simulate_runs,
    threshold_shiryaev,
    threshold_sr,
)
from qcdetect.montecarlo import (
    FixedChangeSampler,
    JointSampler,
    MCEstimate,
    NoChangeSampler,
    estimate_pfa_naive,
)


def make_detector(kind="shiryaev-mixture", threshold=19.0, theta=1.0, rho=0.1, omega=0.0):
    scenario = Scenario((gaussian_stream(theta=theta),))
    grid = GridSpec.degenerate((theta,))
    weights = SubsetWeights.uniform(1)
    prior = PriorSpec.geometric(rho=rho)
    config = DetectorConfig(kind=kind, threshold_A=threshold, head_start_omega=omega)
    return Detector(config, scenario, prior, grid, weights)


def test_mc_config_validation():
    with pytest.raises(ValueError):
        MCConfig(replications=0, master_seed=0, horizon=10)
    with pytest.raises(ValueError):
        MCConfig(replications=10, master_seed=0, horizon=0)
    with pytest.raises(ValueError):
        MCConfig(replications=10, master_seed=0, horizon=10, workers=0)
    with pytest.raises(ValueError):
        MCConfig(replications=10, master_seed=-1, horizon=10)


def test_mc_estimate_from_values():
    est = MCEstimate.from_values([1.0, 2.0, 3.0])
    assert est.mean == 2.0
    assert est.stderr == pytest.approx(1.0 / math.sqrt(3))
    assert est.n_effective == 3
    empty = MCEstimate.from_values([])
    assert math.isnan(empty.mean) and empty.n_effective == 0


def test_simulate_runs_is_deterministic_across_worker_counts():
    detector = make_detector()
    base = dict(replications=2500, master_seed=21, horizon=120)
    r1 = simulate_runs(detector, MCConfig(workers=1, **base), NoChangeSampler())
    r3 = simulate_runs(detector, MCConfig(workers=3, **base), NoChangeSampler())
    np.testing.assert_array_equal(r1.stopped, r3.stopped)
    np.testing.assert_array_equal(r1.nu, r3.nu)


def test_estimates_identical_across_worker_counts():
    detector = make_detector()
    base = dict(replications=2500, master_seed=21, horizon=150)
    e1 = estimate_pfa(detector, MCConfig(workers=1, **base), alpha=0.05)
    e2 = estimate_pfa(detector, MCConfig(workers=2, **base), alpha=0.05)
    assert e1 == e2


def test_pfa_bound_small_case():
    detector = make_detector(threshold=19.0)  # alpha = 0.05
    mc = MCConfig(replications=3000, master_seed=9, horizon=300)
    est = estimate_pfa(detector, mc)
    assert est.mean <= 0.05 + 3 * est.stderr
    assert est.censored_fraction == 0.0


def test_pfa_sr_bound_small_case():
    prior = PriorSpec.geometric(rho=0.1)
    a = threshold_sr(0.05, 0.0, prior)  # mean(nu) = 9 -> A = 180
    detector = make_detector(kind="sr-mixture", threshold=a)
    mc = MCConfig(replications=3000, master_seed=10, horizon=300)
    est = estimate_pfa(detector, mc)
    assert est.mean <= 0.05 + 3 * est.stderr


def test_pfa_matches_naive_two_stage_sampler():
    detector = make_detector(threshold=19.0)
    mc = MCConfig(replications=4000, master_seed=9, horizon=300)
    rb = estimate_pfa(detector, mc)
    naive = estimate_pfa_naive(detector, mc, (0,), (1.0,))
    joint_se = math.hypot(rb.stderr, naive.stderr)
    assert abs(rb.mean - naive.mean) <= 3 * joint_se


def test_pfa_huge_threshold_reduces_to_tail_surrogate():
    detector = make_detector(threshold=1e12)
    mc = MCConfig(replications=200, master_seed=2, horizon=100)
    est = estimate_pfa(detector, mc, alpha=0.5)
    tail = detector.prior.tail(101)
    assert est.mean == pytest.approx(tail, rel=1e-12)
    assert est.mean < 1e-3


def test_pfa_infeasible_horizon_raises():
    detector = make_detector(threshold=1e12, rho=0.01)
    mc = MCConfig(replications=50, master_seed=3, horizon=20)
    with pytest.raises(InfeasibleHorizonError):
        estimate_pfa(detector, mc, alpha=0.01)


def test_pfa_stderr_scales_with_replications():
    detector = make_detector(threshold=19.0)
    small = estimate_pfa(
        detector, MCConfig(replications=1000, master_seed=5, horizon=200)
    )
    large = estimate_pfa(
        detector, MCConfig(replications=4000, master_seed=5, horizon=200)
    )
    assert 1.5 <= small.stderr / large.stderr <= 2.6


def test_conditional_delay_immediate_detection():
    detector = make_detector(theta=20.0, threshold=2.0)
    mc = MCConfig(replications=200, master_seed=4, horizon=50)
    change = ChangeSpec(nu=0, subset=(0,))
    for r in (1, 2):
        est = estimate_conditional_delay(detector, change, r, mc)
        assert est.mean == 1.0
        assert est.censored_fraction == 0.0


def test_delay_moments_satisfy_jensen():
    detector = make_detector(threshold=99.0)
    mc = MCConfig(replications=1500, master_seed=6, horizon=400)
    change = ChangeSpec(nu=10, subset=(0,))
    first = estimate_conditional_delay(detector, change, 1, mc)
    second = estimate_conditional_delay(detector, change, 2, mc)
    assert second.mean >= first.mean**2 - 3 * second.stderr


def test_conditional_delay_tracks_first_order_rate():
    # change at k=100 so the prior has partly resolved; alpha = 1e-3
    detector = make_detector(threshold=threshold_shiryaev(1e-3), rho=0.01)
    mc = MCConfig(replications=2000, master_seed=5, horizon=600)
    est = estimate_conditional_delay(detector, ChangeSpec(nu=100, subset=(0,)), 1, mc)
    first_order = abs(math.log(1e-3)) / (0.5 + detector.prior.tail_rate)
    assert 0.8 * first_order <= est.mean <= 1.6 * first_order


def test_bayes_delay_tracks_first_order_rate():
    detector = make_detector(threshold=threshold_shiryaev(1e-3), rho=0.01)
    mc = MCConfig(replications=2000, master_seed=7, horizon=1800)
    est = estimate_bayes_delay(detector, (0,), (1.0,), 1, mc)
    first_order = abs(math.log(1e-3)) / (0.5 + detector.prior.tail_rate)
    assert 0.8 * first_order <= est.mean <= 1.6 * first_order
    assert est.censored_fraction < 0.01


def test_bayes_delay_satisfies_jensen():
    detector = make_detector(threshold=49.0)
    mc = MCConfig(replications=1500, master_seed=8, horizon=800)
    first = estimate_bayes_delay(detector, (0,), (1.0,), 1, mc)
    second = estimate_bayes_delay(detector, (0,), (1.0,), 2, mc)
    assert second.mean >= first.mean**2 - 3 * second.stderr


def test_average_risk_with_zero_cost_is_false_alarm_rate():
    detector = make_detector(threshold=9.0)
    mc = MCConfig(replications=2000, master_seed=12, horizon=600)
    risk = estimate_average_risk(detector, 0.0, 1, mc)
    naive = estimate_pfa_naive(detector, mc, (0,), (1.0,))
    joint_se = math.hypot(risk.stderr, naive.stderr)
    assert abs(risk.mean - naive.mean) <= 3 * joint_se


def test_average_risk_never_stopping_limit():
    # threshold far above anything the statistic can reach inside the horizon
    detector = make_detector(threshold=1e90)
    mc = MCConfig(replications=300, master_seed=13, horizon=200)
    risk = estimate_average_risk(detector, 1.0, 1, mc)
    # nothing stops, so every replication is censored and flagged
    assert risk.censored_fraction == 1.0
    assert risk.n_effective == 0


def test_joint_sampler_draws_match_mixture_weights():
    scenario = Scenario((gaussian_stream(theta=1.0), gaussian_stream(theta=1.0)))
    grid = GridSpec.common_amplitude([0.5, 1.0], 2, weights=(0.25, 0.75))
    weights = SubsetWeights.uniform(2, 2)
    prior = PriorSpec.geometric(rho=0.1)
    detector = Detector(
        DetectorConfig(kind="shiryaev-mixture", threshold_A=5.0),
        scenario, prior, grid, weights,
    )
    sampler = JointSampler.for_detector(detector)
    mc = MCConfig(replications=6000, master_seed=14, horizon=2)
    records = simulate_runs(detector, mc, sampler)
    # subsets are uniform (1/3 each), grid points carry weights (0.25, 0.75)
    for b in range(3):
        share = (records.subset_id == b).mean()
        assert abs(share - 1 / 3) <= 3 * math.sqrt((1 / 3) * (2 / 3) / 6000)
    share = (records.point_id == 1).mean()
    assert abs(share - 0.75) <= 3 * math.sqrt(0.75 * 0.25 / 6000)


def test_fixed_change_sampler_records_nu():
    detector = make_detector(threshold=1e6)
    mc = MCConfig(replications=10, master_seed=15, horizon=20)
    records = simulate_runs(detector, mc, FixedChangeSampler(ChangeSpec(nu=4, subset=(0,))))
    assert np.all(records.nu == 4)


def test_moment_order_validated():
    detector = make_detector()
    mc = MCConfig(replications=10, master_seed=16, horizon=20)
    with pytest.raises(ValueError):
        estimate_conditional_delay(detector, ChangeSpec(nu=0, subset=(0,)), 0.5, mc)
    with pytest.raises(ValueError):
        estimate_bayes_delay(detector, (0,), (1.0,), 0.0, mc)
    with pytest.raises(ValueError):
        estimate_average_risk(detector, -1.0, 1, mc)
