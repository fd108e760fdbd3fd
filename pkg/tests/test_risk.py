import numpy as np
import pytest
import scipy.stats
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from carbonsched.planner import InfeasibleError
from carbonsched.risk import (
    DiscreteDistribution,
    SupportSet,
    build_support_set,
    calibrate_radius,
    empirical_cvar,
    violation_rate,
    wasserstein_discrete,
)
from oracles import cvar_direct, cvar_grid, tail_mean

values_st = st.lists(st.floats(-100, 100, allow_nan=False), min_size=1, max_size=40)
beta_st = st.floats(0.01, 1.0)


# -- CVaR -----------------------------------------------------------------------


def test_cvar_constant_values():
    for beta in (0.05, 0.3, 1.0):
        assert empirical_cvar([2.5] * 7, beta) == pytest.approx(2.5, abs=1e-15)


def test_cvar_one_to_ten():
    values = np.arange(1, 11)
    assert empirical_cvar(values, 0.2) == pytest.approx(9.5, abs=1e-12)
    assert cvar_grid(values, 0.2) == pytest.approx(9.5, abs=1e-3)
    assert tail_mean(values, 0.2) == 9.5
    assert empirical_cvar(values, 1.0) == pytest.approx(5.5, abs=1e-12)


def test_cvar_rejects_bad_input():
    with pytest.raises(ValueError):
        empirical_cvar([], 0.5)
    with pytest.raises(ValueError):
        empirical_cvar([1.0], 0.0)
    with pytest.raises(ValueError):
        empirical_cvar([1.0], 1.2)


def test_cvar_weighted_matches_replicated():
    x = np.array([3.0, -1.0, 4.0])
    w = np.array([0.5, 0.25, 0.25])
    rep = [3.0, 3.0, -1.0, 4.0]
    assert empirical_cvar(x, 0.3, w) == pytest.approx(empirical_cvar(rep, 0.3), abs=1e-12)


@given(values_st, beta_st)
def test_cvar_matches_direct_formula(values, beta):
    assert empirical_cvar(values, beta) == pytest.approx(cvar_direct(values, beta), abs=1e-9, rel=1e-9)


@given(values_st)
def test_cvar_at_one_over_n_is_max(values):
    assume(len(set(values)) == len(values))
    assert empirical_cvar(values, 1.0 / len(values)) == pytest.approx(max(values), abs=1e-9)


@given(values_st, beta_st, beta_st)
def test_cvar_nonincreasing_in_beta(values, b1, b2):
    lo, hi = sorted((b1, b2))
    assert empirical_cvar(values, hi) <= empirical_cvar(values, lo) + 1e-9


@given(values_st, beta_st, st.floats(-50, 50), st.floats(0, 20))
def test_cvar_translation_and_homogeneity(values, beta, a, alpha):
    x = np.asarray(values)
    base = empirical_cvar(x, beta)
    assert empirical_cvar(x + a, beta) == pytest.approx(base + a, abs=1e-8)
    assert empirical_cvar(alpha * x, beta) == pytest.approx(alpha * base, abs=1e-7)


@given(values_st, beta_st)
def test_cvar_between_mean_and_max(values, beta):
    c = empirical_cvar(values, beta)
    assert np.mean(values) - 1e-9 <= c <= max(values) + 1e-9


# -- Wasserstein ----------------------------------------------------------------


def test_wasserstein_identical_is_zero():
    P = DiscreteDistribution.empirical(np.array([[0.0, 1.0], [2.0, 3.0]]))
    assert wasserstein_discrete(P, P) == pytest.approx(0.0, abs=1e-12)


def test_wasserstein_dirac_pair_is_norm():
    s1, s2 = np.array([0.1, 0.5, -0.2]), np.array([0.4, 0.1, 0.3])
    d = wasserstein_discrete(DiscreteDistribution.dirac(s1), DiscreteDistribution.dirac(s2))
    assert d == pytest.approx(np.abs(s1 - s2).sum(), abs=1e-12)
    d2 = wasserstein_discrete(DiscreteDistribution.dirac(s1), DiscreteDistribution.dirac(s2), norm=2)
    assert d2 == pytest.approx(np.linalg.norm(s1 - s2), abs=1e-9)


def test_wasserstein_uniform_vs_dirac():
    P = DiscreteDistribution(np.array([0.0, 2.0]), np.array([0.5, 0.5]))
    Q = DiscreteDistribution.dirac([1.0])
    assert wasserstein_discrete(P, Q) == pytest.approx(1.0, abs=1e-12)


def test_wasserstein_rejects_mismatch():
    with pytest.raises(ValueError):
        wasserstein_discrete(DiscreteDistribution.dirac([1.0]), DiscreteDistribution.dirac([1.0, 2.0]))
    with pytest.raises(ValueError):
        DiscreteDistribution(np.array([0.0, 1.0]), np.array([0.5, 0.4]))
    with pytest.raises(ValueError):
        DiscreteDistribution(np.array([0.0, 1.0]), np.array([1.5, -0.5]))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_wasserstein_matches_scipy_in_one_dimension(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=rng.integers(1, 6)), rng.normal(size=rng.integers(1, 6))
    wa, wb = rng.random(a.size) + 0.1, rng.random(b.size) + 0.1
    wa, wb = wa / wa.sum(), wb / wb.sum()
    got = wasserstein_discrete(DiscreteDistribution(a, wa), DiscreteDistribution(b, wb))
    assert got == pytest.approx(scipy.stats.wasserstein_distance(a, b, wa, wb), abs=1e-8)


def _random_dist(rng, dim):
    n = int(rng.integers(1, 5))
    w = rng.random(n) + 0.05
    return DiscreteDistribution(rng.normal(size=(n, dim)), w / w.sum())


def test_wasserstein_metric_axioms_random_triples():
    rng = np.random.default_rng(2024)
    for _ in range(50):
        dim = int(rng.integers(1, 4))
        P, Q, R = (_random_dist(rng, dim) for _ in range(3))
        pq, qp = wasserstein_discrete(P, Q), wasserstein_discrete(Q, P)
        assert abs(pq - qp) <= 1e-8
        assert pq <= wasserstein_discrete(P, R) + wasserstein_discrete(R, Q) + 1e-8


# -- support sets -----------------------------------------------------------------


def test_box_support_upper_bound():
    samples = np.array([[[0.2, 0.1]], [[0.1, 0.3]]])
    S = build_support_set(samples, margin=0.5)
    assert S.g == 4 and S.kind == "box"
    # coordinate (k=1, c=1) upper row: s_11 <= 1.5 * 0.2
    assert S.h[2] == pytest.approx(0.3)
    assert S.G[2, 0] == 1.0 and S.G[0, 0] == -1.0


def test_sum_support_shape():
    rng = np.random.default_rng(0)
    samples = rng.random((5, 3, 2))
    S = build_support_set(samples, margin=0.2, kind="sum")
    assert S.g == 3 * 2 + 1
    assert S.contains(samples).all()


def test_zero_margin_boundary_sample():
    samples = np.array([[[0.2, 0.1]], [[0.1, 0.3]]])
    S = build_support_set(samples, margin=0.0)
    assert S.contains(samples).all()
    assert (S.slack(samples).min(axis=1) == 0).all()


def test_support_rejects_outside_and_bad_margin():
    with pytest.raises(ValueError):
        build_support_set(np.ones((2, 2, 2)), margin=-0.1)
    with pytest.raises(ValueError):
        build_support_set(np.ones((2, 2, 2)), kind="ellipsoid")
    with pytest.raises(ValueError):
        SupportSet(np.eye(2), np.ones(3), (1, 2))


@given(st.integers(0, 2**32 - 1), st.floats(0, 2), st.sampled_from(["box", "sum"]))
def test_support_contains_every_sample(seed, margin, kind):
    rng = np.random.default_rng(seed)
    samples = rng.random((int(rng.integers(1, 8)), 3, 2))
    assert build_support_set(samples, margin, kind).contains(samples).all()


# -- calibration -----------------------------------------------------------------


def test_calibrate_target_one_picks_smallest(ci_config, ci_train, ci_validation):
    res = calibrate_radius(ci_train.values, ci_validation.values, [0.0, 1e-3, 1e-2], 1.0, ci_config)
    assert res.qualified and res.epsilon == 0.0
    assert [r["epsilon"] for r in res.table] == [0.0, 1e-3, 1e-2]


def test_calibrate_in_sample_holdout(ci_config, ci_train):
    res = calibrate_radius(ci_train.values, ci_train.values, [0.0, 1e-3, 1e-2], ci_config.beta, ci_config)
    assert res.qualified and res.epsilon == 0.0


def test_calibrate_shifted_holdout_not_qualified(ci_config, ci_train):
    shifted = ci_train.values * 1.5
    res = calibrate_radius(ci_train.values, shifted, [0.0], 0.05, ci_config)
    assert not res.qualified and res.epsilon == 0.0
    assert res.table[0]["holdout_violation_rate"] > 0.05


def test_calibrate_shift_needs_larger_radius(ci_config, ci_train, ci_validation):
    grid = [0.0, 1e-3, 1e-2, 5e-2]
    near = calibrate_radius(ci_train.values, ci_validation.values, grid, 0.1, ci_config)
    far = calibrate_radius(ci_train.values, ci_validation.values * 1.1, grid, 0.1, ci_config)
    assert far.epsilon > near.epsilon


def test_calibrate_bad_grid(ci_config, ci_train):
    with pytest.raises(ValueError):
        calibrate_radius(ci_train.values, ci_train.values, [], 0.1, ci_config)
    with pytest.raises(ValueError):
        calibrate_radius(ci_train.values, ci_train.values, [1e-2, 0.0], 0.1, ci_config)
    with pytest.raises(ValueError):
        calibrate_radius(ci_train.values, ci_train.values, [0.0], 1.5, ci_config)


def test_calibrate_infeasible_names_epsilon(ci_config, ci_train):
    tight = ci_config.with_risk()
    tight = type(tight)(
        K=tight.K,
        D=tight.D,
        classes=tight.classes,
        true_capacity=np.full((tight.T, tight.D), 0.01),
        carbon_price=tight.carbon_price,
        infra_price=tight.infra_price,
    )
    with pytest.raises(InfeasibleError) as err:
        calibrate_radius(ci_train.values, ci_train.values, [1e-3], 0.1, tight)
    assert err.value.details["epsilon"] == 1e-3


def test_violation_rate_counts_scenarios(ci_config, ci_train):
    from carbonsched.planner import plan_saa

    plan = plan_saa(ci_config, ci_train.values)
    assert violation_rate(plan, ci_train.values) <= ci_config.beta + 1e-12
    assert violation_rate(plan, ci_train.values * 3) == 1.0


def test_zero_margin_sum_support_keeps_each_sample():
    # the bound and the membership test must round the same way
    for seed in range(200):
        rng = np.random.default_rng(seed)
        samples = rng.random((int(rng.integers(1, 8)), 3, 2))
        S = build_support_set(samples, 0.0, "sum")
        assert all(S.contains(s) for s in samples)
