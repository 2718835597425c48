import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rkhs_design import (
    ArmSet,
    KernelSpec,
    RegularizedOperator,
    RobustMeanConfig,
    SampleBatch,
    catoni,
    fit_dual_minmax,
    ips_estimate,
    median_of_means,
    rips_estimate,
    rls_fit,
)
from rkhs_design.errors import ConfigurationError, InsufficientSamplesError
from rkhs_design.estimation import catoni_alpha, catoni_psi, catoni_radius, min_samples, ols_fit, robust_mean


def linear_oracle(X, theta):
    def pull(idx):
        return X[idx] @ theta

    return pull


# --- Catoni


def test_catoni_constant_samples():
    assert catoni(np.full(20, 3.25), 0.1, 1.0) == 3.25


def test_catoni_symmetric_samples():
    x = np.tile([-1.0, 1.0], 30)
    assert abs(catoni(x, 0.05, 1.0)) <= 1e-9


def test_catoni_root_against_bisection_oracle():
    rng = np.random.default_rng(0)
    x = rng.standard_t(3, 200)
    delta, nu2 = 0.05, 3.0
    alpha = catoni_alpha(x.size, delta, nu2)

    def score(mu):
        t = alpha * (x - mu)
        return np.sum(np.sign(t) * np.log(1 + np.abs(t) + t * t / 2))

    lo, hi = x.min(), x.max()
    for _ in range(200):
        mid = (lo + hi) / 2
        lo, hi = (mid, hi) if score(mid) > 0 else (lo, mid)
    assert catoni(x, delta, nu2) == pytest.approx((lo + hi) / 2, abs=1e-9)


def test_catoni_outlier_contrast():
    rng = np.random.default_rng(0)
    x = np.append(rng.standard_normal(500), 1e6)
    est = catoni(x, 0.05, 1.0)
    assert x.mean() > 1000
    # a single point of size M moves the root by about log(1 + t + t^2 / 2) / (n alpha)
    alpha = catoni_alpha(x.size, 0.05, 1.0)
    t = alpha * 1e6
    shift = np.log1p(t + t * t / 2) / (x.size * alpha)
    assert abs(est - shift) <= 0.15
    assert abs(est) < 0.6


def test_catoni_sample_gate():
    with pytest.raises(InsufficientSamplesError):
        catoni(np.arange(4.0), 0.1, 1.0)
    # n > 2 log(1/delta) = 4.6
    catoni(np.arange(5.0), 0.1, 1.0)


def test_catoni_psi_shape():
    t = np.array([-2.0, 0.0, 2.0])
    np.testing.assert_allclose(catoni_psi(t), [-np.log(5.0), 0.0, np.log(5.0)])
    assert catoni_radius(3, 0.1, 1.0) == np.inf


# --- median of means


def test_mom_constant_samples():
    assert median_of_means(np.full(30, -1.5), 0.1) == -1.5


def test_mom_hand_blocks():
    delta = np.exp(-0.3)  # ceil(8 * 0.3) = 3 blocks
    assert median_of_means(np.arange(1.0, 10.0), delta) == 5.0


def test_mom_even_blocks_lower_middle():
    delta = np.exp(-0.5)  # 4 blocks of two
    x = np.array([1.0, 1.0, 2.0, 2.0, 3.0, 3.0, 4.0, 4.0])
    assert median_of_means(x, delta) == 2.0


def test_mom_outlier_contrast():
    rng = np.random.default_rng(0)
    x = np.append(rng.standard_normal(500), 1e6)
    assert abs(median_of_means(x, 0.05)) <= 0.3


def test_mom_gate():
    with pytest.raises(InsufficientSamplesError):
        median_of_means(np.ones(5), 0.05)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), c=st.floats(-100, 100))
def test_translation_equivariance(seed, c):
    x = np.random.default_rng(seed).standard_normal(60)
    assert catoni(x + c, 0.05, 1.0) == pytest.approx(catoni(x, 0.05, 1.0) + c, abs=1e-9)
    assert median_of_means(x + c, 0.05) == pytest.approx(median_of_means(x, 0.05) + c, abs=1e-9)


def test_catoni_and_mom_agree_within_radii():
    rng = np.random.default_rng(1)
    n, delta = 400, 0.05
    r_cat = catoni_radius(n, delta, 1.0)
    k = int(np.ceil(8 * np.log(1 / delta)))
    # median of means deviation bound with block size n / k
    r_mom = np.sqrt(4 * k / n)
    misses = 0
    for _ in range(100):
        x = rng.standard_normal(n)
        misses += abs(catoni(x, delta, 1.0) - median_of_means(x, delta)) > r_cat + r_mom
    assert misses <= 5


def test_robust_config_validation():
    with pytest.raises(ConfigurationError):
        RobustMeanConfig("trimmed")
    with pytest.raises(ConfigurationError):
        RobustMeanConfig("catoni", delta=1.5)
    with pytest.raises(ConfigurationError):
        RobustMeanConfig("catoni", variance_bound=0.0)
    assert RobustMeanConfig("catoni").c1 == 2.0
    assert RobustMeanConfig("median_of_means").c1 == 8.0
    assert min_samples(RobustMeanConfig("median_of_means", 0.1), 10) == int(np.ceil(8 * np.log(100)))


def test_robust_mean_empirical_variance():
    x = np.random.default_rng(2).standard_normal(50) * 3
    cfg = RobustMeanConfig("catoni", 0.1, 1.0, "empirical")
    assert robust_mean(x, cfg) == catoni(x, 0.1, np.var(x, ddof=1))


# --- least squares


def test_rls_zero_rewards():
    arms = ArmSet(np.random.default_rng(3).standard_normal((5, 3)))
    batch = SampleBatch(np.array([0, 1, 1, 4]), np.zeros(4), np.full(5, 0.2), 0.1)
    np.testing.assert_array_equal(rls_fit(arms, batch, 0.1), np.zeros(5))


def test_rls_noiseless_interpolation():
    rng = np.random.default_rng(4)
    X = rng.standard_normal((6, 3))
    theta = rng.standard_normal(3)
    idx = np.repeat(np.arange(6), 3)
    batch = SampleBatch(idx, X[idx] @ theta, np.full(6, 1 / 6), 1e-8)
    coef = rls_fit(ArmSet(X), batch, 1e-8)
    np.testing.assert_allclose(X @ (X.T @ coef), X @ theta, atol=1e-4)


def test_rls_dual_matches_primal():
    rng = np.random.default_rng(5)
    X = rng.standard_normal((8, 4))
    idx = rng.integers(0, 8, 25)
    y = rng.standard_normal(25)
    coef = rls_fit(ArmSet(X), SampleBatch(idx, y, np.full(8, 1 / 8), 0.7), 0.7)
    F = X[idx]
    primal = np.linalg.solve(F.T @ F + 0.7 * np.eye(4), F.T @ y)
    np.testing.assert_allclose(X.T @ coef, primal, atol=1e-8)
    with pytest.raises(ConfigurationError):
        rls_fit(ArmSet(X), SampleBatch(idx, y, np.full(8, 1 / 8), 0.0), 0.0)


def test_ols_singular_returns_none():
    X = np.eye(3)
    assert ols_fit(X, [0, 0, 1], [1.0, 1.0, 2.0]) is None
    np.testing.assert_allclose(ols_fit(X, [0, 1, 2], [1.0, 2.0, 3.0]), [1.0, 2.0, 3.0])


# --- inverse propensity estimates


def test_ips_zero_rewards():
    arms = ArmSet(np.eye(3))
    batch = SampleBatch(np.array([0, 2, 1]), np.zeros(3), np.full(3, 1 / 3), 0.0)
    np.testing.assert_array_equal(ips_estimate(arms, np.eye(3), batch), np.zeros(3))


def test_ips_single_sample_hand_value():
    # arms e1 and (1, 1); design (0.5, 0.5); A = [[1, .5], [.5, .5]], A^-1 = [[2, -2], [-2, 4]]
    X = np.array([[1.0, 0.0], [1.0, 1.0]])
    batch = SampleBatch(np.array([1]), np.array([3.0]), np.array([0.5, 0.5]), 0.0)
    est = ips_estimate(ArmSet(X), np.eye(2), batch)
    Ainv = np.array([[2.0, -2.0], [-2.0, 4.0]])
    expected = [X[0] @ Ainv @ X[1] * 3.0, X[1] @ Ainv @ X[1] * 3.0]
    np.testing.assert_allclose(est, expected)
    np.testing.assert_allclose(expected, [0.0, 6.0])


def test_ips_law_of_large_numbers():
    rng = np.random.default_rng(6)
    X = rng.standard_normal((5, 3))
    theta = np.array([1.0, -0.5, 2.0])
    lam = np.full(5, 0.2)
    idx = rng.choice(5, 10_000, p=lam)
    batch = SampleBatch(idx, X[idx] @ theta, lam, 0.0)
    est = ips_estimate(ArmSet(X), np.eye(5), batch)
    truth = X @ theta
    assert np.max(np.abs(est - truth)) <= 0.02 * np.max(np.abs(truth))


# --- min-max fit


def test_minmax_consistent_system():
    rng = np.random.default_rng(7)
    arms = ArmSet(rng.standard_normal((6, 3)))
    C = rng.standard_normal((8, 6))
    alpha0 = rng.standard_normal(6)
    w = C @ arms.gram @ alpha0
    coef, value = fit_dual_minmax(arms, C, w)
    assert value <= 1e-6
    np.testing.assert_allclose(C @ arms.gram @ coef, w, atol=1e-5)


def test_minmax_single_direction():
    arms = ArmSet(np.eye(2))
    coef, value = fit_dual_minmax(arms, np.array([[1.0, 1.0]]), np.array([0.7]), np.array([2.0]))
    assert value == pytest.approx(0.0, abs=1e-9)
    assert (coef[0] + coef[1]) == pytest.approx(0.7, abs=1e-9)


def test_minmax_against_grid():
    arms = ArmSet(np.eye(2))
    C = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    w = np.array([1.0, 2.0, 0.5])
    r = np.array([1.0, 1.0, np.sqrt(2.0)])
    coef, value = fit_dual_minmax(arms, C, w, r)
    grid = np.arange(-2.0, 3.0 + 1e-9, 1e-3)
    best = np.inf
    for a0 in grid:
        res = np.abs((C[:, 0][:, None] * a0 + C[:, 1][:, None] * grid[None, :]) - w[:, None]) / r[:, None]
        best = min(best, res.max(axis=0).min())
    assert value <= best + 1e-9
    assert value >= best - 2e-3


def test_minmax_drops_zero_norm_directions():
    arms = ArmSet(np.eye(2))
    coef, value = fit_dual_minmax(arms, np.eye(2), np.array([1.0, 5.0]), np.array([1.0, 0.0]))
    assert coef[0] == pytest.approx(1.0)
    assert value == pytest.approx(0.0, abs=1e-9)


# --- robust inverse propensity estimator


def test_rips_noiseless_limit():
    rng = np.random.default_rng(8)
    X = rng.standard_normal((6, 3))
    theta = np.array([0.5, -1.0, 0.3])
    lam = np.full(6, 1 / 6)
    robust = RobustMeanConfig("catoni", 0.05, 4.0)
    est = rips_estimate(ArmSet(X), np.eye(6), lam, 1e-8, 10_000, robust, linear_oracle(X, theta), 1)
    truth = X @ theta
    assert np.max(np.abs(est.w_values - truth)) <= 0.02 * np.max(np.abs(truth))


def test_rips_single_direction_collapse():
    arms = ArmSet(np.array([[2.0]]))
    robust = RobustMeanConfig("catoni", 0.1, 1.0)
    rewards = np.random.default_rng(9).standard_normal(40)
    est = rips_estimate(arms, np.eye(1), np.array([1.0]), 0.0, 40, robust, lambda idx: rewards, 0)
    op = RegularizedOperator(arms, [1.0], 0.0)
    scale = op.arm_products(np.eye(1))[0, 0]
    norm2 = op.norms_sq(np.eye(1))[0]
    assert est.w_values[0] == pytest.approx(catoni(scale * rewards, 0.1, norm2), rel=1e-12)


def test_rips_mean_kind_reproduces_ips():
    rng = np.random.default_rng(10)
    arms = ArmSet(rng.uniform(size=(12, 1)), KernelSpec.rbf(0.2))
    lam = rng.dirichlet(np.ones(12))
    C = rng.standard_normal((5, 12))

    def oracle(idx):
        return np.sin(3 * idx) + 0.1

    est = rips_estimate(arms, C, lam, 0.01, 50, RobustMeanConfig("mean", 0.1), oracle, 3)
    np.testing.assert_array_equal(est.w_values, ips_estimate(arms, C, est.batch))


def test_rips_invariants_and_factor_two():
    rng = np.random.default_rng(11)
    X = rng.standard_normal((10, 3))
    theta = rng.standard_normal(3)
    arms = ArmSet(X)
    coef_star = np.linalg.lstsq(X.T, theta, rcond=None)[0]
    C = rng.standard_normal((7, 10))
    lam = rng.dirichlet(np.ones(10))
    robust = RobustMeanConfig("catoni", 0.1, 2.0)

    def oracle(idx):
        return X[idx] @ theta + rng.standard_normal(idx.size)

    est = rips_estimate(arms, C, lam, 0.0, 300, robust, oracle, 4)
    pred = C @ arms.gram @ est.theta_hat
    truth = C @ arms.gram @ coef_star
    assert np.all(np.abs(pred - est.w_values) / est.norms <= est.minmax_value + 1e-7)
    w_err = np.max(np.abs(est.w_values - truth) / est.norms)
    assert est.minmax_value <= w_err + 1e-9
    assert np.max(np.abs(pred - truth) / est.norms) <= 2 * w_err + 1e-6


def test_rips_determinism_and_gate():
    X = np.eye(3)
    robust = RobustMeanConfig("median_of_means", 0.1, 1.0)
    lam = np.full(3, 1 / 3)

    def oracle(idx):
        return np.ones(idx.size)

    a = rips_estimate(ArmSet(X), np.eye(3), lam, 0.0, 100, robust, oracle, 5)
    b = rips_estimate(ArmSet(X), np.eye(3), lam, 0.0, 100, robust, oracle, 5)
    np.testing.assert_array_equal(a.batch.arm_indices, b.batch.arm_indices)
    np.testing.assert_array_equal(a.w_values, b.w_values)
    need = min_samples(robust, 3)
    with pytest.raises(InsufficientSamplesError, match=str(need)):
        rips_estimate(ArmSet(X), np.eye(3), lam, 0.0, need - 1, robust, oracle, 5)
