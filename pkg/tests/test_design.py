import numpy as np
import pytest

from rkhs_design import (
    ArmSet,
    DesignProblem,
    KernelSpec,
    RegularizedOperator,
    SolverConfig,
    bar_epsilon,
    characteristic_time,
    effective_dim_cutoff,
    eval_objective,
    grad_objective,
    info_gain,
    lower_bound_F,
    max_subset_design_value,
    rho_star,
    solve_design,
    solve_logdet,
    trace_effective_dim,
)
from rkhs_design.design import restricted_design_value
from rkhs_design.errors import ConfigurationError, SingularDesignError


def simplex_grid_3(step):
    k = int(round(1 / step))
    i, j = np.meshgrid(np.arange(k + 1), np.arange(k + 1), indexing="ij")
    keep = i + j <= k
    a, b = i[keep] * step, j[keep] * step
    return np.stack([a, b, 1.0 - a - b], axis=1)


def precomputed(K):
    return ArmSet(None, KernelSpec.precomputed(np.asarray(K, dtype=float)))


# --- objective and gradient


def test_zero_direction_objective_and_gradient():
    arms = ArmSet(np.eye(3))
    prob = DesignProblem(arms, np.zeros((1, 3)), 0.1)
    lam = np.full(3, 1 / 3)
    assert eval_objective(prob, lam) == (0.0, 0)
    np.testing.assert_array_equal(grad_objective(prob, lam), np.zeros(3))


def test_orthonormal_uniform_objective_ties_to_first():
    d = 6
    prob = DesignProblem(ArmSet(np.eye(d)), np.eye(d), 0.0)
    val, j = eval_objective(prob, np.full(d, 1 / d))
    assert val == pytest.approx(d)
    assert j == 0


def test_objective_matches_direct_loop():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((7, 3))
    C = rng.standard_normal((9, 7))
    lam = rng.dirichlet(np.ones(7))
    prob = DesignProblem(ArmSet(X), C, 0.05)
    A = (X.T * lam) @ X + 0.05 * np.eye(3)
    vals = [C[j] @ X @ np.linalg.solve(A, X.T @ C[j]) for j in range(9)]
    val, j = eval_objective(prob, lam)
    assert j == int(np.argmax(vals))
    assert val == pytest.approx(max(vals), rel=1e-10)


def test_gradient_scalar_hand_value():
    prob = DesignProblem(ArmSet(np.array([[1.0]])), np.eye(1), 1.0)
    np.testing.assert_allclose(grad_objective(prob, np.array([1.0])), [-0.25])


def test_gradient_central_differences():
    rng = np.random.default_rng(1)
    arms = ArmSet(rng.uniform(size=(6, 2)), KernelSpec.rbf(0.4))
    prob = DesignProblem(arms, rng.standard_normal((4, 6)), 0.05)
    lam = rng.dirichlet(np.ones(6) * 3)
    g = grad_objective(prob, lam)
    assert np.all(g <= 0)
    h = 1e-6
    for _ in range(5):
        delta = rng.standard_normal(6)
        delta -= delta.mean()
        delta /= np.abs(delta).max() / 0.05
        fp, jp = eval_objective(prob, lam + h * delta)
        fm, jm = eval_objective(prob, lam - h * delta)
        assert jp == jm
        fd = (fp - fm) / (2 * h)
        assert abs(fd - g @ delta) <= 1e-4 * max(1.0, abs(fd))


def test_convexity_probe():
    rng = np.random.default_rng(2)
    arms = ArmSet(rng.uniform(size=(8, 1)), KernelSpec.rbf(0.2))
    prob = DesignProblem(arms, np.eye(8), 0.01)
    for _ in range(10):
        l1, l2 = rng.dirichlet(np.ones(8)), rng.dirichlet(np.ones(8))
        f1, f2 = eval_objective(prob, l1)[0], eval_objective(prob, l2)[0]
        for t in (0.25, 0.5, 0.75):
            ft = eval_objective(prob, t * l1 + (1 - t) * l2)[0]
            assert ft <= t * f1 + (1 - t) * f2 + 1e-9


# --- solver


def test_single_arm_is_dirac():
    sol = solve_design(DesignProblem(ArmSet(np.array([[2.0]])), np.eye(1), 0.0))
    np.testing.assert_array_equal(sol.design, [1.0])
    assert sol.objective_value == pytest.approx(1.0)


@pytest.mark.parametrize("d", [3, 8, 15])
def test_orthonormal_basis_gives_uniform(d):
    sol = solve_design(DesignProblem(ArmSet(np.eye(d)), np.eye(d), 0.0), SolverConfig(max_iters=2000))
    assert d * (1 - 1e-12) <= sol.objective_value <= 1.01 * d
    np.testing.assert_allclose(sol.design, 1 / d, atol=0.02 / d)


@pytest.mark.parametrize("rule", ["mirror_descent", "frank_wolfe"])
def test_three_arms_against_grid(rule):
    X = np.array([[1.0, 0.0], [0.3, 1.0], [-0.8, 0.5]])
    lam_grid = simplex_grid_3(1e-3)
    A = np.einsum("gi,ij,ik->gjk", lam_grid, X, X)
    det = A[:, 0, 0] * A[:, 1, 1] - A[:, 0, 1] ** 2
    ok = det > 1e-12
    inv00, inv11, inv01 = A[ok, 1, 1] / det[ok], A[ok, 0, 0] / det[ok], -A[ok, 0, 1] / det[ok]
    q = inv00[:, None] * X[:, 0] ** 2 + inv11[:, None] * X[:, 1] ** 2 + 2 * inv01[:, None] * X[:, 0] * X[:, 1]
    grid_best = q.max(axis=1).min()
    sol = solve_design(DesignProblem(ArmSet(X), np.eye(3), 0.0), SolverConfig(step_rule=rule, max_iters=5000))
    assert sol.objective_value <= 1.005 * grid_best
    assert sol.lower_bound <= sol.objective_value


def test_solution_invariants_and_determinism():
    rng = np.random.default_rng(3)
    arms = ArmSet(rng.standard_normal((12, 4)))
    C = rng.standard_normal((5, 12))
    prob = DesignProblem(arms, C, 0.1)
    s1 = solve_design(prob, SolverConfig(max_iters=400))
    s2 = solve_design(prob, SolverConfig(max_iters=400))
    np.testing.assert_array_equal(s1.design, s2.design)
    assert s1.objective_value == s2.objective_value
    val, j = eval_objective(prob, s1.design)
    assert val == pytest.approx(s1.objective_value, abs=1e-9)
    assert j == s1.argmax_direction
    assert s1.objective_value <= eval_objective(prob, prob.uniform())[0]
    assert s1.design.sum() == pytest.approx(1.0)
    assert s1.design.min() >= 0


def test_support_restriction():
    arms = ArmSet(np.eye(4))
    sol = solve_design(DesignProblem(arms, np.eye(4)[[1, 3]], 0.01, support=[1, 3]))
    assert sol.design[[0, 2]].sum() == 0.0
    assert sol.objective_value == pytest.approx(1 / 0.51, rel=1e-2)
    with pytest.raises(SingularDesignError):
        solve_design(DesignProblem(arms, np.eye(4)[[1, 3]], 0.0, support=[1, 3]))


def test_polish_improves_on_first_order_phase():
    rng = np.random.default_rng(5)
    arms = ArmSet(rng.uniform(size=30), KernelSpec.rbf(float(rng.uniform(0.05, 0.3))))
    prob = DesignProblem(arms, np.eye(30), 1e-2)
    plain = solve_design(prob, SolverConfig(max_iters=500, polish=False))
    polished = solve_design(prob, SolverConfig(max_iters=500))
    assert polished.objective_value < plain.objective_value
    assert polished.lower_bound <= polished.objective_value
    # the log-det design is feasible, so its largest leverage bounds the optimum
    lam_d = solve_logdet(arms, 1e-2).design
    assert polished.objective_value <= RegularizedOperator(arms, lam_d, 1e-2, "kernel").leverages().max()
    assert polished.design.min() >= 0
    assert polished.design.sum() == pytest.approx(1.0)


def test_polish_respects_support_and_unregularized_designs():
    rng = np.random.default_rng(6)
    X = rng.standard_normal((10, 3))
    sol = solve_design(DesignProblem(ArmSet(X), np.eye(10)[:4], 0.0, support=[0, 1, 2, 3, 4]),
                       SolverConfig(max_iters=200))
    assert sol.design[5:].sum() == 0.0
    assert np.isfinite(sol.objective_value)


def test_problem_validation():
    arms = ArmSet(np.eye(3))
    with pytest.raises(ConfigurationError):
        DesignProblem(arms, np.eye(2), 0.0)
    with pytest.raises(ConfigurationError):
        DesignProblem(arms, np.eye(3), -1.0)
    with pytest.raises(ConfigurationError):
        SolverConfig(step_rule="newton")


# --- log-determinant design


def test_logdet_orthonormal_uniform():
    sol = solve_logdet(ArmSet(np.eye(5)), 0.1)
    np.testing.assert_allclose(sol.design, 0.2, atol=1e-4)


def test_logdet_one_dimensional_sweep():
    arms = ArmSet(np.array([[1.0], [2.0]]))
    gamma = 0.1
    grid = np.arange(0, 1 + 1e-12, 1e-4)
    vals = np.log(grid * 1.0 + (1 - grid) * 4.0 + gamma)
    best = grid[np.argmax(vals)]
    sol = solve_logdet(arms, gamma)
    assert sol.design[0] == pytest.approx(best, abs=1e-3)


@pytest.mark.parametrize("gamma", [1e-2, 1e-1])
def test_logdet_first_order_condition(gamma):
    rng = np.random.default_rng(4)
    arms = ArmSet(rng.uniform(size=(10, 1)), KernelSpec.rbf(0.15))
    sol = solve_logdet(arms, gamma)
    op = RegularizedOperator(arms, sol.design, gamma)
    assert op.leverages().max() == pytest.approx(trace_effective_dim(op), rel=0.02)


# --- effective dimensions and information gain


def test_cutoff_counts_eigenvalues():
    arms = precomputed(np.diag([3.0, 1.5, 0.003]))
    op = RegularizedOperator(arms, np.full(3, 1 / 3), 0.01)
    assert effective_dim_cutoff(op) == 2
    assert effective_dim_cutoff(op, 5.0) == 0


def test_cutoff_on_dominant_direction_instance():
    d, a = 5, 10.0
    X = np.vstack([a * np.eye(d)[:1], np.eye(d)])
    arms = ArmSet(X)
    sol = solve_design(DesignProblem(arms, np.eye(d + 1), 1.0))
    assert sol.design[0] > 0.5
    op = RegularizedOperator(arms, sol.design, 1.0)
    assert effective_dim_cutoff(op) == 1


def test_trace_effective_dim_values():
    n = 6
    op = RegularizedOperator(precomputed(n * np.eye(n)), np.full(n, 1 / n), 1.0)
    assert trace_effective_dim(op) == pytest.approx(n / 2)
    vals = [trace_effective_dim(op, g) for g in (1.0, 10.0, 100.0)]
    assert vals[0] > vals[1] > vals[2] > 0


def test_trace_matches_explicit():
    rng = np.random.default_rng(5)
    X = rng.standard_normal((9, 4))
    lam = rng.dirichlet(np.ones(9))
    op = RegularizedOperator(ArmSet(X), lam, 0.3, mode="kernel")
    A = (X.T * lam) @ X
    ref = np.trace(A @ np.linalg.inv(A + 0.3 * np.eye(4)))
    assert trace_effective_dim(op) == pytest.approx(ref, abs=1e-8)


def test_cutoff_at_most_twice_trace():
    rng = np.random.default_rng(6)
    for _ in range(10):
        arms = ArmSet(rng.uniform(size=(15, 2)), KernelSpec.rbf(rng.uniform(0.05, 0.5)))
        lam = rng.dirichlet(np.ones(15))
        op = RegularizedOperator(arms, lam, 10 ** rng.uniform(-3, -1))
        assert effective_dim_cutoff(op) <= 2 * trace_effective_dim(op)


def test_info_gain_single_arm():
    assert info_gain(precomputed([[1.0]]), 1, 1.0) == pytest.approx(np.log(2.0))


def test_info_gain_monotone_in_T():
    rng = np.random.default_rng(7)
    arms = ArmSet(rng.standard_normal((6, 3)))
    vals = [info_gain(arms, T, 1.0) for T in (1, 10, 100)]
    assert vals[0] <= vals[1] <= vals[2]


def test_max_subset_value_small_instance():
    # two orthogonal arms of norms 1 and 2: the full set is the worst subset
    arms = ArmSet(np.array([[1.0, 0.0], [0.0, 2.0]]))
    val, exact = max_subset_design_value(arms, 0.5)
    assert exact
    # both arms: equalize 1 / (l + 0.5) and 4 / (4 (1 - l) + 0.5) at l = 0.3125
    both = 1.0 / 0.8125
    assert val == pytest.approx(max(1 / 1.5, 4 / 4.5, both), rel=1e-3)


# --- transductive quantities


def test_rho_star_single_target():
    arms = ArmSet(np.eye(2))
    assert rho_star(arms, ArmSet(np.array([[1.0, 0.0]])), np.array([1.0, 0.0]), 0.0, 0.1) == 0.0


def test_rho_star_two_arms_against_grid():
    gap, eps = 0.3, 0.05
    arms = ArmSet(np.eye(2))
    theta = np.array([1.0, 1.0 - gap])
    grid = np.arange(1e-3, 1.0, 1e-3)
    oracle = np.min(1 / grid + 1 / (1 - grid)) / gap**2
    assert rho_star(arms, None, theta, 0.0, eps) == pytest.approx(oracle, rel=1e-2)


def test_rho_star_nonincreasing_in_eps():
    rng = np.random.default_rng(8)
    X = rng.standard_normal((4, 2))
    arms = ArmSet(X)
    theta = np.linalg.lstsq(X.T, np.array([1.0, 0.2]), rcond=None)[0]
    vals = [rho_star(arms, None, theta, 0.0, e) for e in (0.01, 0.1, 1.0)]
    assert vals[0] >= vals[1] * (1 - 1e-3) and vals[1] >= vals[2] * (1 - 1e-3)


def test_restricted_value_monotone():
    rng = np.random.default_rng(9)
    X = rng.standard_normal((5, 2))
    arms = ArmSet(X)
    theta = np.linalg.lstsq(X.T, np.array([0.7, -0.4]), rcond=None)[0]
    vals = [restricted_design_value(arms, None, theta, 0.0, e) for e in (0.01, 0.1, 0.5, 2.0, 10.0)]
    assert all(b >= a * (1 - 1e-3) for a, b in zip(vals, vals[1:]))


def test_bar_epsilon_zero_without_bias():
    arms = ArmSet(np.eye(2))
    assert bar_epsilon(arms, None, np.array([1.0, 0.5]), 0.0, 0.0) == 0.0


def test_bar_epsilon_against_bisection():
    gap, h = 0.5, 0.01
    arms = ArmSet(np.eye(2))
    theta = np.array([1.0, 1.0 - gap])

    def satisfied(e):
        g = 4.0 if e >= gap else 0.0
        return 4 * h * (2 + np.sqrt(g)) <= e

    lo, hi = 0.0, 10.0
    for _ in range(200):
        mid = (lo + hi) / 2
        lo, hi = (lo, mid) if satisfied(mid) else (mid, hi)
    got = bar_epsilon(arms, None, theta, 0.0, h) / 8
    assert hi <= got < 2 * hi


def test_bar_epsilon_infinite_when_bias_too_large():
    arms = ArmSet(np.eye(2))
    assert bar_epsilon(arms, None, np.array([1.0, 0.5]), 0.0, 1e6) == np.inf


def test_lower_bound_two_orthonormal_arms():
    gap = 0.4
    arms = ArmSet(np.eye(2))
    theta = np.array([1.0, 1.0 - gap])
    val = lower_bound_F(arms, np.array([0.5, 0.5]), 1, 0.0, theta, 2.0)
    assert val == pytest.approx(gap**2 / 8, rel=1e-12)


def test_lower_bound_classical_at_zero_gamma():
    rng = np.random.default_rng(10)
    X = rng.standard_normal((5, 3))
    theta = rng.standard_normal(3)
    coef = np.linalg.lstsq(X.T, theta, rcond=None)[0]
    lam = rng.dirichlet(np.ones(5))
    A = (X.T * lam) @ X
    mu = X @ theta
    star = int(np.argmax(mu))
    for xp in range(5):
        if xp == star:
            continue
        y = X[star] - X[xp]
        ref = max(y @ theta, 0.0) ** 2 / (2 * y @ np.linalg.solve(A, y))
        got = lower_bound_F(ArmSet(X), lam, xp, 0.0, coef, 10.0)
        assert got == pytest.approx(ref, rel=1e-8)


def test_lower_bound_finite_over_gamma_range():
    rng = np.random.default_rng(11)
    X = rng.standard_normal((4, 2))
    coef = rng.standard_normal(4)
    lam = rng.dirichlet(np.ones(4))
    star = int(np.argmax(X @ X.T @ coef))
    xp = (star + 1) % 4
    vals = [lower_bound_F(ArmSet(X), lam, xp, g, coef, 5.0) for g in np.linspace(0, 10, 41)]
    assert np.all(np.isfinite(vals))
    with pytest.raises(ConfigurationError):
        lower_bound_F(ArmSet(X), lam, star, 0.1, coef, 5.0)


def test_characteristic_time_two_arms():
    gap = 0.5
    arms = ArmSet(np.eye(2))
    T = characteristic_time(arms, np.array([1.0, 1.0 - gap]), 2.0, n_designs=50)
    # the uniform design is optimal here, giving 1 / T* = gap^2 / 8 at gamma = 0
    assert T == pytest.approx(8 / gap**2, rel=1e-6)
