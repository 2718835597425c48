"""Experimental design on the probability simplex over arms.

The main routine, :func:`solve_design`, minimizes the worst-case directional
uncertainty

    f(lam) = max_v ||v||^2_{(A(lam) + gamma I)^{-1}}

over designs ``lam``.  It is convex in ``lam``.  The default solver is entropic
mirror descent on a log-sum-exp smoothing of the max whose temperature grows
with the iteration count; Frank-Wolfe with the ``2 / (t + 2)`` step is
available as well.  Both track the best iterate and a certified lower bound.

The module also provides the log-determinant design, information gain,
effective dimensions, the instance complexity used for transductive pure
exploration and a grid-search lower-bound quantity.

After the first-order phase, :func:`solve_design` polishes the best iterate
with SLSQP on the epigraph form ``min t  s.t.  ||v||^2 <= t`` when the number
of free weights is moderate.  The polished design is kept only if its exact
objective improves.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .errors import ConfigurationError, SingularDesignError
from .features import ArmSet, RegularizedOperator, rkhs_norm, unit_vectors, validate_design

__all__ = [
    "SolverConfig",
    "DesignProblem",
    "DesignSolution",
    "eval_objective",
    "grad_objective",
    "solve_design",
    "solve_logdet",
    "info_gain",
    "effective_dim_cutoff",
    "trace_effective_dim",
    "joint_arms",
    "rho_star",
    "restricted_design_value",
    "bar_epsilon",
    "lower_bound_F",
    "characteristic_time",
    "max_subset_design_value",
    "arm_directions",
]


@dataclass(frozen=True)
class SolverConfig:
    """Settings of the first-order design solvers.

    Parameters
    ----------
    max_iters : int
    step_rule : {"mirror_descent", "frank_wolfe"}
    tol : float
        Relative tolerance. The solver stops once the certified relative gap
        between the best objective and its lower bound, or the relative
        improvement of the best objective over the last ``patience`` iterations,
        drops below ``tol``.
    seed : int
        Kept for reproducible randomized extensions. The step rules shipped
        here are deterministic.
    lr0 : float
        Mirror descent step scale. Step ``t`` is ``lr0 / sqrt(t)`` on the
        gradient rescaled to unit range.
    smoothing : float
        Temperature scale of the soft maximum, ``beta_t = smoothing * sqrt(t) / f``.
    patience : int
    polish : bool
        Refine the first-order result with SLSQP.
    polish_max_vars : int
        Skip polishing when the support has more arms than this.
    """

    max_iters: int = 5000
    step_rule: str = "mirror_descent"
    tol: float = 1e-7
    seed: int = 0
    lr0: float = 1.0
    smoothing: float = 20.0
    patience: int = 500
    polish: bool = True
    polish_max_vars: int = 400

    def __post_init__(self):
        if self.step_rule not in ("mirror_descent", "frank_wolfe"):
            raise ConfigurationError(f"unknown step rule {self.step_rule!r}")
        if self.max_iters < 1:
            raise ConfigurationError("max_iters must be positive")


@dataclass
class DesignProblem:
    """Arms, target directions and regularization for a design problem.

    ``directions`` holds one coefficient row per direction over ``arms``.
    ``support`` optionally restricts the design to a subset of arm indices.
    """

    arms: ArmSet
    directions: np.ndarray
    gamma: float = 0.0
    support: np.ndarray | None = None
    mode: str = "auto"

    def __post_init__(self):
        c = np.atleast_2d(np.asarray(self.directions, dtype=float))
        if c.shape[1] != self.arms.n:
            raise ConfigurationError(
                f"directions have {c.shape[1]} coefficients but there are {self.arms.n} arms"
            )
        if c.shape[0] == 0:
            raise ConfigurationError("at least one direction is required")
        self.directions = c
        if self.gamma < 0:
            raise ConfigurationError("gamma must be nonnegative")
        if self.support is None:
            self.support = np.arange(self.arms.n)
        else:
            s = np.unique(np.asarray(self.support, dtype=int))
            if s.size == 0 or s.min() < 0 or s.max() >= self.arms.n:
                raise ConfigurationError("support indices out of range")
            self.support = s

    def operator(self, lam):
        return RegularizedOperator(self.arms, lam, self.gamma, self.mode)

    def uniform(self):
        lam = np.zeros(self.arms.n)
        lam[self.support] = 1.0 / self.support.size
        return lam


@dataclass
class DesignSolution:
    design: np.ndarray
    objective_value: float
    argmax_direction: int
    iterations_used: int
    converged: bool
    lower_bound: float = field(default=-np.inf)


def eval_objective(problem, lam):
    """Return ``(max_v ||v||^2, index of the maximizing direction)``.

    Ties go to the lowest index. A singular unregularized design gives ``inf``.
    """
    lam = validate_design(lam, problem.arms.n)
    try:
        q = problem.operator(lam).norms_sq(problem.directions)
    except SingularDesignError:
        return np.inf, 0
    j = int(np.argmax(q))
    return float(q[j]), j


def grad_objective(problem, lam):
    """Supergradient of the objective at ``lam`` (argmax direction, lowest index on ties).

    Entry ``i`` equals ``-(v^T (A + gamma I)^{-1} phi(x_i))^2``.
    """
    lam = validate_design(lam, problem.arms.n)
    op = problem.operator(lam)
    q = op.norms_sq(problem.directions)
    j = int(np.argmax(q))
    m = op.arm_products(problem.directions[j])
    return -(m[0] ** 2)


def _softmax(x):
    z = np.exp(x - x.max())
    return z / z.sum()


def solve_design(problem, config=None):
    """Minimize the worst-case directional variance over the simplex.

    Parameters
    ----------
    problem : DesignProblem
    config : SolverConfig, optional

    Returns
    -------
    DesignSolution
        Best iterate found, its exact objective, and a certified lower bound
        on the optimal value.
    """
    cfg = SolverConfig() if config is None else config
    sup = problem.support
    C = problem.directions
    lam = problem.uniform()
    if sup.size == 1:
        val, j = eval_objective(problem, lam)
        return DesignSolution(lam, val, j, 0, True, val)

    best_val, best_lam, best_j = np.inf, lam.copy(), 0
    lower = -np.inf
    history = []
    converged = False
    t = 0
    log_m = np.log(C.shape[0])
    for t in range(1, cfg.max_iters + 1):
        try:
            op = problem.operator(lam)
        except SingularDesignError as exc:
            # iterates keep full support, so only the uniform start can fail
            raise SingularDesignError(
                "the supported arms do not span the feature space; use gamma > 0"
            ) from exc
        q = op.norms_sq(C)
        j = int(np.argmax(q))
        f = float(q[j])
        if f < best_val:
            best_val, best_lam, best_j = f, lam.copy(), j
        if f <= 0.0:
            lower = 0.0
            converged = True
            break
        if cfg.step_rule == "mirror_descent":
            beta = cfg.smoothing * np.sqrt(t) / f
            w = _softmax(beta * (q - f))
            active = w > 1e-12
            M = op.arm_products(C[active])[:, sup]
            g = -(w[active] @ (M * M))
            f_smooth = f + np.log(np.sum(np.exp(beta * (q - f)))) / beta
            lb = f_smooth + g.min() - g @ lam[sup] - log_m / beta
            scale = g.max() - g.min()
            if scale > 1e-12 * np.abs(g).max():
                # shifting by min(g) leaves the normalized update unchanged
                step = np.exp(-(cfg.lr0 / np.sqrt(t)) * (g - g.min()) / scale)
                new = lam[sup] * step
                lam = np.zeros_like(lam)
                lam[sup] = new / new.sum()
        else:
            M = op.arm_products(C[j])[0, sup]
            g = -(M * M)
            lb = f + g.min() - g @ lam[sup]
            i = int(np.argmin(g))
            eta = 2.0 / (t + 2.0)
            lam = (1.0 - eta) * lam
            lam[sup[i]] += eta
        lower = max(lower, lb)
        history.append(best_val)
        if best_val - max(lower, 0.0) <= cfg.tol * best_val:
            converged = True
            break
        if t > cfg.patience:
            old = history[-cfg.patience - 1]
            if old - best_val <= cfg.tol * best_val:
                converged = True
                break
    if cfg.polish and sup.size <= cfg.polish_max_vars and best_val > max(lower, 0.0) * (1 + cfg.tol):
        lam_p = _polish(problem, best_lam, best_val)
        if lam_p is not None:
            val, j = eval_objective(problem, lam_p)
            if val < best_val:
                best_val, best_lam, best_j = val, lam_p, j
                lower = max(lower, _certificate(problem, lam_p))
    return DesignSolution(best_lam, best_val, best_j, t, converged, max(lower, 0.0))


def _certificate(problem, lam):
    """Lower bound on the optimal value from linearizing ``sum_v w_v ||v||^2`` at ``lam``.

    Any weights ``w`` on the directions give a valid bound; a few soft-max
    temperatures are tried and the best bound is returned.
    """
    sup = problem.support
    C = problem.directions
    op = problem.operator(lam)
    q = op.norms_sq(C)
    f = float(q.max())
    if f <= 0:
        return 0.0
    best = -np.inf
    for beta in (1e2, 1e4, 1e6):
        w = _softmax(beta * (q - f) / f)
        active = w > 1e-12
        M = op.arm_products(C[active])[:, sup]
        g = -(w[active] @ (M * M))
        best = max(best, float(w @ q + g.min() - g @ lam[sup]))
    return best


def _polish(problem, lam0, f0, maxiter=200):
    """SLSQP on ``(lam, t)``: minimize ``t`` subject to ``||v||^2 <= t`` on the simplex."""
    sup = problem.support
    C = problem.directions
    n, k = problem.arms.n, sup.size
    # a tiny floor keeps unregularized designs nonsingular along the way
    floor = 1e-12 if problem.gamma == 0 else 0.0

    def design(x):
        lam = np.zeros(n)
        lam[sup] = np.maximum(x[:k], floor)
        return lam / lam.sum()

    def gap(x):
        return x[k] - problem.operator(design(x)).norms_sq(C)

    def gap_jac(x):
        M = problem.operator(design(x)).arm_products(C)[:, sup]
        return np.hstack([M * M, np.ones((C.shape[0], 1))])

    unit_t = np.zeros(k + 1)
    unit_t[k] = 1.0
    sum_row = np.append(np.ones(k), 0.0)
    try:
        with warnings.catch_warnings():
            # SLSQP reports clipping its own steps back into the bounds
            warnings.filterwarnings("ignore", "Values in x were outside bounds", RuntimeWarning)
            res = optimize.minimize(
                lambda x: x[k],
                np.append(lam0[sup], f0),
                jac=lambda x: unit_t,
                method="SLSQP",
                bounds=[(floor, 1.0)] * k + [(0.0, None)],
                constraints=[
                    {"type": "ineq", "fun": gap, "jac": gap_jac},
                    {"type": "eq", "fun": lambda x: x[:k].sum() - 1.0, "jac": lambda x: sum_row},
                ],
                options={"maxiter": maxiter, "ftol": 1e-12},
            )
    except (np.linalg.LinAlgError, ValueError):
        return None
    if not np.all(np.isfinite(res.x)):
        return None
    return design(res.x)


def _logdet_value(op):
    if op.gamma > 0:
        ev = op.eigenvalues()
        return float(np.sum(np.log1p(ev / op.gamma)))
    X = op.arms.points
    sign, val = np.linalg.slogdet((X.T * op.weights) @ X)
    return float(val) if sign > 0 else -np.inf


def solve_logdet(arms, gamma, config=None, support=None, mode="auto"):
    """Maximize ``log det(I + K_lam / gamma)`` over designs.

    With ``gamma == 0`` (linear kernel only) the classical ``log det A(lam)`` is
    maximized instead. The gradient with respect to ``lam_i`` is the leverage
    ``||phi(x_i)||^2_{(A + gamma I)^{-1}}``; mirror ascent uses the
    multiplicative update ``lam_i <- lam_i * lev_i / sum_j lam_j lev_j``.

    Returns
    -------
    DesignSolution
        ``objective_value`` is the log determinant, ``argmax_direction`` the arm
        of largest leverage and ``lower_bound`` the largest leverage itself.
    """
    cfg = SolverConfig() if config is None else config
    n = arms.n
    sup = np.arange(n) if support is None else np.unique(np.asarray(support, dtype=int))
    lam = np.zeros(n)
    lam[sup] = 1.0 / sup.size
    converged = False
    t = 0
    prev = -np.inf
    for t in range(1, cfg.max_iters + 1):
        op = RegularizedOperator(arms, lam, gamma, mode)
        lev = op.leverages()[sup]
        tr = float(lev @ lam[sup])
        lev_max = float(lev.max())
        # optimality: max leverage equals the weighted trace
        if lev_max - tr <= cfg.tol * max(tr, 1e-300):
            converged = True
            break
        if cfg.step_rule == "mirror_descent":
            new = lam[sup] * lev / tr
        else:
            i = int(np.argmax(lev))
            eta = 2.0 / (t + 2.0)
            new = (1.0 - eta) * lam[sup]
            new[i] += eta
        lam = np.zeros(n)
        lam[sup] = new / new.sum()
        if t % cfg.patience == 0:
            cur = _logdet_value(op)
            if cur - prev <= cfg.tol * max(abs(cur), 1.0):
                converged = True
                break
            prev = cur
    op = RegularizedOperator(arms, lam, gamma, mode)
    lev = op.leverages()
    return DesignSolution(lam, _logdet_value(op), int(np.argmax(lev[sup]) if sup.size else 0),
                          t, converged, float(lev[sup].max()))


def info_gain(arms, T, gamma, config=None):
    """Maximum information gain ``max_lam log det(T K_lam + gamma I)``.

    The maximizer is the log-determinant design at regularization ``gamma / T``.
    """
    if T <= 0 or gamma <= 0:
        raise ConfigurationError("T and gamma must be positive")
    sol = solve_logdet(arms, gamma / T, config, mode="kernel")
    op = RegularizedOperator(arms, sol.design, gamma / T, "kernel")
    ev = op.eigenvalues()
    return float(arms.n * np.log(gamma) + np.sum(np.log1p(T * ev / gamma)))


def effective_dim_cutoff(op, gamma=None):
    """Number of eigenvalues of ``A(lam)`` at or above ``gamma``."""
    g = op.gamma if gamma is None else gamma
    return int(np.sum(op.eigenvalues() >= g))


def trace_effective_dim(op, gamma=None):
    """``Trace(K_lam (K_lam + gamma I)^{-1})``."""
    g = op.gamma if gamma is None else gamma
    ev = op.eigenvalues()
    return float(np.sum(ev / (ev + g)))


def joint_arms(arms_x, arms_z=None):
    """Union arm set for a transductive problem and the index maps of both parts."""
    if arms_z is None or arms_z is arms_x:
        idx = np.arange(arms_x.n)
        return arms_x, idx, idx
    return arms_x.union(arms_z)


def _target_means(joint, theta_star, x_idx, z_idx):
    theta = np.asarray(theta_star, dtype=float)
    if theta.shape[0] == joint.n:
        coef = theta
    elif theta.shape[0] == x_idx.size:
        coef = np.zeros(joint.n)
        coef[x_idx] = theta
    else:
        raise ConfigurationError("theta_star must have one coefficient per measurement arm")
    return (joint.gram @ coef)[z_idx], coef


def _gap_directions(joint, z_idx, means):
    star = int(np.argmax(means))
    others = np.array([z for z in range(z_idx.size) if z != star], dtype=int)
    C = np.zeros((others.size, joint.n))
    C[np.arange(others.size), z_idx[star]] += 1.0
    C[np.arange(others.size), z_idx[others]] -= 1.0
    gaps = means[star] - means[others]
    return C, gaps


def rho_star(arms_x, arms_z, theta_star, gamma, eps, config=None):
    """Instance complexity ``inf_lam sup_z ||phi(z*) - phi(z)||^2 / max(eps^2, gap_z^2)``.

    Parameters
    ----------
    arms_x : ArmSet
        Measurement arms carrying the design.
    arms_z : ArmSet or None
        Target arms, ``None`` for ``arms_x`` itself.
    theta_star : array_like
        Coefficients of the reward function over ``arms_x``.
    gamma, eps : float
    """
    if eps <= 0:
        raise ConfigurationError("eps must be positive")
    joint, x_idx, z_idx = joint_arms(arms_x, arms_z)
    means, _ = _target_means(joint, theta_star, x_idx, z_idx)
    if z_idx.size < 2:
        return 0.0
    C, gaps = _gap_directions(joint, z_idx, means)
    w = 1.0 / np.maximum(eps**2, gaps**2)
    prob = DesignProblem(joint, C * np.sqrt(w)[:, None], gamma, support=x_idx)
    return solve_design(prob, config).objective_value


def restricted_design_value(arms_x, arms_z, theta_star, gamma, eps, config=None):
    """``inf_lam sup { ||phi(z*) - phi(z)||^2 : gap_z <= eps }``, zero when only ``z*`` qualifies."""
    joint, x_idx, z_idx = joint_arms(arms_x, arms_z)
    means, _ = _target_means(joint, theta_star, x_idx, z_idx)
    if z_idx.size < 2:
        return 0.0
    C, gaps = _gap_directions(joint, z_idx, means)
    keep = gaps <= eps
    if not keep.any():
        return 0.0
    prob = DesignProblem(joint, C[keep], gamma, support=x_idx)
    return solve_design(prob, config).objective_value


def bar_epsilon(arms_x, arms_z, theta_star, gamma, h, config=None, j_range=(-10, 30)):
    """Smallest resolvable accuracy under regularization bias and misspecification.

    Returns ``8 * min{eps : 4 (sqrt(gamma) ||theta*|| + h)(2 + sqrt(g(eps))) <= eps}``
    with ``eps`` ranging over ``2^-j`` for ``j`` in ``j_range`` (inclusive),
    ``0`` when there is no bias at all and ``inf`` when no grid point qualifies.
    """
    joint, x_idx, z_idx = joint_arms(arms_x, arms_z)
    means, coef = _target_means(joint, theta_star, x_idx, z_idx)
    bias = np.sqrt(gamma) * rkhs_norm(joint, coef) + h
    if bias == 0:
        return 0.0
    cache = {}
    C, gaps = (None, None)
    if z_idx.size >= 2:
        C, gaps = _gap_directions(joint, z_idx, means)
    for j in range(j_range[1], j_range[0] - 1, -1):
        eps = 2.0**-j
        if C is None:
            g = 0.0
        else:
            keep = gaps <= eps
            key = tuple(np.flatnonzero(keep))
            if key not in cache:
                if not keep.any():
                    cache[key] = 0.0
                else:
                    prob = DesignProblem(joint, C[keep], gamma, support=x_idx)
                    cache[key] = solve_design(prob, config).objective_value
            g = cache[key]
        if 4.0 * bias * (2.0 + np.sqrt(g)) <= eps:
            return 8.0 * eps
    return np.inf


def lower_bound_F(arms, lam, x_prime, gamma, theta_star, R):
    """Lower-bound objective for a design, a competing arm and a regularization level.

    ``F = max{(x* - x')^T (A + gamma I)^{-1} A theta*, 0}^2 / (2 ||x' - x*||^2)
    + gamma / 2 * (||theta*||^2_{(A + gamma I)^{-1} A} - R^2)`` where ``x*`` is
    the best arm and norms are taken in ``(A + gamma I)^{-1}``.
    """
    lam = validate_design(lam, arms.n)
    alpha = np.asarray(theta_star, dtype=float)
    K = arms.gram
    means = K @ alpha
    star = int(np.argmax(means))
    if x_prime == star:
        raise ConfigurationError("the competing arm must differ from the best arm")
    op = RegularizedOperator(arms, lam, gamma)
    y = np.zeros(arms.n)
    y[star] += 1.0
    y[x_prime] -= 1.0
    a_theta = lam * means
    c = op.bilinear(y, a_theta)
    s = op.norms_sq(y)
    first = max(c, 0.0) ** 2 / (2.0 * s) if s > 0 else 0.0
    second = 0.5 * gamma * (op.bilinear(alpha, a_theta) - R**2)
    return float(first + second)


def characteristic_time(arms, theta_star, R, n_designs=200, gammas=None, seed=0):
    """Grid-search ``T*`` from ``1 / T* = max_lam min_{x'} max_gamma F``.

    Designs are the uniform design plus ``n_designs`` Dirichlet draws.
    """
    rng = np.random.default_rng(seed)
    if gammas is None:
        gammas = np.concatenate([[0.0] if arms.is_linear else [], np.logspace(-4, 1, 26)])
    means = arms.gram @ np.asarray(theta_star, dtype=float)
    star = int(np.argmax(means))
    designs = np.vstack([np.full(arms.n, 1.0 / arms.n), rng.dirichlet(np.ones(arms.n), n_designs)])
    best = 0.0
    for lam in designs:
        inner = np.inf
        for xp in range(arms.n):
            if xp == star:
                continue
            vals = []
            for g in gammas:
                try:
                    vals.append(lower_bound_F(arms, lam, xp, g, theta_star, R))
                except SingularDesignError:
                    continue
            inner = min(inner, max(vals) if vals else 0.0)
        best = max(best, inner)
    return np.inf if best <= 0 else 1.0 / best


def max_subset_design_value(arms, gamma, config=None, exact_limit=12):
    """``max over nonempty V of inf_{lam on V} max_{x in V} ||phi(x)||^2``.

    Subsets are enumerated when ``arms.n <= exact_limit``. Larger arm sets fall
    back to the full set ``V = X`` and report ``exact=False``.

    Returns
    -------
    value : float
    exact : bool
    """
    from itertools import combinations

    if gamma <= 0:
        raise ConfigurationError("gamma must be positive")
    n = arms.n
    if n > exact_limit:
        prob = DesignProblem(arms, unit_vectors(n), gamma, mode="kernel")
        return solve_design(prob, config).objective_value, False
    best = 0.0
    for size in range(1, n + 1):
        for sub in combinations(range(n), size):
            sub = np.array(sub)
            prob = DesignProblem(arms, unit_vectors(n, sub), gamma, support=sub, mode="kernel")
            best = max(best, solve_design(prob, config).objective_value)
    return best, True


def arm_directions(arms, idx=None):
    """Coefficient rows for ``phi(x_i)``, a convenience for ``V = phi(X)``."""
    return unit_vectors(arms.n, idx)
