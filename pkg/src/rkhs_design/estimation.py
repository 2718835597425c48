"""Mean estimation and directional estimators built on a sampling design.

Robust scalar means (Catoni's M-estimator and median of means) feed the
robust inverse-propensity estimator :func:`rips_estimate`: arms are drawn
i.i.d. from a design, each observation is turned into one importance-weighted
score per target direction, the scores are aggregated robustly, and a single
function is fitted to all directional estimates by a min-max linear program.
"""

from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .errors import ConfigurationError, InsufficientSamplesError
from .features import RegularizedOperator, validate_design

__all__ = [
    "RobustMeanConfig",
    "SampleBatch",
    "EstimateSet",
    "catoni_psi",
    "catoni",
    "catoni_alpha",
    "catoni_radius",
    "median_of_means",
    "robust_mean",
    "min_samples",
    "draw_arms",
    "score_matrix",
    "ips_estimate",
    "rips_estimate",
    "fit_dual_minmax",
    "rls_fit",
]

_ESTIMATORS = ("catoni", "median_of_means", "mean")


@dataclass(frozen=True)
class RobustMeanConfig:
    """Robust aggregation settings.

    Parameters
    ----------
    kind : {"catoni", "median_of_means", "mean"}
        ``"mean"`` is the plain average and turns the robust estimator into
        ordinary inverse-propensity weighting.
    delta : float
        Overall failure probability; it is split evenly across directions.
    variance_bound : float
        Variance proxy per unit squared design norm, typically ``B^2 + sigma^2``.
        The per-direction Catoni plug-in is ``variance_bound * ||v||^2``.
    variance : {"theory", "empirical"}
        ``"empirical"`` replaces the plug-in by the sample variance of the scores.
    """

    kind: str = "catoni"
    delta: float = 0.05
    variance_bound: float = 1.0
    variance: str = "theory"

    def __post_init__(self):
        if self.kind not in _ESTIMATORS:
            raise ConfigurationError(f"unknown estimator kind {self.kind!r}")
        if not 0 < self.delta < 1:
            raise ConfigurationError("delta must lie in (0, 1)")
        if not self.variance_bound > 0:
            raise ConfigurationError("variance_bound must be positive")
        if self.variance not in ("theory", "empirical"):
            raise ConfigurationError("variance must be 'theory' or 'empirical'")

    @property
    def c1(self):
        """Sample-size constant: ``n >= c1 * log(1 / delta)`` per estimate."""
        return {"catoni": 2.0, "median_of_means": 8.0, "mean": 0.0}[self.kind]


@dataclass
class SampleBatch:
    arm_indices: np.ndarray
    rewards: np.ndarray
    design_used: np.ndarray
    gamma: float


@dataclass
class EstimateSet:
    w_values: np.ndarray
    theta_hat: np.ndarray
    minmax_value: float
    norms: np.ndarray
    batch: SampleBatch


def catoni_psi(t):
    """Influence function ``sign(t) * log(1 + |t| + t^2 / 2)``."""
    t = np.asarray(t, dtype=float)
    a = np.abs(t)
    return np.sign(t) * np.log1p(a + 0.5 * a * a)


def catoni_alpha(n, delta, variance):
    log_term = np.log(1.0 / delta)
    if n <= 2.0 * log_term:
        raise InsufficientSamplesError(
            f"Catoni's estimator needs n > 2 log(1/delta) = {2.0 * log_term:.3f}, got n={n}"
        )
    return np.sqrt(2.0 * log_term / (n * variance * (1.0 + 2.0 * log_term / (n - 2.0 * log_term))))


def catoni_radius(n, delta, variance):
    """High-probability deviation bound ``sqrt(2 nu^2 log(1/delta) / (n - 2 log(1/delta)))``."""
    log_term = np.log(1.0 / delta)
    if n <= 2.0 * log_term:
        return np.inf
    return float(np.sqrt(2.0 * variance * log_term / (n - 2.0 * log_term)))


def catoni(samples, delta, variance):
    """Catoni's M-estimator of the mean.

    Solves ``sum_i psi(alpha (X_i - mu)) = 0`` for ``mu`` with bracketing root
    finding to ``1e-10``.

    Parameters
    ----------
    samples : array_like
    delta : float
        Failure probability, ``n > 2 log(1/delta)`` is required.
    variance : float
        Variance plug-in ``nu^2``. Zero falls back to the sample mean.
    """
    x = np.asarray(samples, dtype=float).ravel()
    n = x.size
    if not 0 < delta < 1:
        raise ConfigurationError("delta must lie in (0, 1)")
    if variance < 0:
        raise ConfigurationError("variance must be nonnegative")
    lo, hi = float(x.min()) if n else 0.0, float(x.max()) if n else 0.0
    alpha = catoni_alpha(n, delta, max(variance, 0.0)) if variance > 0 else np.inf
    if hi - lo == 0.0:
        return lo
    if not np.isfinite(alpha):
        return float(x.mean())

    def score(mu):
        return float(np.sum(catoni_psi(alpha * (x - mu))))

    # the score is decreasing in mu, positive at min(x) and negative at max(x)
    return float(optimize.brentq(score, lo, hi, xtol=1e-10, rtol=4 * np.finfo(float).eps, maxiter=500))


def mom_blocks(delta):
    return int(np.ceil(8.0 * np.log(1.0 / delta)))


def median_of_means(samples, delta):
    """Median of ``ceil(8 log(1/delta))`` contiguous block means.

    Block sizes differ by at most one; for an even number of blocks the lower
    middle value is returned.
    """
    x = np.asarray(samples, dtype=float).ravel()
    if not 0 < delta < 1:
        raise ConfigurationError("delta must lie in (0, 1)")
    k = mom_blocks(delta)
    if x.size < k:
        raise InsufficientSamplesError(f"median of means needs at least {k} samples, got {x.size}")
    means = np.sort([b.mean() for b in np.array_split(x, k)])
    return float(means[(k - 1) // 2])


def min_samples(config, n_directions=1):
    """Smallest sample size accepted by the robust estimator at per-direction confidence."""
    delta = config.delta / n_directions
    if config.kind == "catoni":
        return int(np.floor(2.0 * np.log(1.0 / delta))) + 1
    if config.kind == "median_of_means":
        return mom_blocks(delta)
    return 1


def robust_mean(samples, config, delta=None, variance=None):
    delta = config.delta if delta is None else delta
    if config.kind == "catoni":
        if config.variance == "empirical":
            variance = float(np.var(samples, ddof=1)) if np.size(samples) > 1 else 0.0
        return catoni(samples, delta, config.variance_bound if variance is None else variance)
    if config.kind == "median_of_means":
        return median_of_means(samples, delta)
    return float(np.mean(samples))


def draw_arms(design, tau, seed):
    """Draw ``tau`` arm indices i.i.d. from ``design``."""
    rng = np.random.default_rng(seed)
    p = np.asarray(design, dtype=float)
    return rng.choice(p.size, size=int(tau), p=p / p.sum())


def score_matrix(op, directions):
    """``M[j, i] = v_j^T (A(lam) + gamma I)^{-1} phi(x_i)``; scores are ``M[:, arm] * reward``."""
    return op.arm_products(directions)


def ips_estimate(arms, directions, batch, mode="auto"):
    """Inverse-propensity estimates of ``<theta, v>`` for each direction (plain averages)."""
    op = RegularizedOperator(arms, batch.design_used, batch.gamma, mode)
    M = score_matrix(op, directions)
    return (M[:, batch.arm_indices] * batch.rewards[None, :]).mean(axis=1)


def fit_dual_minmax(arms, directions, w_values, norms=None):
    """Fit coefficients ``alpha`` minimizing ``max_v |<theta(alpha), v> - W_v| / ||v||``.

    Solved as a linear program with HiGHS. ``norms`` are the per-direction
    normalizers ``||v||`` (design norms in the robust estimator); directions
    with a zero normalizer are dropped from the objective.

    Returns
    -------
    coef : ndarray of shape (n,)
    value : float
        The achieved maximum normalized residual.
    """
    C = np.atleast_2d(np.asarray(directions, dtype=float))
    w = np.asarray(w_values, dtype=float)
    r = np.ones(C.shape[0]) if norms is None else np.asarray(norms, dtype=float)
    use = r > 0
    n = arms.n
    if not use.any():
        return np.zeros(n), 0.0
    G = (C[use] @ arms.gram) / r[use][:, None]
    b = w[use] / r[use]
    m = G.shape[0]
    ones = np.ones((m, 1))
    A_ub = np.block([[G, -ones], [-G, -ones]])
    b_ub = np.concatenate([b, -b])
    cost = np.zeros(n + 1)
    cost[-1] = 1.0
    bounds = [(None, None)] * n + [(0, None)]
    res = optimize.linprog(cost, A_ub=A_ub, b_ub=b_ub, bounds=bounds, method="highs")
    if res.status != 0:
        raise RuntimeError(f"min-max fit failed: {res.message}")
    coef = res.x[:n]
    value = float(np.max(np.abs(G @ coef - b)))
    return coef, value


def rips_estimate(arms, directions, design, gamma, tau, robust, reward_oracle, seed, mode="auto"):
    """Robust inverse-propensity estimates of ``<theta*, v>`` for a set of directions.

    Parameters
    ----------
    arms : ArmSet
    directions : ndarray of shape (m, n)
    design : ndarray of shape (n,)
    gamma : float
    tau : int
        Number of samples drawn i.i.d. from ``design``.
    robust : RobustMeanConfig
        Aggregation rule. Each direction uses confidence ``delta / m``.
    reward_oracle : callable
        Receives the array of drawn arm indices (in draw order) and returns
        the observed rewards.
    seed : int
        Seed of the arm draws.

    Returns
    -------
    EstimateSet
    """
    design = validate_design(design, arms.n)
    C = np.atleast_2d(np.asarray(directions, dtype=float))
    m = C.shape[0]
    tau = int(tau)
    need = min_samples(robust, m)
    if tau < need:
        raise InsufficientSamplesError(
            f"tau={tau} is below the minimum {need} for {robust.kind} at confidence {robust.delta}/{m}"
        )
    op = RegularizedOperator(arms, design, gamma, mode)
    M = score_matrix(op, C)
    norms = np.sqrt(op.norms_sq(C))
    idx = draw_arms(design, tau, seed)
    y = np.asarray(reward_oracle(idx), dtype=float)
    if y.shape != (tau,):
        raise ConfigurationError("the reward oracle must return one reward per drawn arm")
    S = M[:, idx] * y[None, :]
    per_delta = robust.delta / m
    if robust.kind == "mean":
        # same reduction as ips_estimate so both agree bit for bit
        W = S.mean(axis=1)
    else:
        W = np.empty(m)
        for j in range(m):
            W[j] = robust_mean(S[j], robust, per_delta, robust.variance_bound * norms[j] ** 2)
    coef, value = fit_dual_minmax(arms, C, W, norms)
    return EstimateSet(W, coef, value, norms, SampleBatch(idx, y, design, gamma))


def rls_fit(arms, batch, gamma):
    """Regularized least squares ``(Phi^T Phi + gamma I)^{-1} Phi^T Y`` in dual form.

    Repeated pulls are aggregated per arm: with pull counts ``c`` and reward
    sums ``s`` over the pulled arms the coefficients solve
    ``(diag(c) K + gamma I) beta = s``, which gives the same function as
    kernel ridge regression over the individual samples.
    """
    idx = np.asarray(batch.arm_indices, dtype=int)
    y = np.asarray(batch.rewards, dtype=float)
    if gamma <= 0:
        raise ConfigurationError("rls_fit needs gamma > 0; use ols_fit for unregularized fits")
    counts = np.bincount(idx, minlength=arms.n).astype(float)
    sums = np.bincount(idx, weights=y, minlength=arms.n)
    used = np.flatnonzero(counts)
    coef = np.zeros(arms.n)
    if used.size == 0:
        return coef
    K = arms.gram[np.ix_(used, used)]
    coef[used] = np.linalg.solve(counts[used][:, None] * K + gamma * np.eye(used.size), sums[used])
    return coef


def ols_fit(X, idx, y):
    """Ordinary least squares on explicit features. Returns ``None`` if the moment matrix is singular."""
    F = np.asarray(X)[np.asarray(idx, dtype=int)]
    G = F.T @ F
    if np.linalg.matrix_rank(G) < F.shape[1]:
        return None
    return np.linalg.solve(G, F.T @ np.asarray(y, dtype=float))
