"""Turning a continuous design into integer sample counts.

Three roundings are provided: plain ceiling, support reduction in the space of
second moments followed by ceiling, and an exchange-based rounding that hits
the budget exactly. :func:`ptr_round` rounds kernel designs by first projecting
onto the leading eigenvectors of the design matrix.
"""

from dataclasses import dataclass

import numpy as np

from .design import DesignProblem, effective_dim_cutoff
from .errors import ConfigurationError, SingularDesignError, UnsupportedModeError
from .features import ArmSet, RegularizedOperator, validate_design

__all__ = [
    "Allocation",
    "PtrReport",
    "round_ceiling",
    "caratheodory_reduce",
    "round_swap",
    "allocation_inflation",
    "ptr_round",
    "allocation_sequence",
    "cutoff_dimension",
]


@dataclass
class Allocation:
    counts: np.ndarray

    @property
    def total(self):
        return int(self.counts.sum())

    @property
    def support(self):
        return np.flatnonzero(self.counts)


@dataclass
class PtrReport:
    allocation: Allocation
    effective_dim: int
    projection_rank: int
    inflation_factor: float


def allocation_sequence(counts):
    """Arm indices in ascending order, each repeated by its count."""
    counts = np.asarray(counts, dtype=int)
    return np.repeat(np.arange(counts.size), counts)


def round_ceiling(lam, T):
    """``ceil(lam_i * T)`` samples per arm. The total may exceed ``T``."""
    lam = validate_design(lam)
    if T < 1:
        raise ConfigurationError("the budget T must be a positive integer")
    # guard against lam * T landing a hair above an integer
    counts = np.ceil(lam * T - 1e-9).astype(int)
    counts[lam <= 0] = 0
    return Allocation(np.maximum(counts, 0))


def caratheodory_reduce(lam, arms, tol=1e-12):
    """Reduce the support of a design without changing its second-moment matrix.

    Works in the ``d (d + 1) / 2`` upper-triangular coordinates of
    ``x x^T`` plus a row of ones for the total mass, so the output support
    has at most ``d (d + 1) / 2 + 1`` points.

    Parameters
    ----------
    lam : array_like
        Design over ``arms``.
    arms : ArmSet or ndarray
        Linear-kernel arms, or their ``(n, d)`` feature matrix.
    tol : float
        Null-space entries below ``tol`` are treated as zero.
    """
    X = _explicit_features(arms)
    lam = validate_design(lam, X.shape[0]).copy()
    d = X.shape[1]
    iu = np.triu_indices(d)
    moments = (X[:, iu[0]] * X[:, iu[1]]).T
    M = np.vstack([moments, np.ones(X.shape[0])])
    dim = M.shape[0]
    support = np.flatnonzero(lam > 0)
    while support.size > dim:
        cols = support[: dim + 1]
        _, _, vh = np.linalg.svd(M[:, cols])
        z = vh[-1]
        if z.max() <= tol:
            z = -z
        pos = z > tol
        ratios = lam[cols][pos] / z[pos]
        k = int(np.argmin(ratios))
        step = ratios[k]
        lam[cols] = lam[cols] - step * z
        lam[cols[np.flatnonzero(pos)[k]]] = 0.0
        lam[lam < 0] = 0.0
        support = np.flatnonzero(lam > 0)
    return lam / lam.sum()


def _explicit_features(arms):
    if isinstance(arms, ArmSet):
        if not arms.is_linear:
            raise UnsupportedModeError("explicit features are only available for the linear kernel")
        return np.asarray(arms.points)
    return np.atleast_2d(np.asarray(arms, dtype=float))


def _objective(V, X, counts, ridge):
    """max_v ||v||^2 in the inverse of sum_i counts_i x_i x_i^T + ridge I, plus helpers."""
    A = (X.T * counts) @ X + ridge * np.eye(X.shape[1])
    try:
        np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        return np.inf, None
    Ainv = np.linalg.inv(A)
    Ainv = (Ainv + Ainv.T) / 2
    P = V @ Ainv
    q = np.sum(P * V, axis=1)
    return float(q.max()), (Ainv, P, q)


def allocation_inflation(problem, lam, counts):
    """Ratio of the worst-case variance of an allocation to that of ``T`` times the design.

    ``max_v ||v||^2_{(sum_i n_i phi_i phi_i^T + T gamma I)^{-1}}`` divided by
    ``max_v ||v||^2_{(T A(lam) + T gamma I)^{-1}}``, with ``T = sum_i n_i``.
    """
    counts = np.asarray(counts, dtype=float)
    T = counts.sum()
    C = problem.directions
    try:
        num = RegularizedOperator(problem.arms, counts / T, problem.gamma, problem.mode).norms_sq(C).max()
    except SingularDesignError:
        return np.inf
    den = RegularizedOperator(problem.arms, lam, problem.gamma, problem.mode).norms_sq(C).max()
    return float(num / den)


def round_swap(problem, lam, T, eps, candidates=None, max_evals=None):
    """Round a design to exactly ``T`` samples by greedy removal and exchanges.

    Starts from the ceiling allocation, removes samples one at a time choosing
    the removal that hurts the worst-case variance least, then performs
    improving exchanges (best addition followed by best removal) until none
    helps or ``50 * T`` exchanges have been tried.

    Parameters
    ----------
    problem : DesignProblem
        Linear-kernel arms and directions; ``gamma`` enters as ``T * gamma``.
    lam : array_like
    T : int
        Budget, at least ``ceil(d / eps)`` where ``d`` is the feature dimension.
    eps : float
        Target inflation slack.
    candidates : array_like of int, optional
        Arms allowed to receive samples. Defaults to all arms.
    """
    X = _explicit_features(problem.arms)
    n, d = X.shape
    lam = validate_design(lam, n)
    if eps <= 0:
        raise ConfigurationError("eps must be positive")
    need = int(np.ceil(d / eps - 1e-12))
    if T < need:
        raise ConfigurationError(f"budget T={T} is below the required minimum {need} = ceil(d / eps)")
    cand = np.arange(n) if candidates is None else np.unique(np.asarray(candidates, dtype=int))
    allowed = np.zeros(n, dtype=bool)
    allowed[cand] = True
    if np.any(lam[~allowed] > 1e-12):
        raise ConfigurationError("the design puts mass outside the candidate arms")
    V = problem.directions @ X
    ridge = T * problem.gamma
    counts = round_ceiling(lam, T).counts.astype(float)
    cap = 50 * T if max_evals is None else max_evals

    f, aux = _objective(V, X, counts, ridge)
    while counts.sum() > T:
        if aux is None:
            # singular start: drop from the heaviest arm
            i = int(np.argmax(counts))
        else:
            Ainv, P, q = aux
            lev = np.sum((X @ Ainv) * X, axis=1)
            PX = P @ X.T
            with np.errstate(divide="ignore", invalid="ignore"):
                after = np.max(q[:, None] + PX**2 / (1.0 - lev)[None, :], axis=0)
            after[(counts <= 0) | (lev >= 1.0 - 1e-12)] = np.inf
            i = int(np.argmin(after))
            if not np.isfinite(after[i]):
                i = int(np.argmax(counts))
        counts[i] -= 1
        f, aux = _objective(V, X, counts, ridge)
    while counts.sum() < T:
        if aux is None:
            i = int(cand[np.argmax(lam[cand])])
        else:
            Ainv, P, q = aux
            lev = np.sum((X @ Ainv) * X, axis=1)
            PX = P @ X.T
            after = np.max(q[:, None] - PX**2 / (1.0 + lev)[None, :], axis=0)
            after[~allowed] = np.inf
            i = int(np.argmin(after))
        counts[i] += 1
        f, aux = _objective(V, X, counts, ridge)

    evals = 0
    while aux is not None and evals < cap:
        evals += 1
        Ainv, P, q = aux
        lev = np.sum((X @ Ainv) * X, axis=1)
        PX = P @ X.T
        add = np.max(q[:, None] - PX**2 / (1.0 + lev)[None, :], axis=0)
        add[~allowed] = np.inf
        b = int(np.argmin(add))
        trial = counts.copy()
        trial[b] += 1
        f_add, aux_add = _objective(V, X, trial, ridge)
        Ainv2, P2, q2 = aux_add
        lev2 = np.sum((X @ Ainv2) * X, axis=1)
        PX2 = P2 @ X.T
        with np.errstate(divide="ignore", invalid="ignore"):
            rem = np.max(q2[:, None] + PX2**2 / (1.0 - lev2)[None, :], axis=0)
        rem[(trial <= 0) | (lev2 >= 1.0 - 1e-12)] = np.inf
        rem[b] = np.inf
        a = int(np.argmin(rem))
        if not rem[a] < f * (1.0 - 1e-10):
            break
        trial[a] -= 1
        f_new, aux_new = _objective(V, X, trial, ridge)
        if not f_new < f:
            break
        counts, f, aux = trial, f_new, aux_new
    return Allocation(counts.astype(int))


def ptr_round(arms, directions, lam, gamma, T, eps, candidates=None, mode="auto"):
    """Round a kernel design in the span of its leading eigenvectors.

    The Gram matrix is factored as ``K = Phi Phi^T``, the design matrix in
    these coordinates is diagonalized, and arms are projected onto the
    eigenvectors whose eigenvalues are at least ``gamma``. The number of such
    eigenvectors is the effective dimension. Rounding then runs in that
    low-dimensional space.

    Returns
    -------
    PtrReport
        The allocation, the effective dimension and the measured full-space
        inflation of the worst-case variance.
    """
    if gamma <= 0:
        raise ConfigurationError("projected rounding needs gamma > 0")
    lam = validate_design(lam, arms.n)
    C = np.atleast_2d(np.asarray(directions, dtype=float))
    K = arms.gram
    ev, U = np.linalg.eigh(K)
    keep = ev > 1e-12 * max(ev.max(), 1.0)
    Phi = U[:, keep] * np.sqrt(ev[keep])
    A_hat = (Phi.T * lam) @ Phi
    dv, W = np.linalg.eigh(A_hat)
    order = np.argsort(dv)[::-1]
    dv, W = dv[order], W[:, order]
    k = int(np.sum(dv >= gamma))
    if k == 0:
        raise ConfigurationError("no eigenvalue of the design matrix reaches gamma; effective dimension is 0")
    if T < k:
        raise ConfigurationError(f"budget T={T} is below the effective dimension {k}")
    proj = ArmSet(Phi @ W[:, :k])
    sub = DesignProblem(proj, C, gamma, mode="explicit")
    alloc = round_swap(sub, lam, T, eps, candidates=candidates)
    full = DesignProblem(arms, C, gamma, mode=mode)
    infl = allocation_inflation(full, lam, alloc.counts)
    return PtrReport(alloc, k, k, infl)


def cutoff_dimension(arms, lam, gamma):
    """Effective dimension used by :func:`ptr_round` for a design."""
    return effective_dim_cutoff(RegularizedOperator(arms, lam, gamma, "kernel" if gamma > 0 else "auto"))
