"""Kernel feature space: arm sets, Gram matrices and regularized inverse forms.

Vectors in the feature space are represented by their coefficients over the
feature maps of a reference arm set, ``v = sum_i c[i] * phi(x_i)``.  A single
vector is a 1-D array of length ``n`` and a collection of ``m`` vectors is an
``(m, n)`` array.  Inner products are then ``a @ K @ b`` with ``K`` the Gram
matrix of the arms.

The central object is :class:`RegularizedOperator`, which evaluates bilinear
forms ``a^T (A(lam) + gamma I)^{-1} b`` for the design matrix
``A(lam) = sum_i lam[i] phi(x_i) phi(x_i)^T``.  Two evaluation routes exist:

* ``"kernel"`` works for any kernel and only touches the ``n x n`` weighted
  Gram matrix ``K_lam = S K S`` with ``S = diag(sqrt(lam))``, via
  ``a^T (A + gamma I)^{-1} b = (a^T b - k(a)^T (K_lam + gamma I)^{-1} k(b)) / gamma``
  where ``k(a)_i = sqrt(lam_i) <phi(x_i), a>``.  It requires ``gamma > 0``.
* ``"explicit"`` builds the ``d x d`` matrix for the linear kernel and is the
  only route allowing ``gamma == 0``.
"""

import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import linalg

from .errors import ConfigurationError, SingularDesignError, UnsupportedModeError

__all__ = [
    "KernelSpec",
    "ArmSet",
    "RegularizedOperator",
    "gram_matrix",
    "reg_bilinear",
    "design_norm_sq",
    "eig_weighted_gram",
    "validate_design",
    "unit_vectors",
    "rkhs_norm",
]

_RBF_FLOOR = 1e-300
COND_WARN = 1e12


@dataclass(frozen=True, eq=False)
class KernelSpec:
    """Kernel description.

    Parameters
    ----------
    kind : {"linear", "rbf", "precomputed"}
    bandwidth : float, optional
        RBF length scale, ``k(x, y) = exp(-||x - y||^2 / (2 * bandwidth^2))``.
    gram : ndarray, optional
        Full Gram matrix for ``kind="precomputed"``.
    """

    kind: str = "linear"
    bandwidth: float | None = None
    gram: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("linear", "rbf", "precomputed"):
            raise ConfigurationError(f"unknown kernel kind {self.kind!r}")
        if self.kind == "rbf":
            if self.bandwidth is None or not self.bandwidth > 0:
                raise ConfigurationError("rbf kernel needs a positive bandwidth")
        if self.kind == "precomputed":
            if self.gram is None:
                raise ConfigurationError("precomputed kernel needs a Gram matrix")
            g = np.array(self.gram, dtype=float)
            if g.ndim != 2 or g.shape[0] != g.shape[1]:
                raise ConfigurationError("Gram matrix must be square")
            if not np.allclose(g, g.T, atol=1e-10 * max(1.0, np.abs(g).max())):
                raise ConfigurationError("Gram matrix must be symmetric")
            w = np.linalg.eigvalsh((g + g.T) / 2)
            if w.min() < -1e-8 * max(1.0, w.max()):
                raise ConfigurationError("Gram matrix is not positive semidefinite")
            g.setflags(write=False)
            object.__setattr__(self, "gram", g)

    @classmethod
    def linear(cls):
        return cls("linear")

    @classmethod
    def rbf(cls, bandwidth):
        return cls("rbf", bandwidth=float(bandwidth))

    @classmethod
    def precomputed(cls, gram):
        return cls("precomputed", gram=gram)

    def __call__(self, a, b):
        """Cross kernel matrix between two point arrays."""
        if self.kind == "precomputed":
            raise UnsupportedModeError("a precomputed kernel cannot be evaluated on new points")
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        if self.kind == "linear":
            return a @ b.T
        sq = (
            np.sum(a * a, axis=1)[:, None]
            + np.sum(b * b, axis=1)[None, :]
            - 2.0 * (a @ b.T)
        )
        np.maximum(sq, 0.0, out=sq)
        k = np.exp(-sq / (2.0 * self.bandwidth**2))
        k[k < _RBF_FLOOR] = 0.0
        return k


class ArmSet:
    """Finite, ordered set of arms with a kernel.

    Parameters
    ----------
    points : array_like of shape (n, d) or (n,), optional
        Arm coordinates. One-dimensional input is read as ``n`` scalar arms.
        May be omitted for a precomputed kernel.
    kernel : KernelSpec, optional
        Defaults to the linear kernel.
    """

    def __init__(self, points=None, kernel=None):
        kernel = KernelSpec.linear() if kernel is None else kernel
        if points is None:
            if kernel.kind != "precomputed":
                raise ConfigurationError("points are required unless the kernel is precomputed")
            n = kernel.gram.shape[0]
        else:
            points = np.array(points, dtype=float)
            if points.ndim == 1:
                points = points[:, None]
            if points.ndim != 2:
                raise ConfigurationError("points must be a 1-D or 2-D array")
            if not np.all(np.isfinite(points)):
                raise ConfigurationError("points must be finite")
            points.setflags(write=False)
            n = points.shape[0]
            if kernel.kind == "precomputed" and kernel.gram.shape[0] != n:
                raise ConfigurationError("Gram matrix size does not match the number of points")
        if n == 0:
            raise ConfigurationError("an arm set needs at least one arm")
        self.points = points
        self.kernel = kernel
        self.n = n

    @property
    def d(self):
        return None if self.points is None else self.points.shape[1]

    @property
    def is_linear(self):
        return self.kernel.kind == "linear"

    @cached_property
    def gram(self):
        if self.kernel.kind == "precomputed":
            g = self.kernel.gram
        else:
            g = self.kernel(self.points, self.points)
            g = (g + g.T) / 2
        g = np.array(g)
        g.setflags(write=False)
        return g

    def subset(self, idx):
        idx = np.asarray(idx, dtype=int)
        if self.kernel.kind == "precomputed":
            sub = self.kernel.gram[np.ix_(idx, idx)]
            pts = None if self.points is None else self.points[idx]
            return ArmSet(pts, KernelSpec.precomputed(sub))
        return ArmSet(self.points[idx], self.kernel)

    def union(self, other):
        """Concatenate two arm sets sharing a kernel. Returns the union and index maps."""
        if self.kernel.kind == "precomputed" or other.kernel.kind == "precomputed":
            raise UnsupportedModeError("cannot join arm sets with precomputed kernels")
        if self.kernel.kind != other.kernel.kind or self.kernel.bandwidth != other.kernel.bandwidth:
            raise ConfigurationError("arm sets must share a kernel")
        if self.d != other.d:
            raise ConfigurationError("arm sets must share a dimension")
        joint = ArmSet(np.vstack([self.points, other.points]), self.kernel)
        return joint, np.arange(self.n), self.n + np.arange(other.n)

    def __len__(self):
        return self.n

    def __repr__(self):
        return f"ArmSet(n={self.n}, d={self.d}, kernel={self.kernel.kind!r})"


def gram_matrix(arms):
    """Gram matrix ``K[i, j] = k(x_i, x_j)`` of an arm set."""
    return arms.gram


def unit_vectors(n, idx=None):
    """Coefficient rows representing ``phi(x_i)`` for the given arm indices."""
    eye = np.eye(n)
    return eye if idx is None else eye[np.asarray(idx, dtype=int)]


def rkhs_norm(arms, coef):
    coef = np.asarray(coef, dtype=float)
    return float(np.sqrt(max(coef @ arms.gram @ coef, 0.0)))


def validate_design(lam, n=None, atol=1e-9):
    """Check that ``lam`` lies on the probability simplex and return it as an array."""
    lam = np.asarray(lam, dtype=float)
    if lam.ndim != 1:
        raise ConfigurationError("a design must be a 1-D weight vector")
    if n is not None and lam.shape[0] != n:
        raise ConfigurationError(f"design has {lam.shape[0]} weights for {n} arms")
    if not np.all(np.isfinite(lam)) or lam.min() < -atol:
        raise ConfigurationError("design weights must be finite and nonnegative")
    if abs(lam.sum() - 1.0) > max(atol, 1e-9 * lam.shape[0]):
        raise ConfigurationError("design weights must sum to one")
    return np.clip(lam, 0.0, None)


class RegularizedOperator:
    """Inverse regularized design matrix ``(A(lam) + gamma I)^{-1}`` in dual form.

    Parameters
    ----------
    arms : ArmSet
    weights : array_like of shape (n,)
        Nonnegative arm weights. Usually a design on the simplex, but unnormalized
        weights (for instance sample counts) are accepted.
    gamma : float
        Ridge regularization, ``>= 0``.
    mode : {"auto", "kernel", "explicit"}
        ``"auto"`` picks the explicit route for linear kernels when ``gamma == 0``
        or when the ambient dimension does not exceed the number of arms.
    """

    def __init__(self, arms, weights, gamma, mode="auto"):
        w = np.asarray(weights, dtype=float)
        if w.shape != (arms.n,):
            raise ConfigurationError(f"expected {arms.n} weights, got shape {w.shape}")
        if not np.all(np.isfinite(w)) or w.min() < 0:
            raise ConfigurationError("weights must be finite and nonnegative")
        gamma = float(gamma)
        if gamma < 0 or not np.isfinite(gamma):
            raise ConfigurationError("gamma must be a finite nonnegative number")
        if mode == "auto":
            if arms.is_linear and (gamma == 0 or arms.d <= arms.n):
                mode = "explicit"
            else:
                mode = "kernel"
        if mode == "explicit" and not arms.is_linear:
            raise UnsupportedModeError("the explicit route needs a linear kernel")
        if mode == "kernel" and gamma == 0:
            raise UnsupportedModeError("gamma = 0 is only supported by the explicit route")
        if mode not in ("kernel", "explicit"):
            raise ConfigurationError(f"unknown mode {mode!r}")
        self.arms = arms
        self.weights = w
        self.gamma = gamma
        self.mode = mode
        if mode == "explicit":
            X = arms.points
            mat = (X.T * w) @ X + gamma * np.eye(arms.d)
            self._check_condition(mat, np.trace(mat) / max(gamma, 1e-300), explicit=True)
        else:
            s = np.sqrt(w)
            self._sqrt_w = s
            mat = s[:, None] * arms.gram * s[None, :] + gamma * np.eye(arms.n)
            self._check_condition(mat, (np.trace(mat)) / gamma, explicit=False)
        try:
            self._factor = linalg.cho_factor(mat, lower=True, check_finite=False)
        except linalg.LinAlgError as exc:
            raise SingularDesignError("information matrix is singular for this design") from exc
        if not np.all(np.isfinite(self._factor[0])):
            raise SingularDesignError("information matrix is singular for this design")

    def _check_condition(self, mat, bound, explicit):
        if bound <= COND_WARN:
            return
        if explicit:
            ev = np.linalg.eigvalsh(mat)
            if ev[0] <= 0:
                return
            cond = ev[-1] / ev[0]
        else:
            cond = bound
        if cond > COND_WARN:
            warnings.warn(
                f"regularized design matrix is ill conditioned (condition ~ {cond:.2e})",
                RuntimeWarning,
                stacklevel=3,
            )

    def _solve(self, rhs):
        return linalg.cho_solve(self._factor, rhs, check_finite=False)

    def bilinear(self, a, b):
        """``a^T (A + gamma I)^{-1} b`` for coefficient vectors or matrices.

        Scalars are returned for 1-D inputs and a ``(p, q)`` array for
        ``(p, n)`` and ``(q, n)`` inputs.
        """
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        a2 = np.atleast_2d(a)
        b2 = np.atleast_2d(b)
        if self.mode == "explicit":
            X = self.arms.points
            va = a2 @ X
            vb = b2 @ X
            out = va @ self._solve(vb.T)
        else:
            K = self.arms.gram
            s = self._sqrt_w
            ka = a2 @ K
            kb = b2 @ K
            out = (ka @ b2.T - (ka * s) @ self._solve((kb * s).T)) / self.gamma
        if a.ndim == 1 and b.ndim == 1:
            return float(out[0, 0])
        if a.ndim == 1:
            return out[0]
        if b.ndim == 1:
            return out[:, 0]
        return out

    def norms_sq(self, c):
        """Squared norms ``||v||^2`` in the inverse regularized metric, one per row."""
        c = np.asarray(c, dtype=float)
        c2 = np.atleast_2d(c)
        if self.mode == "explicit":
            v = c2 @ self.arms.points
            out = np.sum(v * self._solve(v.T).T, axis=1)
        else:
            kc = c2 @ self.arms.gram
            p = kc * self._sqrt_w
            out = (np.sum(kc * c2, axis=1) - np.sum(p * self._solve(p.T).T, axis=1)) / self.gamma
        out = np.maximum(out, 0.0)
        return float(out[0]) if c.ndim == 1 else out

    def arm_products(self, c):
        """Matrix ``M[j, i] = v_j^T (A + gamma I)^{-1} phi(x_i)`` for all arms."""
        c2 = np.atleast_2d(np.asarray(c, dtype=float))
        if self.mode == "explicit":
            X = self.arms.points
            return (c2 @ X) @ self._solve(X.T)
        K = self.arms.gram
        s = self._sqrt_w
        kc = c2 @ K
        return (kc - (kc * s) @ self._solve((K * s[None, :]).T)) / self.gamma

    def leverages(self):
        """``||phi(x_i)||^2`` in the inverse regularized metric for every arm."""
        if self.mode == "explicit":
            X = self.arms.points
            return np.maximum(np.sum(X * self._solve(X.T).T, axis=1), 0.0)
        K = self.arms.gram
        s = self._sqrt_w
        p = K * s[None, :]
        return np.maximum((np.diag(K) - np.sum(p * self._solve(p.T).T, axis=1)) / self.gamma, 0.0)

    @cached_property
    def weighted_gram(self):
        s = np.sqrt(self.weights)
        return s[:, None] * self.arms.gram * s[None, :]

    def eigenvalues(self):
        """Eigenvalues of ``A(lam)`` (equivalently of ``K_lam``), descending."""
        ev = np.linalg.eigvalsh(self.weighted_gram)[::-1]
        scale = max(1.0, abs(ev[0])) if ev.size else 1.0
        if ev.size and ev[-1] < -1e-8 * scale:
            raise np.linalg.LinAlgError("weighted Gram matrix has a negative eigenvalue")
        return np.maximum(ev, 0.0)


def reg_bilinear(op, a, b):
    """Bilinear form ``a^T (A(lam) + gamma I)^{-1} b``. See :meth:`RegularizedOperator.bilinear`."""
    return op.bilinear(a, b)


def design_norm_sq(op, v):
    """Squared design norm ``||v||^2_{(A(lam) + gamma I)^{-1}}``."""
    return op.norms_sq(v)


def eig_weighted_gram(op):
    """Eigen-decomposition of the weighted Gram matrix ``K_lam``.

    Returns
    -------
    values : ndarray
        Descending eigenvalues; round-off negatives are clamped to zero.
    vectors : ndarray
        Orthonormal eigenvectors as columns, in the same order.
    """
    vals, vecs = np.linalg.eigh(op.weighted_gram)
    vals, vecs = vals[::-1], vecs[:, ::-1]
    scale = max(1.0, abs(vals[0]))
    if vals[-1] < -1e-8 * scale:
        raise np.linalg.LinAlgError("weighted Gram matrix has a negative eigenvalue")
    return np.maximum(vals, 0.0), vecs
