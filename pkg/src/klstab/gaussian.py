"""Multivariate Gaussians, SPD factorizations and the closed-form KL divergence."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .exceptions import ContractViolation, InternalConsistencyError, NearSingularError

SYMMETRY_ATOL = 1e-10
CONDITION_FLOOR = 1e-12
KL_ROUNDOFF = 1e-10

_LOG_2PI = float(np.log(2.0 * np.pi))


def _frozen(a):
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SpdFactorization:
    """Symmetric eigendecomposition of an SPD matrix and the matrices derived from it."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    square_root: np.ndarray
    inverse: np.ndarray
    inverse_square_root: np.ndarray

    @classmethod
    def of(cls, matrix):
        w, v = np.linalg.eigh(matrix)
        if not np.all(np.isfinite(w)) or w[0] <= 0.0:
            raise NearSingularError(f"matrix is not positive definite (min eigenvalue {w[0]:.3e})")
        if w[0] < CONDITION_FLOOR * w[-1]:
            raise NearSingularError(
                f"matrix is near-singular: eigenvalue ratio {w[0] / w[-1]:.3e} < {CONDITION_FLOOR:g}"
            )
        sqrt_w = np.sqrt(w)
        return cls(
            eigenvalues=_frozen(w),
            eigenvectors=_frozen(v),
            square_root=_frozen(_sym((v * sqrt_w) @ v.T)),
            inverse=_frozen(_sym((v / w) @ v.T)),
            inverse_square_root=_frozen(_sym((v / sqrt_w) @ v.T)),
        )

    @property
    def log_det(self):
        return float(np.sum(np.log(self.eigenvalues)))

    @property
    def op_norm(self):
        return float(self.eigenvalues[-1])

    @property
    def inverse_op_norm(self):
        return float(1.0 / self.eigenvalues[0])


def _sym(m):
    return 0.5 * (m + m.T)


@dataclass(frozen=True, eq=False)
class MultivariateGaussian:
    """Gaussian N(mean, covariance) with an SPD covariance validated at construction.

    Instances are immutable; the eigendecomposition of the covariance is computed
    lazily once and reused by every operation that needs a square root or inverse.
    """

    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.covariance, dtype=float))
        if mean.ndim != 1 or mean.size < 1:
            raise ContractViolation("mean must be a non-empty vector")
        d = mean.size
        if cov.shape != (d, d):
            raise ContractViolation(f"covariance shape {cov.shape} does not match mean length {d}")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
            raise ContractViolation("Gaussian parameters must be finite")
        if np.max(np.abs(cov - cov.T)) > SYMMETRY_ATOL:
            raise NearSingularError("covariance is not symmetric")
        object.__setattr__(self, "mean", _frozen(mean))
        object.__setattr__(self, "covariance", _frozen(_sym(cov)))
        # validates positive definiteness eagerly
        _ = self.factorization

    @classmethod
    def standard(cls, d):
        return cls(np.zeros(d), np.eye(d))

    @property
    def d(self):
        return self.mean.size

    @cached_property
    def factorization(self):
        return SpdFactorization.of(self.covariance)

    def log_pdf(self, x):
        """Log density at one point (shape ``(d,)``) or a batch (shape ``(n, d)``)."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        xs = np.atleast_2d(x)
        if xs.shape[-1] != self.d:
            raise ContractViolation(f"points have dimension {xs.shape[-1]}, expected {self.d}")
        # whitened residuals keep the quadratic form nonnegative
        r = (xs - self.mean) @ self.factorization.inverse_square_root
        out = -0.5 * np.einsum("ij,ij->i", r, r) - 0.5 * self.factorization.log_det - 0.5 * self.d * _LOG_2PI
        return float(out[0]) if single else out

    def affine(self, matrix, shift=None):
        """Law of ``matrix @ x + shift`` for x drawn from this Gaussian."""
        matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
        shift = np.zeros(matrix.shape[0]) if shift is None else np.asarray(shift, dtype=float)
        return MultivariateGaussian(matrix @ self.mean + shift, matrix @ self.covariance @ matrix.T)

    def to_dict(self):
        return {"mean": self.mean.tolist(), "covariance": self.covariance.tolist()}

    @classmethod
    def from_dict(cls, data):
        return cls(np.asarray(data["mean"], dtype=float), np.asarray(data["covariance"], dtype=float))

    def __eq__(self, other):
        if not isinstance(other, MultivariateGaussian):
            return NotImplemented
        return np.array_equal(self.mean, other.mean) and np.array_equal(self.covariance, other.covariance)

    def __hash__(self):
        return hash((self.mean.tobytes(), self.covariance.tobytes()))

    def __repr__(self):
        return f"MultivariateGaussian(d={self.d}, mean={self.mean.tolist()})"


def _check_pair(n1, n2):
    if n1.d != n2.d:
        raise ContractViolation(f"dimension mismatch: {n1.d} vs {n2.d}")


def _clamp_kl(value):
    if value < -KL_ROUNDOFF:
        raise InternalConsistencyError(f"KL divergence evaluated to {value:.3e}")
    return max(value, 0.0)


def gaussian_kl(n1, n2):
    """KL(n1 || n2) for two Gaussians of equal dimension, in nats."""
    _check_pair(n1, n2)
    if n1 == n2:
        # the log-det and trace terms cancel only up to roundoff otherwise
        return 0.0
    f2 = n2.factorization
    dmu = n2.mean - n1.mean
    maha = float(dmu @ f2.inverse @ dmu)
    trace = float(np.sum(f2.inverse * n1.covariance))
    log_det_ratio = n1.factorization.log_det - f2.log_det
    return _clamp_kl(0.5 * (maha + trace - log_det_ratio - n1.d))


def matrix_norms(m):
    """Return ``(operator_norm, frobenius_norm)`` of a real matrix."""
    m = np.atleast_2d(np.asarray(m, dtype=float))
    if not np.all(np.isfinite(m)):
        raise ContractViolation("matrix has non-finite entries")
    return float(np.linalg.norm(m, 2)), float(np.linalg.norm(m, "fro"))


def whitened_matrix(n1, n2):
    _check_pair(n1, n2)
    s = n2.factorization.inverse_square_root
    return _sym(s @ n1.covariance @ s)


def whitened_eigenvalues(n1, n2):
    """Ascending eigenvalues of ``Sigma2^{-1/2} Sigma1 Sigma2^{-1/2}``."""
    w = np.linalg.eigvalsh(whitened_matrix(n1, n2))
    w = np.sort(w, kind="stable")
    if w[0] <= 0.0:
        raise InternalConsistencyError("whitened covariance lost positive definiteness")
    return w


def mahalanobis_sq(n2, delta):
    """``delta^T Sigma2^{-1} delta``."""
    delta = np.asarray(delta, dtype=float)
    r = delta @ n2.factorization.inverse_square_root
    return float(r @ r)
