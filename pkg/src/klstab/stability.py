"""Stability of KL(P || N) when the Gaussian reference N is perturbed.

For any P with finite second moment,

    KL(P || N2) - KL(P || N1) = E_P[log N1(x) / N2(x)] = a + b.E[x] + tr(M E[x x^T]),

and when KL(N1 || N2) = eps is small the right side is bounded by an explicit
O(sqrt(eps)) ledger. This module computes the exact left side from moments and
the ledger term by term.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.integrate import quad

from .exceptions import ContractViolation, OutOfRegimeError
from .gaussian import MultivariateGaussian, _check_pair, gaussian_kl
from .perturbation import SMALL_EPS, eigen_window_check

SQRT2 = math.sqrt(2.0)
SQRT3 = math.sqrt(3.0)
SQRT6 = math.sqrt(6.0)


def gaussian_mean_norm(g):
    """``E||x||`` for ``x ~ g``, by quadrature.

    Uses ``r = (1 / (2 sqrt(pi))) int_0^inf (1 - exp(-s r^2)) s^{-3/2} ds`` with the
    closed-form Laplace transform of ``||x||^2``; substituting ``s = u^2``
    gives a smooth integrand.
    """
    lam, vecs = np.linalg.eigh(g.covariance)
    lam = np.maximum(lam, 0.0)
    m2 = (vecs.T @ g.mean) ** 2
    sq = float(np.sum(lam) + np.sum(m2))
    if sq == 0.0:
        return 0.0

    # plain floats: quad calls this a few hundred times and d is small
    terms = list(zip(lam.tolist(), m2.tolist()))

    def integrand(u):
        if u == 0.0:
            return 2.0 * sq
        s = u * u
        log_l = 0.0
        for lk, mk in terms:
            t = 2.0 * s * lk
            log_l -= 0.5 * math.log1p(t) + s * mk / (1.0 + t)
        return -2.0 * math.expm1(log_l) / s

    scale = 1.0 / math.sqrt(sq)
    head, _ = quad(integrand, 0.0, 20.0 * scale, epsabs=0.0, epsrel=1e-12, limit=200)
    tail, _ = quad(integrand, 20.0 * scale, np.inf, epsabs=0.0, epsrel=1e-12, limit=200)
    return (head + tail) / (2.0 * math.sqrt(math.pi))


@dataclass(frozen=True, eq=False)
class MomentSummary:
    """First and second moments of a distribution plus ``E||x||`` and ``E||x||^2``.

    ``mean_norm_std_error`` is nonzero only when ``E||x||`` was estimated by
    Monte Carlo.
    """

    mean: np.ndarray
    second_moment: np.ndarray
    mean_norm_expectation: float
    sq_norm_expectation: float
    mean_norm_std_error: float = 0.0

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        sm = np.atleast_2d(np.asarray(self.second_moment, dtype=float))
        d = mean.size
        if sm.shape != (d, d):
            raise ContractViolation("second moment shape does not match mean")
        sm = 0.5 * (sm + sm.T)
        scale = max(1.0, float(np.trace(sm)))
        cov_eigs = np.linalg.eigvalsh(sm - np.outer(mean, mean))
        if cov_eigs[0] < -1e-9 * scale:
            raise ContractViolation("second moment minus mean outer product is not PSD")
        if abs(self.sq_norm_expectation - np.trace(sm)) > 1e-9 * scale:
            raise ContractViolation("E||x||^2 must equal the trace of the second moment")
        if self.mean_norm_expectation < 0 or self.mean_norm_expectation**2 > self.sq_norm_expectation + 1e-9 * scale:
            raise ContractViolation("E||x|| violates Jensen's inequality")
        for name, val in (("mean", mean), ("second_moment", sm)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)
        object.__setattr__(self, "mean_norm_expectation", float(self.mean_norm_expectation))
        object.__setattr__(self, "sq_norm_expectation", float(self.sq_norm_expectation))

    @property
    def d(self):
        return self.mean.size

    @property
    def covariance(self):
        return self.second_moment - np.outer(self.mean, self.mean)

    @classmethod
    def of_gaussian(cls, g):
        sm = g.covariance + np.outer(g.mean, g.mean)
        return cls(g.mean, sm, gaussian_mean_norm(g), float(np.trace(sm)))

    @classmethod
    def from_samples(cls, points):
        x = np.atleast_2d(np.asarray(points, dtype=float))
        n = x.shape[0]
        norms = np.linalg.norm(x, axis=1)
        sm = x.T @ x / n
        se = float(norms.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        return cls(x.mean(axis=0), sm, float(norms.mean()), float(np.trace(0.5 * (sm + sm.T))), se)

    def to_dict(self):
        return {
            "mean": self.mean.tolist(),
            "second_moment": self.second_moment.tolist(),
            "mean_norm_expectation": self.mean_norm_expectation,
            "sq_norm_expectation": self.sq_norm_expectation,
            "mean_norm_std_error": self.mean_norm_std_error,
        }


@dataclass(frozen=True)
class LogRatioCoefficients:
    """``log N1(x) - log N2(x) = a + b.x + x^T M x``."""

    a: float
    b: np.ndarray
    M: np.ndarray

    def evaluate(self, x):
        x = np.asarray(x, dtype=float)
        xs = np.atleast_2d(x)
        out = self.a + xs @ self.b + np.einsum("ij,jk,ik->i", xs, self.M, xs)
        return float(out[0]) if x.ndim == 1 else out


def log_ratio_coefficients(n1, n2):
    _check_pair(n1, n2)
    f1, f2 = n1.factorization, n2.factorization
    p1, p2 = f1.inverse, f2.inverse
    a = 0.5 * (f2.log_det - f1.log_det) + 0.5 * (n2.mean @ p2 @ n2.mean - n1.mean @ p1 @ n1.mean)
    b = p1 @ n1.mean - p2 @ n2.mean
    m = 0.5 * (p2 - p1)
    return LogRatioCoefficients(float(a), b, 0.5 * (m + m.T))


def _check_moments(p, n1):
    if p.d != n1.d:
        raise ContractViolation(f"moment dimension {p.d} does not match Gaussian dimension {n1.d}")


def expected_log_ratio(p, n1, n2):
    """Exact ``E_P[log N1(x) / N2(x)]`` from the first two moments of ``P``."""
    _check_pair(n1, n2)
    _check_moments(p, n1)
    c = log_ratio_coefficients(n1, n2)
    return float(c.a + c.b @ p.mean + np.sum(c.M * p.second_moment))


@dataclass(frozen=True)
class BoundBreakdown:
    """Ledger of the bound on ``|E_P[log N1/N2]|``.

    ``total`` uses the exact log-sum bound for ``t1``; ``total_taylor`` is the
    ``(f1 + f3 + f5) sqrt(eps) + (f2 + f4) eps`` form whose ``t1`` is truncated
    after the linear terms, reported for comparison only.
    """

    epsilon: float
    t1: float
    t21: float
    t22: float
    t3: float
    t4: float
    t5: float
    f1: float
    f2: float
    f3: float
    f4: float
    f5: float
    mean_norm_expectation: float
    total: float
    total_taylor: float
    total_std_error: float
    eigen_window_ok: bool
    preconditions_ok: bool

    def recompute_total(self):
        return _assemble(self.t1, self.t21, self.t22, self.t3, self.t4, self.t5, self.f5, self.epsilon, self.mean_norm_expectation)

    def to_dict(self):
        return asdict(self)


def _assemble(t1, t21, t22, t3, t4, t5, f5, eps, mean_norm):
    return 0.5 * t1 + 0.5 * (t21 + t22) + (t3 + t4 + t5) * mean_norm + f5 * math.sqrt(eps)


def _t1(eps, d):
    r = 6.0 * eps / d
    if r >= 1.0:
        raise OutOfRegimeError(f"6*eps/d = {r:.3g} >= 1: log-sum bound undefined")
    return -d * math.log1p(-math.sqrt(r))


def _check_regime(eps, d):
    if eps >= 0.5:
        raise OutOfRegimeError(f"KL(N1||N2) = {eps:.4g} >= 0.5 is outside the stability regime")
    return _t1(eps, d)


def stability_bound(p, n1, n2):
    """Explicit bound on ``|E_P[log N1/N2]|`` valid when ``preconditions_ok``."""
    _check_pair(n1, n2)
    _check_moments(p, n1)
    d = n1.d
    eps = gaussian_kl(n1, n2)
    t1 = _check_regime(eps, d)
    window_ok, _, _ = eigen_window_check(n1, n2)

    f1_, f2_ = n1.factorization, n2.factorization
    s2_op = f2_.op_norm
    s2_half = math.sqrt(s2_op)
    s2_inv = f2_.inverse_op_norm
    s1_inv = f1_.inverse_op_norm
    mu1 = float(np.linalg.norm(n1.mean))
    mu2 = float(np.linalg.norm(n2.mean))
    en = p.mean_norm_expectation
    esq = p.sq_norm_expectation
    re = math.sqrt(eps)

    t21 = 2.0 * SQRT2 * s2_half * s2_inv * mu2 * re + 2.0 * s2_inv * s2_op * eps
    t22 = SQRT6 * s1_inv * s2_inv * s2_op * mu1**2 * re
    t3 = SQRT6 * s2_inv * s1_inv * s2_op * mu2 * re
    t4 = 2.0 * SQRT3 * s2_inv * s1_inv * s2_op**1.5 * eps
    t5 = SQRT2 * s2_inv * s2_half * re

    f1 = SQRT2 * s2_half * s2_inv * mu2 + 0.5 * SQRT6 * s1_inv * s2_inv * s2_op * mu1**2 + 0.5 * math.sqrt(6.0 * d)
    f2 = 1.5 + s2_inv * s2_op
    f3 = (SQRT6 * s2_inv * s1_inv * s2_op * mu2 + SQRT2 * s2_inv * s2_half) * en
    f4 = 2.0 * SQRT3 * s2_inv * s1_inv * s2_op**1.5 * en
    f5 = 0.5 * SQRT6 * s1_inv * s2_op * s2_inv * esq

    return BoundBreakdown(
        epsilon=eps,
        t1=t1, t21=t21, t22=t22, t3=t3, t4=t4, t5=t5,
        f1=f1, f2=f2, f3=f3, f4=f4, f5=f5,
        mean_norm_expectation=en,
        total=_assemble(t1, t21, t22, t3, t4, t5, f5, eps, en),
        total_taylor=(f1 + f3 + f5) * re + (f2 + f4) * eps,
        total_std_error=(t3 + t4 + t5) * p.mean_norm_std_error,
        eigen_window_ok=bool(window_ok),
        preconditions_ok=bool(eps < SMALL_EPS and window_ok),
    )


def standard_prior_bound(n1, p):
    """Ledger against the standard Gaussian with every ``N1``-dependent norm
    replaced by its worst case given ``eps``: ``||mu1||^2 <= 2 eps`` and
    ``||Sigma1^{-1}||_op <= 1 / (1 - sqrt(6 eps))``.

    Entries whose envelope is undefined (``6 eps >= 1``) are ``inf``; the
    result then carries ``preconditions_ok=False``.
    """
    _check_moments(p, n1)
    d = n1.d
    eps = gaussian_kl(n1, MultivariateGaussian.standard(d))
    window_ok, _, _ = eigen_window_check(n1, MultivariateGaussian.standard(d))
    re = math.sqrt(eps)
    root6 = math.sqrt(6.0 * eps)
    env_inv = 1.0 / (1.0 - root6) if root6 < 1.0 else math.inf
    try:
        t1 = _t1(eps, d)
    except OutOfRegimeError:
        t1 = math.inf
    en = p.mean_norm_expectation
    esq = p.sq_norm_expectation

    t21 = 2.0 * eps
    t22 = SQRT6 * env_inv * 2.0 * eps * re
    t3 = 0.0
    t4 = 2.0 * SQRT3 * env_inv * eps
    t5 = SQRT2 * re

    f1 = 0.5 * SQRT6 * (2.0 * eps * env_inv + math.sqrt(d))
    f2 = 2.5
    f3 = SQRT2 * en
    f4 = 2.0 * SQRT3 * env_inv * en
    f5 = 0.5 * SQRT6 * env_inv * esq

    return BoundBreakdown(
        epsilon=eps,
        t1=t1, t21=t21, t22=t22, t3=t3, t4=t4, t5=t5,
        f1=f1, f2=f2, f3=f3, f4=f4, f5=f5,
        mean_norm_expectation=en,
        total=_assemble(t1, t21, t22, t3, t4, t5, f5, eps, en),
        total_taylor=(f1 + f3 + f5) * re + (f2 + f4) * eps,
        total_std_error=(t3 + t4 + t5) * p.mean_norm_std_error,
        eigen_window_ok=bool(window_ok),
        preconditions_ok=bool(eps < SMALL_EPS and window_ok),
    )


@dataclass(frozen=True)
class TightnessInstance:
    p: MultivariateGaussian
    n1: MultivariateGaussian
    n2: MultivariateGaussian
    predicted_gap: float

    def __iter__(self):
        return iter((self.p, self.n1, self.n2, self.predicted_gap))

    def measured_gap(self):
        """``KL(P||N1) - KL(P||N2)`` from the closed form."""
        return gaussian_kl(self.p, self.n1) - gaussian_kl(self.p, self.n2)


def tightness_instance(c, eps, d, direction=None):
    """Collinear Gaussian triple where the KL shift is exactly ``t sqrt(2 eps) - eps``.

    ``N1 = N(0, I)``, ``N2 = N(sqrt(2 eps) u, I)``, ``P = N(sqrt(2 c) u, I)``
    with unit direction ``u`` (default ``e1``), so ``KL(N1||N2) = eps`` and
    ``KL(P||N1) = c``.
    """
    if not (c > 0 and 0 < eps < SMALL_EPS and d >= 1):
        raise ContractViolation("need c > 0, 0 < eps < 1/12 and d >= 1")
    if direction is None:
        u = np.zeros(d)
        u[0] = 1.0
    else:
        u = np.asarray(direction, dtype=float)
        if u.shape != (d,) or not np.linalg.norm(u) > 0:
            raise ContractViolation("direction must be a nonzero vector of length d")
        u = u / np.linalg.norm(u)
    eye = np.eye(d)
    t = math.sqrt(2.0 * c)
    delta = math.sqrt(2.0 * eps)
    return TightnessInstance(
        p=MultivariateGaussian(t * u, eye),
        n1=MultivariateGaussian(np.zeros(d), eye),
        n2=MultivariateGaussian(delta * u, eye),
        predicted_gap=t * delta - eps,
    )


def fit_loglog_slope(eps_values, gaps):
    """Least-squares slope of ``log(gap)`` against ``log(eps)``."""
    x = np.log(np.asarray(eps_values, dtype=float))
    y = np.log(np.asarray(gaps, dtype=float))
    slope, _ = np.polyfit(x, y, 1)
    return float(slope)
