"""Seeded generators for random SPD matrices, Gaussian pairs at a target KL, and mixtures."""

from __future__ import annotations

import numpy as np
from scipy.stats import ortho_group

from .exceptions import ContractViolation
from .gaussian import MultivariateGaussian, gaussian_kl

RNG_ALGORITHM = "numpy.PCG64"


def make_rng(seed):
    return np.random.Generator(np.random.PCG64(seed))


def random_orthogonal(d, rng):
    if d == 1:
        return np.array([[1.0 if rng.random() < 0.5 else -1.0]])
    return ortho_group.rvs(d, random_state=rng)


def random_spd(d, rng, log_spread=1.0):
    """``Q diag(exp(u)) Q^T`` with Haar ``Q`` and ``u ~ U[-log_spread, log_spread]``."""
    q = random_orthogonal(d, rng)
    u = rng.uniform(-log_spread, log_spread, size=d)
    s = (q * np.exp(u)) @ q.T
    return 0.5 * (s + s.T)


def random_gaussian(d, rng, mean_scale=1.0, log_spread=1.0):
    return MultivariateGaussian(mean_scale * rng.standard_normal(d), random_spd(d, rng, log_spread))


def _path(n2, direction_mean, direction_cov, t):
    root = n2.factorization.square_root
    w, v = np.linalg.eigh(direction_cov)
    expm = (v * np.exp(t * w)) @ v.T
    cov = root @ expm @ root
    return MultivariateGaussian(n2.mean + t * direction_mean, 0.5 * (cov + cov.T))


def perturbed_partner(n2, target_eps, rng, rel_tol=1e-3, cov_weight=None):
    """Gaussian ``n1`` with ``KL(n1 || n2)`` equal to ``target_eps`` within ``rel_tol``.

    ``n1`` moves along ``t -> N(mu2 + t dmu, S^{1/2} exp(t H) S^{1/2})`` for a
    random direction ``(dmu, H)``; KL is increasing in ``t`` along this path, so
    bisection on ``t`` finds the target.
    """
    if target_eps <= 0:
        raise ContractViolation("target KL must be positive")
    d = n2.d
    if cov_weight is None:
        cov_weight = rng.uniform(0.0, 1.0)
    dmu = (1.0 - cov_weight) * rng.standard_normal(d) @ n2.factorization.square_root
    h = rng.standard_normal((d, d))
    h = cov_weight * 0.5 * (h + h.T)
    if not np.any(dmu) and not np.any(h):
        dmu = n2.factorization.square_root[:, 0]

    def kl_at(t):
        return gaussian_kl(_path(n2, dmu, h, t), n2)

    hi = 1.0
    while kl_at(hi) < target_eps:
        hi *= 2.0
    lo = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        val = kl_at(mid)
        if abs(val - target_eps) <= rel_tol * target_eps:
            return _path(n2, dmu, h, mid)
        if val < target_eps:
            lo = mid
        else:
            hi = mid
    return _path(n2, dmu, h, 0.5 * (lo + hi))


def random_pair(d, target_eps, rng, mean_scale=1.0):
    """``(n1, n2)`` with random ``n2`` and ``KL(n1 || n2) ~= target_eps``."""
    n2 = random_gaussian(d, rng, mean_scale=mean_scale)
    return perturbed_partner(n2, target_eps, rng), n2


def random_mixture(d, rng, k=None, mean_scale=2.0):
    from .empirical import GaussianMixture

    if k is None:
        k = int(rng.integers(1, 4))
    weights = rng.dirichlet(np.ones(k))
    comps = [random_gaussian(d, rng, mean_scale=mean_scale, log_spread=0.7) for _ in range(k)]
    return GaussianMixture(weights, comps)
