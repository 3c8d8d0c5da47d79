"""Samplers, Gaussian mixtures and Monte Carlo oracles.

Everything here is an independent check on the exact moment formulas in
``stability``: estimates come from sampled log-density ratios and carry a
standard error.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import logsumexp

from .exceptions import ContractViolation
from .gaussian import MultivariateGaussian, _check_pair
from .random_instances import RNG_ALGORITHM, make_rng
from .stability import MomentSummary, gaussian_mean_norm

ORACLE_SAMPLES = 1_000_000
SMOKE_SAMPLES = 10_000


@dataclass(frozen=True, eq=False)
class SampleSet:
    points: np.ndarray
    seed: int
    source_label: str
    rng_algorithm: str = RNG_ALGORITHM

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        if pts.shape[0] < 1:
            raise ContractViolation("sample set must contain at least one point")
        if not np.all(np.isfinite(pts)):
            raise ContractViolation("sample points must be finite")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def n(self):
        return self.points.shape[0]

    @property
    def d(self):
        return self.points.shape[1]

    def __eq__(self, other):
        if not isinstance(other, SampleSet):
            return NotImplemented
        return (
            self.seed == other.seed
            and self.source_label == other.source_label
            and np.array_equal(self.points, other.points)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class GaussianMixture:
    """Finite mixture of Gaussians of equal dimension.

    Zero weights are accepted so that degenerate mixtures can be compared
    against their components; at least one weight must be positive.
    """

    weights: np.ndarray
    components: tuple

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        comps = tuple(self.components)
        if len(comps) == 0 or w.size != len(comps):
            raise ContractViolation("need one weight per component and at least one component")
        if np.any(w < 0) or not np.any(w > 0):
            raise ContractViolation("weights must be nonnegative with a positive entry")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ContractViolation(f"weights sum to {w.sum():.15g}, expected 1")
        if len({c.d for c in comps}) != 1:
            raise ContractViolation("mixture components must share a dimension")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "components", comps)

    @property
    def d(self):
        return self.components[0].d

    def log_pdf(self, x):
        x = np.asarray(x, dtype=float)
        xs = np.atleast_2d(x)
        with np.errstate(divide="ignore"):
            logw = np.log(self.weights)
        terms = np.stack([lw + c.log_pdf(xs) for lw, c in zip(logw, self.components)], axis=0)
        out = logsumexp(terms, axis=0)
        return float(out[0]) if x.ndim == 1 else out

    def to_dict(self):
        return {"weights": self.weights.tolist(), "components": [c.to_dict() for c in self.components]}

    @classmethod
    def from_dict(cls, data):
        return cls(data["weights"], [MultivariateGaussian.from_dict(c) for c in data["components"]])


def _gaussian_draws(g, n, rng):
    z = rng.standard_normal((n, g.d))
    return z @ g.factorization.square_root + g.mean


def sample(dist, n, seed, label=None):
    """Draw ``n`` i.i.d. points; identical ``(dist, n, seed)`` give identical sets."""
    if n < 1:
        raise ContractViolation("n must be positive")
    rng = make_rng(seed)
    if isinstance(dist, MultivariateGaussian):
        pts = _gaussian_draws(dist, n, rng)
        label = label or "gaussian"
    elif isinstance(dist, GaussianMixture):
        labels = rng.choice(len(dist.components), size=n, p=dist.weights)
        z = rng.standard_normal((n, dist.d))
        pts = np.empty_like(z)
        for k, comp in enumerate(dist.components):
            mask = labels == k
            pts[mask] = z[mask] @ comp.factorization.square_root + comp.mean
        label = label or "mixture"
    else:
        raise ContractViolation(f"cannot sample from {type(dist).__name__}")
    return SampleSet(pts, int(seed), label)


def mixture_moments(gm, method="quadrature", samples=ORACLE_SAMPLES, seed=0):
    """Exact mean and second moment; ``E||x||`` by per-component quadrature
    (default) or by Monte Carlo with its standard error."""
    w = gm.weights
    mean = sum(wk * c.mean for wk, c in zip(w, gm.components))
    second = sum(wk * (c.covariance + np.outer(c.mean, c.mean)) for wk, c in zip(w, gm.components))
    sq = float(np.trace(second))
    if method == "quadrature":
        en = float(sum(wk * gaussian_mean_norm(c) for wk, c in zip(w, gm.components) if wk > 0))
        se = 0.0
    elif method == "mc":
        norms = np.linalg.norm(sample(gm, samples, seed).points, axis=1)
        en = float(norms.mean())
        se = float(norms.std(ddof=1) / math.sqrt(samples))
    else:
        raise ContractViolation(f"unknown method {method!r}")
    return MomentSummary(mean, second, en, sq, se)


def mean_and_std_error(values):
    values = np.asarray(values, dtype=float)
    n = values.size
    if n < 2:
        raise ContractViolation("need at least two values for a standard error")
    return float(values.mean()), float(values.std(ddof=1) / math.sqrt(n))


def mc_expected_log_ratio(s, n1, n2):
    """Sample mean and standard error of ``log n1(x) - log n2(x)`` over ``s``."""
    _check_pair(n1, n2)
    if s.d != n1.d:
        raise ContractViolation(f"samples have dimension {s.d}, expected {n1.d}")
    return mean_and_std_error(n1.log_pdf(s.points) - n2.log_pdf(s.points))


def mc_kl_mixture_vs_gaussian(gm, n, samples=ORACLE_SAMPLES, seed=0):
    """Monte Carlo ``KL(gm || n)`` using the exact mixture log density."""
    if gm.d != n.d:
        raise ContractViolation("dimension mismatch")
    x = sample(gm, samples, seed).points
    return mean_and_std_error(gm.log_pdf(x) - n.log_pdf(x))


def save_sample_set(s, path):
    """CSV of points (one row each) plus a ``.json`` sidecar with provenance."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"x{i}" for i in range(s.d)])
        for row in s.points:
            writer.writerow([repr(float(v)) for v in row])
    meta = {"seed": s.seed, "source_label": s.source_label, "rng_algorithm": s.rng_algorithm, "n": s.n, "d": s.d}
    path.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def load_sample_set(path):
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    pts = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return SampleSet(pts, meta["seed"], meta["source_label"], meta.get("rng_algorithm", RNG_ALGORITHM))
