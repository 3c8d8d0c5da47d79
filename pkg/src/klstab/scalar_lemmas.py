"""Scalar and vector inequalities behind the Gaussian perturbation bounds.

Covers the gap function ``f(x) = x - log x - 1``, its quadratic minorant on
``[0.5, 1.5]``, the pair-averaging iteration that equalizes squared entries,
and the bound on ``|sum log x_i|`` under ``sum (x_i - 1)^2 <= eps`` together
with a brute-force optimizer that checks it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .exceptions import ContractViolation, DomainError, UnsupportedSizeError

MINORANT_LO = 0.5
MINORANT_HI = 1.5


def f_gap(x):
    """``x - log(x) - 1``; accepts a scalar or an array of positive reals."""
    arr = np.asarray(x, dtype=float)
    if np.any(~(arr > 0)):
        raise DomainError("f_gap is defined for x > 0 only")
    t = arr - 1.0
    # log1p keeps the result accurate near the minimum at x = 1
    near = np.abs(t) < 0.5
    out = np.where(near, t - np.log1p(np.where(near, t, 0.0)), arr - np.log(arr) - 1.0)
    out = np.maximum(out, 0.0)
    return float(out) if out.ndim == 0 else out


def quadratic_minorant_gap(x):
    """``f_gap(x) - (x - 1)^2 / 3`` on ``[0.5, 1.5]``, where it is nonnegative."""
    arr = np.asarray(x, dtype=float)
    if np.any(~((arr >= MINORANT_LO) & (arr <= MINORANT_HI))):
        raise DomainError("quadratic minorant only holds on [0.5, 1.5]")
    t = arr - 1.0
    out = (t - np.log1p(t)) - t * t / 3.0
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class PairAveragingTrace:
    """Iterates of the pair-averaging step and the potential it decreases.

    ``phi_values[k]`` is ``sum (x_i^2 - C/n)^2`` at iterate ``k`` and
    ``delta_values[k]`` is the drop ``phi_values[k] - phi_values[k+1]``, taken
    from its closed form ``(y_i - y_j)^2 / 2`` for the averaged pair.
    """

    iterates: tuple
    phi_values: tuple
    delta_values: tuple
    converged: bool

    @property
    def final(self):
        return self.iterates[-1]

    @property
    def steps(self):
        return len(self.delta_values)


def _select_pair(y):
    # first argmin / argmax gives the lexicographically smallest maximizing pair
    a = int(np.argmin(y))
    b = int(np.argmax(y))
    return min(a, b), max(a, b)


def pair_average_iterate(x0, max_iter=1_000_000, tol=1e-12):
    """Repeatedly replace the pair with the largest squared-value spread by the
    root mean square of the pair until that spread drops below ``tol``.

    Returns a trace with ``converged=False`` when ``max_iter`` steps are used up
    or when floating point stops the spread from shrinking.
    """
    x0 = np.asarray(x0, dtype=float)
    if x0.ndim != 1 or x0.size < 2:
        raise ContractViolation("pair averaging needs a vector with at least two entries")
    if np.any(x0 < 0) or not np.all(np.isfinite(x0)):
        raise ContractViolation("entries must be finite and nonnegative")
    y = x0 * x0
    total = float(np.sum(y))
    if total <= 0:
        raise ContractViolation("sum of squares must be positive")
    mu = total / y.size

    iterates = [np.sqrt(y)]
    phis = [float(np.sum((y - mu) ** 2))]
    deltas = []
    converged = False
    for _ in range(max_iter + 1):
        i, j = _select_pair(y)
        spread = y[j] - y[i] if y[j] >= y[i] else y[i] - y[j]
        if spread < tol:
            converged = True
            break
        if len(deltas) == max_iter:
            break
        avg = 0.5 * (y[i] + y[j])
        if avg == y[i] and avg == y[j]:
            break
        y = y.copy()
        y[i] = y[j] = avg
        iterates.append(np.sqrt(y))
        phis.append(float(np.sum((y - mu) ** 2)))
        deltas.append(0.5 * spread * spread)
    return PairAveragingTrace(tuple(iterates), tuple(phis), tuple(deltas), converged)


def _check_eps(eps):
    if not (0.0 < eps < 0.5):
        raise DomainError(f"eps must lie in (0, 0.5), got {eps}")


def log_sum_bound(n, eps):
    """Upper bound ``-n log(1 - sqrt(eps/n))`` on ``|sum log x_i|`` when
    ``sum (x_i - 1)^2 <= eps``."""
    if n < 1:
        raise ContractViolation("n must be a positive integer")
    _check_eps(eps)
    return float(-n * np.log1p(-np.sqrt(eps / n)))


@dataclass(frozen=True)
class LogSumExtrema:
    min_value: float
    max_value: float
    argmin: np.ndarray
    argmax: np.ndarray

    def __iter__(self):
        return iter((self.min_value, self.max_value, self.argmin, self.argmax))


def _sum_log1p(y):
    return np.sum(np.log1p(y), axis=-1)


def _project(y, radius):
    norms = np.linalg.norm(y, axis=-1, keepdims=True)
    return y * np.minimum(1.0, radius / np.maximum(norms, 1e-300))


def _polish(y0, eps, sign):
    # sign=+1 minimizes S, sign=-1 maximizes it
    res = minimize(
        lambda y: sign * float(_sum_log1p(y)),
        y0,
        jac=lambda y: sign / (1.0 + y),
        method="SLSQP",
        constraints=[{"type": "ineq", "fun": lambda y: eps - y @ y, "jac": lambda y: -2.0 * y}],
        options={"ftol": 1e-15, "maxiter": 500},
    )
    y = _project(np.asarray(res.x, dtype=float), np.sqrt(eps))
    return y if sign * _sum_log1p(y) <= sign * _sum_log1p(y0) else y0


def extremal_log_sum_oracle(n, eps, grid_or_iters=500, *, starts=64, seed=0):
    """Brute-force extrema of ``S(y) = sum log(1 + y_i)`` over ``sum y_i^2 <= eps``.

    Random multistart on the sphere, projected gradient descent/ascent with
    step ``0.01 sqrt(eps)`` for ``grid_or_iters`` steps, then an SLSQP polish of
    the best candidate. The origin is kept as an interior candidate.
    """
    if n < 1:
        raise ContractViolation("n must be a positive integer")
    if n > 6:
        raise UnsupportedSizeError("brute-force oracle supports n <= 6")
    _check_eps(eps)
    radius = np.sqrt(eps)
    if n == 1:
        return LogSumExtrema(
            float(np.log1p(-radius)), float(np.log1p(radius)), np.array([-radius]), np.array([radius])
        )

    rng = np.random.default_rng(seed)
    y0 = rng.standard_normal((starts, n))
    y0 = radius * y0 / np.linalg.norm(y0, axis=1, keepdims=True)
    step = 0.01 * radius

    results = {}
    for sign in (1.0, -1.0):
        y = y0.copy()
        for _ in range(grid_or_iters):
            y = _project(y - sign * step / (1.0 + y), radius)
        cands = np.vstack([y, np.zeros((1, n))])
        vals = _sum_log1p(cands)
        best = cands[np.argmin(sign * vals)]
        results[sign] = _polish(best, eps, sign)

    argmin, argmax = results[1.0], results[-1.0]
    return LogSumExtrema(float(_sum_log1p(argmin)), float(_sum_log1p(argmax)), argmin, argmax)
