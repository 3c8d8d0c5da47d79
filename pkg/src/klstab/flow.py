"""Toy invertible flows with exact log-determinants.

Layers are immutable; a :class:`ToyFlow` composes them and exposes the
scikit-learn transformer interface (``transform`` is the forward map,
``inverse_transform`` its inverse).
"""

from __future__ import annotations

import json
import math

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array

from .exceptions import ContractViolation, FlowNumericError
from .gaussian import MultivariateGaussian

DET_FLOOR = 1e-8


class LinearLayer:
    """``x -> W x``."""

    kind = "linear"

    def __init__(self, matrix):
        w = np.atleast_2d(np.asarray(matrix, dtype=float))
        if w.shape[0] != w.shape[1]:
            raise ContractViolation("linear layer needs a square matrix")
        sign, logdet = np.linalg.slogdet(w)
        if sign == 0 or logdet < math.log(DET_FLOOR):
            raise ContractViolation(f"linear layer is not safely invertible (|det| = {math.exp(logdet):.3e})")
        self.matrix = w
        self._inv = np.linalg.inv(w)
        self._logdet = float(logdet)
        self.lipschitz = float(np.linalg.norm(w, 2))
        self.d = w.shape[0]

    def forward(self, x):
        return x @ self.matrix.T, np.full(x.shape[0], self._logdet)

    def inverse(self, z):
        return z @ self._inv.T

    def to_dict(self):
        return {"type": self.kind, "matrix": self.matrix.tolist()}


class Translation:
    """``x -> x + shift``."""

    kind = "translation"
    lipschitz = 1.0

    def __init__(self, shift):
        self.shift = np.atleast_1d(np.asarray(shift, dtype=float))
        self.d = self.shift.size

    def forward(self, x):
        return x + self.shift, np.zeros(x.shape[0])

    def inverse(self, z):
        return z - self.shift

    def to_dict(self):
        return {"type": self.kind, "shift": self.shift.tolist()}


class HyperbolicLeaky:
    """Elementwise smooth leaky map ``p x + q (sqrt(x^2 + beta^2) - beta)``.

    ``p = (1 + alpha) / 2`` and ``q = (1 - alpha) / 2``: the slope tends to
    ``alpha`` on the left and to 1 on the right, never leaving ``(alpha, 1)``,
    so the Lipschitz constant is exactly 1. Fixes the origin.
    """

    kind = "hyperbolic_leaky"
    lipschitz = 1.0
    d = None

    def __init__(self, alpha=0.5, beta=1.0):
        if not (0.0 < alpha <= 1.0) or not beta > 0.0:
            raise ContractViolation("need 0 < alpha <= 1 and beta > 0")
        self.alpha = float(alpha)
        self.beta = float(beta)
        self._p = 0.5 * (1.0 + alpha)
        self._q = 0.5 * (1.0 - alpha)

    def forward(self, x):
        r = np.hypot(x, self.beta)
        y = self._p * x + self._q * (r - self.beta)
        slope = self._p + self._q * x / r
        return y, np.sum(np.log(slope), axis=1)

    def inverse(self, z):
        u = z + self._q * self.beta
        return (self._p * u - self._q * np.sqrt(u * u + self.alpha * self.beta**2)) / self.alpha

    def to_dict(self):
        return {"type": self.kind, "alpha": self.alpha, "beta": self.beta}


_LAYER_TYPES = {
    "linear": lambda spec: LinearLayer(spec["matrix"]),
    "translation": lambda spec: Translation(spec["shift"]),
    "hyperbolic_leaky": lambda spec: HyperbolicLeaky(spec["alpha"], spec["beta"]),
}


def layer_from_dict(spec):
    try:
        return _LAYER_TYPES[spec["type"]](spec)
    except KeyError as exc:
        raise ContractViolation(f"unknown or malformed layer spec {spec!r}") from exc


class ToyFlow(TransformerMixin, BaseEstimator):
    """Composition ``f = f_n o ... o f_1`` of invertible layers.

    Parameters
    ----------
    layers : list
        Layers applied in order to the input.
    d : int, optional
        Dimension; required only when no layer fixes it (e.g. an empty flow).
    """

    def __init__(self, layers=(), d=None):
        self.layers = layers
        self.d = d

    @property
    def dim(self):
        fixed = {layer.d for layer in self.layers if layer.d is not None}
        if self.d is not None:
            fixed.add(self.d)
        if len(fixed) > 1:
            raise ContractViolation(f"layers disagree on dimension: {sorted(fixed)}")
        return fixed.pop() if fixed else None

    @property
    def lipschitz_bounds(self):
        return [float(layer.lipschitz) for layer in self.layers]

    @property
    def lipschitz_constant(self):
        return float(np.prod(self.lipschitz_bounds)) if self.layers else 1.0

    def _as_batch(self, x):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        xs = np.atleast_2d(x)
        dim = self.dim
        if dim is not None and xs.shape[1] != dim:
            raise ContractViolation(f"input has dimension {xs.shape[1]}, flow expects {dim}")
        return xs, single

    def forward(self, x):
        """Return ``(z, log_det)`` for a point or a batch of points."""
        z, single = self._as_batch(x)
        log_det = np.zeros(z.shape[0])
        for k, layer in enumerate(self.layers):
            # overflow is reported below with the offending layer index
            with np.errstate(over="ignore", invalid="ignore"):
                z, ld = layer.forward(z)
            if not (np.all(np.isfinite(z)) and np.all(np.isfinite(ld))):
                raise FlowNumericError(f"non-finite output from layer {k} ({layer.kind})", layer_index=k)
            log_det = log_det + ld
        return (z[0], float(log_det[0])) if single else (z, log_det)

    def inverse(self, z):
        x, single = self._as_batch(z)
        for k in range(len(self.layers) - 1, -1, -1):
            with np.errstate(over="ignore", invalid="ignore"):
                x = self.layers[k].inverse(x)
            if not np.all(np.isfinite(x)):
                raise FlowNumericError(f"non-finite output inverting layer {k}", layer_index=k)
        return x[0] if single else x

    def fit(self, X=None, y=None):
        return self

    def transform(self, X):
        X = check_array(X)
        return self.forward(X)[0]

    def inverse_transform(self, X):
        X = check_array(X)
        return self.inverse(X)

    def affine_parts(self):
        """``(A, b)`` with ``f(x) = A x + b`` when every layer is affine, else None."""
        dim = self.dim
        a, b = np.eye(dim), np.zeros(dim)
        for layer in self.layers:
            if isinstance(layer, LinearLayer):
                a, b = layer.matrix @ a, layer.matrix @ b
            elif isinstance(layer, Translation):
                b = b + layer.shift
            else:
                return None
        return a, b

    def pushforward(self, g):
        """Law of ``f(x)`` for Gaussian ``x``; only defined for affine flows."""
        parts = self.affine_parts()
        if parts is None:
            raise ContractViolation("Gaussian pushforward needs an affine flow")
        return g.affine(*parts)

    def to_dict(self):
        return {"d": self.dim, "layers": [layer.to_dict() for layer in self.layers]}

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data):
        return cls([layer_from_dict(s) for s in data["layers"]], d=data.get("d"))


def flow_forward(flow, x):
    return flow.forward(x)


def flow_inverse(flow, z):
    return flow.inverse(z)


def flow_log_likelihood(flow, x, prior):
    """``log p_Z(f(x)) + log|det J_f(x)|``."""
    if flow.dim is not None and prior.d != flow.dim:
        raise ContractViolation("prior dimension does not match flow")
    z, log_det = flow.forward(x)
    return prior.log_pdf(z) + log_det


def random_flow(d, rng, n_blocks=2, alpha_range=(0.3, 0.9)):
    """Alternating random linear / translation / leaky blocks with a final linear layer."""
    from .random_instances import random_orthogonal

    layers = []
    for _ in range(n_blocks):
        q = random_orthogonal(d, rng)
        scales = np.exp(rng.uniform(-0.4, 0.4, size=d))
        layers.append(LinearLayer((q * scales) @ random_orthogonal(d, rng)))
        layers.append(Translation(0.3 * rng.standard_normal(d)))
        layers.append(HyperbolicLeaky(rng.uniform(*alpha_range), rng.uniform(0.5, 2.0)))
    q = random_orthogonal(d, rng)
    layers.append(LinearLayer(q * np.exp(rng.uniform(-0.3, 0.3, size=d))))
    return ToyFlow(layers, d=d)


def standard_prior(d):
    return MultivariateGaussian.standard(d)
