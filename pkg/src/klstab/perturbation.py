"""Parameter deviations implied by a small KL divergence between two Gaussians."""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, fields

import numpy as np

from .gaussian import _check_pair, gaussian_kl, matrix_norms, whitened_eigenvalues

WINDOW = (0.5, 1.5)
SMALL_EPS = 1.0 / 12.0
BOUND_SLACK = 1e-9


@dataclass(frozen=True)
class DeviationReport:
    """Observed deviations between two Gaussians next to their KL-implied bounds."""

    epsilon: float
    mean_dev: float
    mean_dev_bound: float
    cov_dev: float
    cov_dev_bound: float
    inv_cov_dev: float
    inv_cov_dev_bound: float
    eigen_window_ok: bool

    def violations(self, slack=BOUND_SLACK):
        """Names of bounds exceeded by more than ``slack`` (empty outside the window)."""
        if not self.eigen_window_ok:
            return []
        out = []
        for name in ("mean_dev", "cov_dev", "inv_cov_dev"):
            if getattr(self, name) > getattr(self, name + "_bound") + slack:
                out.append(name)
        return out

    def worst_margin(self):
        """Smallest ``bound - observed`` over the three inequalities."""
        return min(
            self.mean_dev_bound - self.mean_dev,
            self.cov_dev_bound - self.cov_dev,
            self.inv_cov_dev_bound - self.inv_cov_dev,
        )

    def to_dict(self):
        return asdict(self)


def eigen_window_check(n1, n2):
    """``(ok, min_lambda, max_lambda)`` for the whitened eigenvalues against ``[0.5, 1.5]``."""
    lam = whitened_eigenvalues(n1, n2)
    lo, hi = float(lam[0]), float(lam[-1])
    return WINDOW[0] <= lo and hi <= WINDOW[1], lo, hi


def deviation_report(n1, n2):
    _check_pair(n1, n2)
    eps = gaussian_kl(n1, n2)
    f1, f2 = n1.factorization, n2.factorization
    s2_op = f2.op_norm
    ok, _, _ = eigen_window_check(n1, n2)
    return DeviationReport(
        epsilon=eps,
        mean_dev=float(np.linalg.norm(n2.mean - n1.mean)),
        mean_dev_bound=float(np.sqrt(s2_op) * np.sqrt(2.0 * eps)),
        cov_dev=matrix_norms(n1.covariance - n2.covariance)[1],
        cov_dev_bound=float(s2_op * np.sqrt(6.0 * eps)),
        inv_cov_dev=matrix_norms(f1.inverse - f2.inverse)[1],
        inv_cov_dev_bound=float(f1.inverse_op_norm * s2_op * f2.inverse_op_norm * np.sqrt(6.0 * eps)),
        eigen_window_ok=bool(ok),
    )


SWEEP_COLUMNS = ["seed", "d"] + [f.name for f in fields(DeviationReport)]


def deviation_sweep(trials, d, seed, eps_max=0.01, eps_min=1e-6):
    """Random ``(n1, n2)`` pairs with target KL log-uniform in ``[eps_min, eps_max]``.

    Trial ``i`` uses seed ``seed + i`` so any row can be regenerated alone.
    """
    from .random_instances import make_rng, random_pair

    rows = []
    for i in range(trials):
        rng = make_rng(seed + i)
        target = float(np.exp(rng.uniform(np.log(eps_min), np.log(eps_max))))
        n1, n2 = random_pair(d, target, rng)
        rows.append({"seed": seed + i, "d": d, **deviation_report(n1, n2).to_dict()})
    return rows


def write_sweep_csv(rows, path, columns=SWEEP_COLUMNS):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore", lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt(row[k]) for k in columns})


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return v
