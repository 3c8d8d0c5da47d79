"""Randomized verification suites shared by the CLI and the acceptance tests.

Each suite returns a list of :class:`CheckResult` plus per-instance rows. Trial
``i`` of a suite seeded with ``seed`` draws from ``make_rng(seed + i)``, so
shards of trials can run anywhere and reassemble to the same report.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .empirical import mc_expected_log_ratio, mixture_moments, sample
from .gaussian import MultivariateGaussian, gaussian_kl
from .perturbation import SMALL_EPS, deviation_report, eigen_window_check
from .random_instances import make_rng, perturbed_partner, random_gaussian, random_mixture, random_pair
from .scalar_lemmas import (
    extremal_log_sum_oracle,
    f_gap,
    log_sum_bound,
    pair_average_iterate,
    quadratic_minorant_gap,
)
from .stability import (
    MomentSummary,
    expected_log_ratio,
    fit_loglog_slope,
    stability_bound,
    standard_prior_bound,
    tightness_instance,
)

DEFAULT_EPS_GRID = (1e-6, 1e-5, 1e-4, 1e-3, 1e-2)


@dataclass
class CheckResult:
    name: str
    paper_anchor: str
    instances: int = 0
    failures: int = 0
    worst_margin: float = math.inf
    violations: list = field(default_factory=list)

    def record(self, margin, ok, detail=None):
        self.instances += 1
        self.worst_margin = min(self.worst_margin, float(margin))
        if not ok:
            self.failures += 1
            if detail is not None and len(self.violations) < 50:
                self.violations.append(detail)

    @property
    def passed(self):
        return self.failures == 0

    def to_dict(self):
        out = asdict(self)
        if not math.isfinite(out["worst_margin"]):
            out["worst_margin"] = None
        return out


def verify_lemmas(seed=0, trials=1000, gap_samples=100_000, grid_points=10_000, pair_vectors=None, oracle_trials=None):
    rng = make_rng(seed)
    checks = []

    c = CheckResult("gap_function_nonnegative", "Lemma 1: f(x) = x - log x - 1 >= 0, zero only at 1")
    x = np.exp(rng.uniform(np.log(1e-4), np.log(1e4), size=gap_samples))
    vals = f_gap(x)
    for xi, v in zip(x, vals):
        ok = v >= 0 and (v > 0 or xi == 1.0)
        c.record(v, ok, {"x": float(xi), "f": float(v)} if not ok else None)
    c.record(0.0, f_gap(1.0) == 0.0, {"x": 1.0})
    checks.append(c)

    c = CheckResult("gap_function_midpoint_convexity", "Lemma 1: f is convex")
    a = np.exp(rng.uniform(np.log(1e-3), np.log(1e3), size=(trials, 2)))
    lhs = f_gap(a.mean(axis=1))
    rhs = 0.5 * (f_gap(a[:, 0]) + f_gap(a[:, 1]))
    for l, r, pair in zip(lhs, rhs, a):
        margin = r - l
        c.record(margin, margin >= -1e-12 * max(1.0, r), {"pair": pair.tolist()})
    checks.append(c)

    c = CheckResult("quadratic_minorant", "Lemma 2: f(x) >= (x-1)^2/3 on [0.5, 1.5]")
    grid = np.linspace(0.5, 1.5, grid_points)
    for xi, g in zip(grid, quadratic_minorant_gap(grid)):
        c.record(g, g >= -1e-12, {"x": float(xi), "gap": float(g)})
    checks.append(c)

    c_conv = CheckResult("pair_averaging_converges", "Lemma 3: pair averaging reaches (sqrt(C/n), ..., sqrt(C/n))")
    c_mono = CheckResult("pair_averaging_monotone", "Lemma 3: Phi and Delta_k are non-increasing, sum of squares conserved")
    for k in range(pair_vectors or trials):
        r = make_rng(seed + k)
        n = int(r.integers(2, 9))
        x0 = r.uniform(0.0, 1.0, size=n)
        tr = pair_average_iterate(x0)
        total = float(np.sum(x0 * x0))
        target = math.sqrt(total / n)
        dist = float(np.max(np.abs(tr.final - target)))
        ok = tr.converged and tr.phi_values[-1] < 1e-12 and dist <= 1e-6
        c_conv.record(1e-12 - tr.phi_values[-1], ok, {"trial": k, "x0": x0.tolist(), "phi": tr.phi_values[-1]})
        phi = np.asarray(tr.phi_values)
        dl = np.asarray(tr.delta_values)
        sums = np.array([float(np.sum(it * it)) for it in tr.iterates])
        slack = 1e-15 * max(1.0, phi[0])
        m_phi = float(np.min(phi[:-1] - phi[1:])) if phi.size > 1 else 0.0
        m_dl = float(np.min(dl[:-1] - dl[1:])) if dl.size > 1 else 0.0
        cons = float(np.max(np.abs(sums - total))) / total
        ok = m_phi >= -slack and m_dl >= -slack and cons <= 1e-9
        c_mono.record(min(m_phi, m_dl), ok, {"trial": k, "x0": x0.tolist()})
    checks += [c_conv, c_mono]

    c_val = CheckResult("log_sum_oracle_matches_bound", "Lemma 5: extrema of sum log(1+y_i) on the eps-ball")
    c_abs = CheckResult("log_sum_min_dominates_max", "Lemma 5: |min| >= max, so |sum log x_i| <= -n log(1 - sqrt(eps/n))")
    for k in range(oracle_trials or min(trials, 200)):
        r = make_rng(seed + 10_000 + k)
        n = int(r.integers(1, 7))
        eps = float(r.uniform(1e-4, 0.5 - 1e-6))
        res = extremal_log_sum_oracle(n, eps, seed=seed + k)
        want_min = n * math.log1p(-math.sqrt(eps / n))
        want_max = n * math.log1p(math.sqrt(eps / n))
        err = max(abs(res.min_value - want_min), abs(res.max_value - want_max))
        c_val.record(1e-5 - err, err <= 1e-5, {"n": n, "eps": eps, "err": err})
        bound = log_sum_bound(n, eps)
        margin = abs(res.min_value) - res.max_value
        ok = margin >= 0 and abs(res.min_value) <= bound + 1e-6 and res.max_value <= bound + 1e-6
        c_abs.record(margin, ok, {"n": n, "eps": eps})
    checks += [c_val, c_abs]
    return checks, [], {}


def verify_perturbation(seed=0, trials=1000, d=2, eps_max=0.01, eps_min=1e-6):
    """Deviation bounds on random pairs; pairs outside the eigen window are
    counted in ``info`` but not asserted."""
    dev = CheckResult("deviation_bounds", "Lemma 4: mean, covariance and precision deviations bounded by KL")
    rows = []
    outside = 0
    for i in range(trials):
        rng = make_rng(seed + i)
        target = float(np.exp(rng.uniform(math.log(eps_min), math.log(eps_max))))
        n1, n2 = random_pair(d, target, rng)
        rep = deviation_report(n1, n2)
        rows.append({"seed": seed + i, "d": d, **rep.to_dict()})
        if rep.eigen_window_ok:
            bad = rep.violations()
            dev.record(rep.worst_margin(), not bad, {"seed": seed + i, "violated": bad})
        else:
            outside += 1
    return [dev], rows, {"eigen_window_violations": outside, "pairs": trials}


def window_frequency_sweep(seed=0, trials=1000, d=2, eps_max=SMALL_EPS):
    """Fraction of random pairs with ``KL < eps_max`` whose whitened eigenvalues leave the window."""
    outside = 0
    for i in range(trials):
        rng = make_rng(seed + i)
        target = float(rng.uniform(1e-4, eps_max * (1 - 1e-9)))
        n1, n2 = random_pair(d, target, rng)
        outside += not eigen_window_check(n1, n2)[0]
    return outside / trials


def _theorem_instance(seed, d):
    rng = make_rng(seed)
    target = float(np.exp(rng.uniform(math.log(1e-6), math.log(0.08))))
    n1, n2 = random_pair(d, target, rng)
    gm = random_mixture(d, rng)
    return gm, n1, n2


def verify_theorem(seed=0, trials=1000, d=2, identity_trials=None, corollary_trials=None):
    sound = CheckResult("stability_soundness", "Theorem 1: |E_P[log N1/N2]| <= ledger total")
    rows = []
    for i in range(trials):
        gm, n1, n2 = _theorem_instance(seed + i, d)
        p = mixture_moments(gm)
        elr = expected_log_ratio(p, n1, n2)
        b = stability_bound(p, n1, n2)
        margin = b.total - abs(elr)
        consistent = b.recompute_total() == b.total
        if b.preconditions_ok:
            sound.record(margin, margin >= 0 and consistent, {"seed": seed + i, "elr": elr, "total": b.total})
        rows.append({
            "seed": seed + i, "d": d, "epsilon": b.epsilon, "expected_log_ratio": elr,
            "bound_total": b.total, "bound_total_taylor": b.total_taylor,
            "preconditions_ok": b.preconditions_ok, "margin": margin,
        })

    ident = CheckResult("kl_shift_identity", "Theorem 1 step 1: KL(P||N2) - KL(P||N1) = E_P[log N1/N2]")
    for i in range(identity_trials or trials):
        rng = make_rng(seed + 50_000 + i)
        n1, n2 = random_pair(d, float(rng.uniform(1e-4, 0.08)), rng)
        pg = random_gaussian(d, rng, mean_scale=2.0)
        sm = pg.covariance + np.outer(pg.mean, pg.mean)
        p = MomentSummary(pg.mean, sm, 0.0, float(np.trace(sm)))
        err = abs(gaussian_kl(pg, n2) - gaussian_kl(pg, n1) - expected_log_ratio(p, n1, n2))
        ident.record(1e-8 - err, err <= 1e-8, {"seed": seed + 50_000 + i, "err": err})

    cor = CheckResult("standard_prior_dominance", "Corollary 1: envelope ledger dominates the generic ledger")
    std = MultivariateGaussian.standard(d)
    for i in range(corollary_trials or min(trials, 200)):
        rng = make_rng(seed + 90_000 + i)
        n1 = perturbed_partner(std, float(rng.uniform(1e-5, 0.08)), rng)
        p = mixture_moments(random_mixture(d, rng))
        gen = stability_bound(p, n1, std)
        cb = standard_prior_bound(n1, p)
        if gen.preconditions_ok:
            margin = cb.total - gen.total
            cor.record(margin, margin >= -1e-12 * gen.total, {"seed": seed + 90_000 + i})
    skipped = sum(not r["preconditions_ok"] for r in rows)
    return [sound, ident, cor], rows, {"instances_outside_preconditions": skipped}


def tightness_sweep(eps_grid=DEFAULT_EPS_GRID, c=2.0, d=2):
    match = CheckResult("tightness_gap_exact", "Proposition 1: KL(P||N1) - KL(P||N2) = t sqrt(2 eps) - eps")
    sound = CheckResult("tightness_within_bound", "Theorem 1 on the tightness instance")
    rows = []
    gaps = []
    for eps in eps_grid:
        inst = tightness_instance(c, eps, d)
        measured = inst.measured_gap()
        gaps.append(measured)
        err = abs(measured - inst.predicted_gap)
        match.record(1e-10 - err, err <= 1e-10, {"eps": eps, "err": err})
        b = stability_bound(MomentSummary.of_gaussian(inst.p), inst.n1, inst.n2)
        margin = b.total - abs(measured)
        sound.record(margin, margin >= 0 or not b.preconditions_ok, {"eps": eps})
        rows.append({
            "eps": eps, "c": c, "d": d, "measured_gap": measured, "predicted_gap": inst.predicted_gap,
            "bound_total": b.total, "preconditions_ok": b.preconditions_ok,
        })
    slope_check = CheckResult("tightness_sqrt_rate", "Proposition 1: gap = Theta(sqrt(eps)), log-log slope 0.5 +- 0.02")
    slope = fit_loglog_slope(eps_grid, gaps) if len(eps_grid) >= 2 else float("nan")
    slope_check.record(0.02 - abs(slope - 0.5), abs(slope - 0.5) <= 0.02, {"slope": slope})
    return [match, sound, slope_check], rows, {"fitted_slope": slope}


def mc_oracle_agreement(seed=0, trials=500, d=2, samples=1_000_000):
    """Fraction of cases where the sampled log-ratio mean lies within 4 standard
    errors of the exact moment value."""
    c = CheckResult("mc_oracle_agreement", "Theorem 1 step 1: exact moment formula vs Monte Carlo")
    for i in range(trials):
        gm, n1, n2 = _theorem_instance(seed + i, d)
        m = mixture_moments(gm)
        exact = expected_log_ratio(m, n1, n2)
        est, se = mc_expected_log_ratio(sample(gm, samples, seed + 7 * i + 1), n1, n2)
        z = abs(est - exact) / se if se > 0 else (0.0 if est == exact else math.inf)
        c.record(4.0 - z, z <= 4.0, {"seed": seed + i, "z": z})
    return c
