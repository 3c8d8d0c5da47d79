"""Command-line entry point: ``klstab <command> [options]``.

Exit status is 0 when every check passes, 1 when any instance violates a
checked inequality (a manifest goes to stderr), and 2 on invalid usage.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import asdict, dataclass, field

from . import __version__
from . import suites
from .ood import ood_demo
from .perturbation import SMALL_EPS, SWEEP_COLUMNS, _fmt

COMMANDS = ("verify-lemmas", "verify-perturbation", "verify-theorem", "tightness-sweep", "ood-demo")
THEOREM_COMMANDS = ("verify-theorem", "tightness-sweep")

TIGHTNESS_COLUMNS = ["eps", "c", "d", "measured_gap", "predicted_gap", "bound_total", "preconditions_ok"]
THEOREM_COLUMNS = [
    "seed", "d", "epsilon", "expected_log_ratio", "bound_total", "bound_total_taylor", "preconditions_ok", "margin",
]
CHECK_COLUMNS = ["name", "paper_anchor", "instances", "failures", "worst_margin"]


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    seed: int = 0
    dimension: int = 2
    trials: int = 1000
    eps_grid: list = field(default_factory=lambda: list(suites.DEFAULT_EPS_GRID))
    output_path: str | None = None
    format: str = "json"
    c: float = 2.0

    def validate(self):
        if self.command not in COMMANDS:
            raise UsageError(f"unknown command {self.command!r}")
        if self.dimension < 1:
            raise UsageError("--dim must be a positive integer")
        if self.trials < 1:
            raise UsageError("--trials must be a positive integer")
        if self.format not in ("json", "csv"):
            raise UsageError("--format must be json or csv")
        if not self.eps_grid or any(not (e > 0) for e in self.eps_grid):
            raise UsageError("--eps-grid entries must be positive")
        if self.command in THEOREM_COMMANDS and any(e >= SMALL_EPS for e in self.eps_grid):
            raise UsageError("--eps-grid entries must lie in (0, 1/12) for theorem commands")
        if self.command == "tightness-sweep" and not self.c > 0:
            raise UsageError("--c must be positive")
        return self


def _parse_grid(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"invalid eps grid {text!r}") from exc


def build_parser():
    parser = argparse.ArgumentParser(prog="klstab", description="Verify KL stability bounds for perturbed Gaussians.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--dim", "--dimension", dest="dimension", type=int, default=2)
        p.add_argument("--trials", type=int, default=1000)
        p.add_argument("--eps-grid", type=_parse_grid, default=None, help="comma-separated positive reals")
        p.add_argument("--out", dest="output_path", default=None, help="report path (stdout when omitted)")
        p.add_argument("--format", choices=("json", "csv"), default="json")
        if name == "tightness-sweep":
            p.add_argument("--c", type=float, default=2.0, help="separation KL(P||N1)")
    return parser


def config_from_args(argv=None):
    args = build_parser().parse_args(argv)
    cfg = RunConfig(
        command=args.command,
        seed=args.seed,
        dimension=args.dimension,
        trials=args.trials,
        output_path=args.output_path,
        format=args.format,
        c=getattr(args, "c", 2.0),
    )
    if args.eps_grid is not None:
        cfg.eps_grid = args.eps_grid
    return cfg.validate()


def _execute(cfg):
    d, seed, trials = cfg.dimension, cfg.seed, cfg.trials
    if cfg.command == "verify-lemmas":
        checks, rows, info = suites.verify_lemmas(seed=seed, trials=trials)
        return checks, rows, info, CHECK_COLUMNS
    if cfg.command == "verify-perturbation":
        lo, hi = min(cfg.eps_grid), max(cfg.eps_grid)
        checks, rows, info = suites.verify_perturbation(seed=seed, trials=trials, d=d, eps_min=lo, eps_max=hi)
        return checks, rows, info, SWEEP_COLUMNS
    if cfg.command == "verify-theorem":
        checks, rows, info = suites.verify_theorem(seed=seed, trials=trials, d=d)
        return checks, rows, info, THEOREM_COLUMNS
    if cfg.command == "tightness-sweep":
        checks, rows, info = suites.tightness_sweep(cfg.eps_grid, c=cfg.c, d=d)
        return checks, rows, info, TIGHTNESS_COLUMNS
    scenario, report = ood_demo(d=d, seed=seed)
    checks = _ood_checks(report)
    info = {"report": report.to_dict(), "flow": scenario.flow.to_dict()}
    return checks, [], info, None


def _ood_checks(report):
    sm = suites.CheckResult("second_moment_propagation", "Proposition 2: E||Z2||^2 <= 2||f(0)||^2 + 2 C^2 E||X2||^2")
    chk = report.second_moment_check
    sm.record(chk.rhs - chk.lhs, chk.holds)
    sep = suites.CheckResult("separation_certified", "Proposition 2: KL(Q_Z||prior) >= C - O(sqrt(eps)) > 0")
    sep.record(report.certified_lower_bound, report.separation_certified, {"lower_bound": report.certified_lower_bound})
    dec = suites.CheckResult("latent_log_ratio_identity", "Theorem 1 step 1 on OOD latents: sample mean equals moment formula")
    err = abs(report.expected_log_ratio_ood - report.expected_log_ratio_ood_exact)
    tol = 1e-8 * max(1.0, abs(report.expected_log_ratio_ood_exact))
    dec.record(tol - err, err <= tol, {"err": err})
    return [sm, sep, dec]


def _json_safe(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    return obj


def render_json(cfg, checks, info):
    config = asdict(cfg)
    config.pop("output_path")
    report = {
        "command": cfg.command,
        "seed": cfg.seed,
        "config": config,
        "checks": [c.to_dict() for c in checks],
        "violations": sum(c.failures for c in checks),
        **info,
    }
    return json.dumps(_json_safe(report), indent=2, sort_keys=True) + "\n"


def render_csv(rows, columns):
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns, extrasaction="ignore", lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: _fmt(row.get(k)) for k in columns})
    return buf.getvalue()


def run(cfg, stdout=None, stderr=None):
    """Run one suite, write its report, and return the process exit status."""
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    checks, rows, info, columns = _execute(cfg)

    if cfg.format == "csv":
        if columns is None:
            flat = {k: v for k, v in info["report"].items() if not isinstance(v, dict)}
            text = render_csv([flat], list(flat))
        elif cfg.command == "verify-lemmas":
            text = render_csv([c.to_dict() for c in checks], columns)
        else:
            text = render_csv(rows, columns)
    else:
        text = render_json(cfg, checks, info)

    if cfg.output_path:
        with open(cfg.output_path, "w", newline="") as fh:
            fh.write(text)
    else:
        stdout.write(text)

    if "fitted_slope" in info:
        print(f"fitted_slope={info['fitted_slope']:.6f}", file=stderr if not cfg.output_path else stdout)

    failed = [c for c in checks if not c.passed]
    for c in failed:
        print(f"VIOLATION {c.name}: {c.failures}/{c.instances} failed ({c.paper_anchor})", file=stderr)
        for v in c.violations[:5]:
            print(f"  {json.dumps(_json_safe(v), sort_keys=True)}", file=stderr)
    return 1 if failed else 0


def main(argv=None):
    try:
        cfg = config_from_args(argv)
    except UsageError as exc:
        print(f"klstab: error: {exc}", file=sys.stderr)
        return 2
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
