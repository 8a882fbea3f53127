"""Command-line entry point.

  bbm run <config.json>          run one experiment from a JSON config
  bbm beta0 --a A --t T [--tol]  print the exact beta=0 mean overlap
  bbm check --suite NAME         run a named verification suite
  bbm fit <estimates.csv>        fit a decay exponent to a CSV of estimates

Exit codes: 0 all verdicts pass, 2 verdict failure, 1 error.
BBM_THREADS overrides the kernel thread count.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys

from .errors import BBMError
from .harness import ExperimentConfig, fit_exponent, run_experiment
from .theory import exact_mean_overlap_beta0

#: Named suites runnable without a config file; small default geometries.
CHECK_SUITES = {
    "martingale": dict(kind="martingale_suite", beta=0.5, t_grid=[2.0, 5.0], replicas=4000),
    "spinal": dict(kind="rn_check", beta=0.5, t_grid=[2.0], replicas=4000),
    "ballot": dict(kind="ballot_suite", t_grid=[16.0, 64.0, 256.0], replicas=30000),
    "beta0": dict(kind="beta0_exact", a=0.5, t_grid=[float(t) for t in range(1, 31)], replicas=2),
    "typical": dict(kind="typical_overlap", beta=0.3, a=0.5, t_grid=[6.0, 8.0, 10.0], replicas=400),
}


def _cmd_run(args) -> int:
    with open(args.config) as f:
        cfg = ExperimentConfig.from_json(f.read())
    return run_experiment(cfg)


def _cmd_beta0(args) -> int:
    val = exact_mean_overlap_beta0(args.a, args.t, rel_tol=args.tol)
    print(json.dumps({"a": args.a, "t": args.t, "mean_overlap": val}))
    return 0


def _cmd_check(args) -> int:
    spec = dict(CHECK_SUITES[args.suite])
    spec.setdefault("a", 0.5)
    cfg = ExperimentConfig(master_seed=args.seed, output_dir=args.output_dir, **spec)
    status = run_experiment(cfg)
    with open(f"{args.output_dir}/summary.json") as f:
        summary = json.load(f)
    for v in summary["verdicts"]:
        print(f"[{'PASS' if v.get('passed') else 'FAIL'}] {v['name']}")
    return status


def _cmd_fit(args) -> int:
    with open(args.csv) as f:
        reader = csv.DictReader(f)
        pts = [(float(r["t"]), float(r["log_point"]), float(r["se_log"])) for r in reader]
    fit = fit_exponent(pts)
    print(json.dumps(fit.__dict__))
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="bbm", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment from a JSON config")
    p_run.add_argument("config")
    p_run.set_defaults(fn=_cmd_run)

    p_b0 = sub.add_parser("beta0", help="exact beta=0 mean overlap")
    p_b0.add_argument("--a", type=float, required=True)
    p_b0.add_argument("--t", type=float, required=True)
    p_b0.add_argument("--tol", type=float, default=1e-10)
    p_b0.set_defaults(fn=_cmd_beta0)

    p_chk = sub.add_parser("check", help="run a named verification suite")
    p_chk.add_argument("--suite", choices=sorted(CHECK_SUITES), required=True)
    p_chk.add_argument("--seed", type=int, default=1)
    p_chk.add_argument("--output-dir", default=".")
    p_chk.set_defaults(fn=_cmd_check)

    p_fit = sub.add_parser("fit", help="fit a decay exponent to estimates.csv")
    p_fit.add_argument("csv")
    p_fit.set_defaults(fn=_cmd_fit)

    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except BBMError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"io error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
