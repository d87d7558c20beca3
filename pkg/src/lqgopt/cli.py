"""Command line entry point: run, slope, diag and calibrate."""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np
import yaml

from .calibration import calibrate
from .errors import ConfigError, LqgError
from .experiment import ScenarioConfig, run_scenario
from .plant import read_trace_csv
from .regret import fit_regret_slope

EXIT_OK, EXIT_CONFIG, EXIT_RUN = 0, 2, 3


def _cmd_run(args):
    scenario = ScenarioConfig.load(args.config)
    out = args.out or os.path.join("runs", scenario.name)
    report = run_scenario(scenario, out, jobs=args.jobs)
    for name, entry in report["agents"].items():
        fr = entry.get("final_regret", {}).get("median")
        sl = entry.get("adaptive_slope", {}).get("median")
        print(f"{name:8s} runs={entry['completed']}/{entry['runs']} "
              f"median_final_regret={_fmt(fr)} median_slope={_fmt(sl)}")
    print(f"wrote {out}")
    if report["failures"]:
        for f in report["failures"]:
            print(f"failed: {f['agent']} seed {f['seed']}: {f['error']}", file=sys.stderr)
        return EXIT_RUN
    return EXIT_OK


def _fmt(v):
    return "n/a" if v is None else f"{v:.4g}"


def _cmd_slope(args):
    cols = read_trace_csv(args.trace)
    sidecar = os.path.splitext(args.trace)[0] + ".json"
    J_star, T_w = args.j_star, args.t_w
    if os.path.exists(sidecar):
        with open(sidecar) as fh:
            meta = json.load(fh)
        J_star = meta.get("J_star") if J_star is None else J_star
        T_w = meta.get("T_w") if T_w is None else T_w
    if J_star is None:
        raise ConfigError(["--j-star: needed when the trace has no summary file"])
    T_w = int(T_w or 0)
    seg = np.cumsum(cols["cost"][T_w:] - J_star)
    fit = fit_regret_slope(seg)
    print(f"slope={fit.slope:.6f} stderr={fit.stderr:.6f} shift={fit.shift:.6g} "
          f"points={fit.n_points} start={T_w}")
    return EXIT_OK


def _cmd_diag(args):
    path = os.path.join(args.run_dir, "aggregate.json")
    if not os.path.exists(path):
        raise ConfigError([f"run-dir: no aggregate.json in {args.run_dir}"])
    with open(path) as fh:
        report = json.load(fh)
    print(f"scenario {report['name']}: T={report['T']} T_w={report['T_w']}")
    for name, e in report["agents"].items():
        print(f"[{name}] completed {e['completed']}/{e['runs']}")
        for phase, ex in e.get("excitation", {}).items():
            print(f"  excitation {phase}: lambda_min/t median "
                  f"{_fmt(ex['lambda_min_over_t']['median'])}, relative variation median "
                  f"{_fmt(ex['relative_variation']['median'])}, persistent in "
                  f"{ex['persistent_fraction']:.0%} of runs")
        if "containment_frequency" in e:
            print(f"  containment {e['containment_frequency']:.0%} of {e['epochs']} epochs")
        if "optimism_frequency_given_containment" in e:
            print(f"  optimism given containment "
                  f"{e['optimism_frequency_given_containment']:.0%}")
        if "degraded_epochs" in e:
            print(f"  degraded epochs {e['degraded_epochs']}")
        mon = e.get("monitors")
        if mon:
            print(f"  monitors: max |y| {mon['max_y']:.3g}, max |xhat| {mon['max_xhat']:.3g}, "
                  f"runs over guard {mon['violating_runs']}")
    for f in report.get("failures", []):
        print(f"failed: {f['agent']} seed {f['seed']}: {f['error']}")
    return EXIT_OK


def _cmd_calibrate(args):
    scenario = ScenarioConfig.load(args.config)
    cfg = scenario.agent
    T_max = args.t_max or min(scenario.T, 16 * cfg.T_w)
    seeds = range(args.start, args.start + args.seeds)
    hold = range(args.start + args.seeds, args.start + args.seeds + args.holdout)
    rep = calibrate(scenario.plant, cfg, seeds, T_max, holdout_seeds=list(hold))
    print(yaml.safe_dump({"agent": rep["constants"]}, sort_keys=True), end="")
    print(f"# quantile {rep['quantile']:.4g}; train coverage {rep['train_coverage']:.3f} "
          f"over {rep['n_train']} samples", end="")
    if "holdout_coverage" in rep:
        print(f"; holdout coverage {rep['holdout_coverage']:.3f} over {rep['n_holdout']}")
    else:
        print()
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="lqgopt", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a scenario config")
    r.add_argument("config")
    r.add_argument("--out", default=None, help="output directory (default runs/<name>)")
    r.add_argument("--jobs", type=int, default=1, help="worker processes")
    r.set_defaults(func=_cmd_run)
    s = sub.add_parser("slope", help="log-log regret slope of a trace CSV")
    s.add_argument("trace")
    s.add_argument("--j-star", type=float, default=None)
    s.add_argument("--t-w", type=int, default=None, help="start of the fitted segment")
    s.set_defaults(func=_cmd_slope)
    d = sub.add_parser("diag", help="excitation and containment summary of a run")
    d.add_argument("run_dir")
    d.set_defaults(func=_cmd_diag)
    c = sub.add_parser("calibrate", help="fit the radius constants c1, c2, c3, c_B")
    c.add_argument("config")
    c.add_argument("--seeds", type=int, default=20)
    c.add_argument("--holdout", type=int, default=20)
    c.add_argument("--start", type=int, default=10_000, help="first calibration seed")
    c.add_argument("--t-max", type=int, default=None)
    c.set_defaults(func=_cmd_calibrate)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except LqgError as exc:
        print(f"run failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUN


if __name__ == "__main__":
    sys.exit(main())
