"""Command-line front end: ``netident {check,simulate,identify,sweep}``."""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
import warnings
from dataclasses import replace
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .deriv import SGConfig, exact_jet, jet_to_derivatives
from .errors import NetIdentError, RankDeficient, StageFailed, UnmeasuredSink, GatingExhausted
from .graph import (identification_schedule, linearity_hazard, parallel_path_groups,
                    required_measurements, sinks, validate)
from .ident import format_report, identify, write_report_csv
from .netfile import load_network, resolve_spec_path
from .sim import ExperimentPlan, run_batch, write_experiments_csv

log = logging.getLogger("netident")


def build_parser():
    parser = argparse.ArgumentParser(prog="netident", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--spec", required=True,
                       help="network file, or the name of a shipped one (path3, diamond4, ...)")
        p.add_argument("--seed", type=int)
        p.add_argument("--k", type=int, help="experiments per stage")
        p.add_argument("--dt", type=float, help="sampling period h")
        p.add_argument("--samples", type=int, help="samples per trajectory")
        p.add_argument("--substeps", type=int, help="RK4 steps per sampling period")
        p.add_argument("--ic", help="initial-condition interval LO,HI")
        p.add_argument("--out", type=Path, help="output directory")
        p.add_argument("-v", "--verbose", action="store_true")

    p = sub.add_parser("check", help="identifiability analysis and identification schedule")
    p.add_argument("--spec", required=True)
    p.add_argument("-v", "--verbose", action="store_true")

    p = sub.add_parser("simulate", help="simulate experiments and write exp_<k>.csv files")
    common(p)
    p.add_argument("--sigma", type=float)

    p = sub.add_parser("identify", help="identify all edge functions")
    common(p)
    p.add_argument("--sigma", type=float)
    p.add_argument("--exact-derivatives", action="store_true",
                   help="use exact jets instead of Savitzky-Golay estimates")
    p.add_argument("--dump-jets", action="store_true",
                   help="write per-stage jets of the identified model as CSV")

    p = sub.add_parser("sweep", help="RMSE table over noise levels")
    common(p)
    p.add_argument("--sigma", type=float, action="append", required=True)
    p.add_argument("--reps", type=int, default=10)
    p.add_argument("--exact-derivatives", action="store_true")
    return parser


def load(args):
    spec, overrides = load_network(resolve_spec_path(args.spec))
    return spec, overrides


def make_plan(overrides, args, sigma=None) -> ExperimentPlan:
    def pick(flag, key, default):
        value = getattr(args, flag, None)
        return value if value is not None else overrides.get(key, default)

    ic = getattr(args, "ic", None)
    ic = tuple(float(v) for v in ic.split(",")) if ic else overrides.get("ic", (-1.0, 1.0))
    if sigma is None:
        flag = getattr(args, "sigma", None)
        sigma = flag if isinstance(flag, float) else overrides.get("sigma", 0.0)
    return ExperimentPlan(
        count=pick("k", "K", 50),
        intervals=(tuple(ic),),
        inputs=overrides.get("u"),
        period=pick("dt", "h", 0.4),
        samples=pick("samples", "samples", 10),
        sigma=sigma,
        seed=pick("seed", "seed", 0),
        substeps=pick("substeps", "substeps", 50),
    )


def make_sg(overrides, plan) -> SGConfig:
    return SGConfig(overrides.get("window", 10), overrides.get("degree", 5), plan.period)


def edge_label(spec, idx):
    e = spec.edges[idx]
    return f"{e.tail}->{e.head}"


def cmd_check(args) -> int:
    spec, _ = load(args)
    validate(spec)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        required = required_measurements(spec)
    hazards = linearity_hazard(spec)
    print(f"sinks: {sorted(sinks(spec))}")
    print(f"required measurements: {sorted(required)}")
    print(f"measured: {sorted(spec.measured)}")
    status = 0
    missing = required - spec.measured
    if missing:
        print(f"unmeasured sink(s): {sorted(missing)}")
        status = 1
    for s in sorted(sinks(spec)):
        for g in parallel_path_groups(spec, s):
            paths = ", ".join("-".join(map(str, p)) for p in g.paths)
            print(f"parallel paths to {s}: source {g.source}, length {g.length}: {paths}")
    for h in hazards:
        print(f"hazard: {h}")
        status = 1
    if not missing:
        print("schedule:")
        for i, st in enumerate(identification_schedule(spec)):
            edges = " ".join(edge_label(spec, e) for e in st.edges)
            kind = "joint" if len(st.edges) > 1 else "single"
            print(f"  stage {i}: order {st.derivative_order} sink {st.sink} {kind} {{{edges}}} "
                  f"zeroed {sorted(st.zeroed_nodes)}")
    return status


def cmd_simulate(args) -> int:
    spec, overrides = load(args)
    validate(spec)
    plan = make_plan(overrides, args)
    exps = run_batch(spec, plan)
    out = args.out or Path(".")
    paths = write_experiments_csv(exps, out)
    print(f"wrote {len(paths)} experiment files to {out}")
    return 0


def _jet_dumper(spec, out_dir, topo):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    known = {}

    def dump(result, x0):
        known.update(result.coefficients)
        coeffs = {i: known.get(i, np.zeros(len(e.basis))) for i, e in enumerate(spec.edges)}
        m = result.stage.derivative_order
        jet = exact_jet(spec, np.asarray(x0).T, order=m, coefficients=coeffs, topo=topo)
        path = out_dir / f"jets_stage{result.index}.csv"
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["experiment", "node"] + [f"d{k}" for k in range(m + 1)])
            for v in spec.nodes:
                d = jet_to_derivatives(jet, v)
                for k in range(d.shape[1]):
                    w.writerow([k, v] + [repr(float(x)) for x in d[:, k]])

    return dump


def run_identify(spec, overrides, args, sigma=None, seed=None):
    plan = make_plan(overrides, args, sigma)
    if seed is not None:
        plan = replace(plan, seed=seed)
    on_stage = None
    if getattr(args, "dump_jets", False):
        on_stage = _jet_dumper(spec, args.out or Path("."), validate(spec))
    return identify(spec, plan, sg=make_sg(overrides, plan),
                    exact_derivatives=args.exact_derivatives, on_stage=on_stage)


def cmd_identify(args) -> int:
    spec, overrides = load(args)
    report = run_identify(spec, overrides, args)
    for r in report.stages:
        log.info("stage %d order %d edges %s K=%d cond=%.3g residual=%.3g retries=%d",
                 r.index, r.stage.derivative_order,
                 ",".join(edge_label(spec, e) for e in r.stage.edges),
                 r.experiments, r.condition, r.residual, r.retries)
    print(format_report(report, spec))
    if args.out:
        write_report_csv(report, spec, args.out)
    return 0


def _sweep_job(job):
    spec_path, overrides, args, sigma, seed = job
    spec, _ = load_network(spec_path)
    try:
        return run_identify(spec, overrides, args, sigma, seed).rmse
    except NetIdentError as exc:
        return str(exc)


def thread_cap():
    try:
        return max(1, int(os.environ.get("NETIDENT_THREADS", "1")))
    except ValueError:
        return 1


def cmd_sweep(args) -> int:
    spec_path = resolve_spec_path(args.spec)
    spec, overrides = load_network(spec_path)
    validate(spec)
    if not spec.has_truth:
        raise NetIdentError("sweep needs true coefficients in the network file")
    base = make_plan(overrides, args)
    jobs = [(spec_path, overrides, args, sigma, base.seed + r)
            for sigma in args.sigma for r in range(args.reps)]
    workers = min(thread_cap(), len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_job, jobs))
    else:
        results = [_sweep_job(j) for j in jobs]

    rows = []
    for i, sigma in enumerate(args.sigma):
        chunk = results[i * args.reps:(i + 1) * args.reps]
        ok = np.array([r for r in chunk if not isinstance(r, str)], dtype=float)
        for r in chunk:
            if isinstance(r, str):
                log.warning("sigma=%g: repetition failed: %s", sigma, r)
        if len(ok):
            q1, med, q3 = np.percentile(ok, [25, 50, 75])
        else:
            q1 = med = q3 = float("nan")
        rows.append({"sigma": sigma, "median_rmse": med, "q1": q1, "q3": q3,
                     "reps": args.reps, "failed": len(chunk) - len(ok)})

    print(f"{'sigma':>10} {'median RMSE':>12} {'q1':>10} {'q3':>10} {'failed':>6}")
    for r in rows:
        print(f"{r['sigma']:>10.0e} {r['median_rmse']:>12.4g} {r['q1']:>10.4g} "
              f"{r['q3']:>10.4g} {r['failed']:>6}")
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        with open(args.out / "sweep.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
            w.writeheader()
            w.writerows(rows)
    return 0


HINTS = {
    RankDeficient: "increase --k or widen --ic so the initial conditions spread out",
    GatingExhausted: "widen --ic; the known downstream slopes vanish on most of the interval",
    UnmeasuredSink: "add every sink to the 'measured' line",
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s: %(message)s"))
    log.addHandler(handler)
    log.setLevel(logging.INFO if args.verbose else logging.WARNING)
    log.propagate = False
    commands = {"check": cmd_check, "simulate": cmd_simulate,
                "identify": cmd_identify, "sweep": cmd_sweep}
    try:
        return commands[args.command](args)
    except (NetIdentError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        cause = exc.cause if isinstance(exc, StageFailed) else exc
        for kind, hint in HINTS.items():
            if isinstance(cause, kind):
                print(f"hint: {hint}", file=sys.stderr)
        return 2
    finally:
        log.removeHandler(handler)


if __name__ == "__main__":
    sys.exit(main())
