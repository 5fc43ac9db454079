"""Staged least-squares identification of edge functions from sink derivatives.

Each stage regresses the m-th time derivative of a sink at t = 0 on the
dictionary of the stage edges. The sink derivative at the scheduled order
is affine in the stage coefficients, so design columns are obtained by
propagating exact jets with one unit coefficient switched on at a time,
and the offset by propagating the jet with all stage coefficients at zero.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .basis import EdgeFunction, edge_deriv_k
from .deriv import SGConfig, exact_jet, jet_to_derivatives, sg_fit_at_start
from .errors import DictionaryMismatch, NetIdentError, RankDeficient, StageFailed
from .graph import NetworkSpec, Stage, identification_schedule, linearity_hazard, validate
from .sim import ExperimentPlan, draw_initial_conditions, run_batch

GATE_TAU = 1e-2
COND_LIMIT = 1e8


@dataclass
class RegressionProblem:
    design: np.ndarray
    target: np.ndarray
    labels: list
    condition: float = float("nan")

    def __post_init__(self):
        if self.design.shape[0] != len(self.target):
            raise ValueError("design rows and target length differ")
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("column labels must be unique")
        self.condition = scaled_condition(self.design)


@dataclass
class StageResult:
    index: int
    stage: Stage
    experiments: int
    condition: float
    residual: float
    retries: int
    coefficients: dict


@dataclass
class IdentificationReport:
    estimates: dict
    stages: list = field(default_factory=list)
    rmse: Optional[float] = None


def scaled_condition(design):
    """2-norm condition number after scaling every column to unit norm."""
    norms = np.linalg.norm(design, axis=0)
    if design.size == 0 or np.any(norms == 0):
        return float("inf")
    s = np.linalg.svd(design / norms, compute_uv=False)
    return float(s[0] / s[-1]) if s[-1] > 0 else float("inf")


def _known_functions(spec, known):
    return {idx: EdgeFunction(spec.edges[idx].basis, coeffs) for idx, coeffs in known.items()}


def gate_initial_conditions(spec: NetworkSpec, stage: Stage, known: dict, x0,
                            tau_g=GATE_TAU, tau_0=GATE_TAU) -> bool:
    """Accept ``x0`` when every known downstream slope and required state is away from 0."""
    x0 = np.asarray(x0, dtype=float)
    for v in stage.nonzero_nodes:
        if abs(x0[v - 1]) < tau_0:
            return False
    funcs = _known_functions(spec, known)
    for idx in stage.downstream_edges(spec):
        slope = edge_deriv_k(funcs[idx], x0[spec.edges[idx].tail - 1], 1)
        if abs(slope) < tau_g:
            return False
    return True


def _probe_coefficients(spec, stage, known):
    base = {}
    for idx, e in enumerate(spec.edges):
        base[idx] = known[idx] if idx in known else np.zeros(len(e.basis))
    for idx in stage.edges:
        base[idx] = np.zeros(len(spec.edges[idx].basis))
    return base


def stage_design(spec: NetworkSpec, stage: Stage, known: dict, experiments,
                 topo=None) -> RegressionProblem:
    """Regression problem for one stage.

    ``experiments`` is a sequence of ``(x0, y)`` with ``y`` the estimated
    ``stage.derivative_order``-th derivative of the stage sink at t = 0.
    """
    topo = validate(spec) if topo is None else topo
    m, sink = stage.derivative_order, stage.sink
    x0 = np.array([np.asarray(x, dtype=float) for x, _ in experiments]).T
    y = np.array([float(v) for _, v in experiments])
    coeffs = _probe_coefficients(spec, stage, known)

    def sink_derivative(c):
        return jet_to_derivatives(exact_jet(spec, x0, order=m, coefficients=c, topo=topo), sink)[m]

    offset = sink_derivative(coeffs)
    columns, labels = [], []
    for idx in stage.edges:
        for ell in range(len(spec.edges[idx].basis)):
            probe = dict(coeffs)
            unit = np.zeros(len(spec.edges[idx].basis))
            unit[ell] = 1.0
            probe[idx] = unit
            columns.append(sink_derivative(probe) - offset)
            labels.append((idx, ell))
    return RegressionProblem(np.column_stack(columns), y - offset, labels)


def solve(problem: RegressionProblem, cond_limit=COND_LIMIT, hazard=None):
    """Minimum-norm least squares via SVD on the column-scaled design.

    Returns ``(coefficients, diagnostics)`` where diagnostics holds the
    scaled condition number and the residual norm.
    """
    A, b = problem.design, problem.target
    rows, cols = A.shape
    cond = problem.condition
    if rows < cols or not cond <= cond_limit:
        reason = (f"{rows} experiments for {cols} unknowns" if rows < cols
                  else f"condition number {cond:.3g} exceeds limit {cond_limit:.3g}")
        if hazard is not None:
            msg = f"rank-deficient regression ({reason}): {hazard}"
        else:
            msg = (f"rank-deficient regression ({reason}); use more experiments or more "
                   f"widely spread initial conditions")
        raise RankDeficient(msg, condition=cond, hazard=hazard)
    norms = np.linalg.norm(A, axis=0)
    scaled, *_ = np.linalg.lstsq(A / norms, b, rcond=None)
    x = scaled / norms
    residual = float(np.linalg.norm(A @ x - b))
    return x, {"condition": cond, "residual": residual}


def _split(problem, x):
    out = {}
    for (idx, ell), value in zip(problem.labels, x):
        out.setdefault(idx, {})[ell] = value
    return {idx: np.array([d[k] for k in sorted(d)]) for idx, d in out.items()}


def _stage_hazard(spec, stage):
    edges = {(spec.edges[i].tail, spec.edges[i].head) for i in stage.edges}
    for h in linearity_hazard(spec):
        if set(h.edges) <= edges:
            return str(h)
    return None


def identify(spec: NetworkSpec, plan: ExperimentPlan, schedule=None, *, sg: SGConfig = None,
             exact_derivatives=False, provider: Callable = None, tau_g=GATE_TAU,
             tau_0=GATE_TAU, cond_limit=COND_LIMIT, on_stage=None) -> IdentificationReport:
    """Identify every edge stage by stage.

    By default measurements are simulated from the spec's true coefficients.
    ``provider(stage_index, stage, x0)`` may instead return an array of sink
    samples with shape ``(K, samples)`` for the requested initial
    conditions. ``exact_derivatives`` replaces the Savitzky-Golay estimate
    by exact jets of the true system. ``on_stage(result, experiments)`` is
    called after each stage.
    """
    topo = validate(spec)
    schedule = identification_schedule(spec) if schedule is None else schedule
    sg = sg or SGConfig(10, 5, plan.period)
    known, results = {}, []
    for s_idx, stage in enumerate(schedule):
        try:
            m = stage.derivative_order
            n_unknown = sum(len(spec.edges[i].basis) for i in stage.edges)
            stage_plan = replace(plan, count=max(plan.count, 3 * n_unknown))

            def accept(x, stage=stage):
                return gate_initial_conditions(spec, stage, known, x, tau_g, tau_0)

            if exact_derivatives:
                x0, retries = draw_initial_conditions(spec, stage_plan, stage.zeroed_nodes,
                                                      accept, stream=s_idx + 1)
                jet = exact_jet(spec, x0.T, stage_plan.input_vector(spec.node_count), m, topo=topo)
                y = jet_to_derivatives(jet, stage.sink)[m]
            elif provider is not None:
                x0, retries = draw_initial_conditions(spec, stage_plan, stage.zeroed_nodes,
                                                      accept, stream=s_idx + 1)
                values = np.asarray(provider(s_idx, stage, x0), dtype=float)
                y = sg_fit_at_start(values, sg, m)[:, m]
            else:
                exps = run_batch(spec, stage_plan, stage.zeroed_nodes, accept,
                                 stream=s_idx + 1, nodes=[stage.sink])
                x0 = np.array([e.x0 for e in exps])
                retries = np.array([e.retries for e in exps])
                values = np.array([e.samples[stage.sink].values for e in exps])
                y = sg_fit_at_start(values, sg, m)[:, m]
            problem = stage_design(spec, stage, known, list(zip(x0, y)), topo=topo)
            x, diag = solve(problem, cond_limit, hazard=_stage_hazard(spec, stage))
        except NetIdentError as exc:
            raise StageFailed(s_idx, exc) from exc
        estimates = _split(problem, x)
        known.update(estimates)
        result = StageResult(s_idx, stage, len(y), diag["condition"], diag["residual"],
                             int(np.sum(retries)), estimates)
        results.append(result)
        if on_stage is not None:
            on_stage(result, x0)
    report = IdentificationReport({i: known[i] for i in range(len(spec.edges))}, results)
    if spec.has_truth:
        report.rmse = rmse(report, spec)
    return report


def rmse(report, truth) -> float:
    """Root mean squared coefficient error over every (edge, basis) pair.

    ``report`` is an :class:`IdentificationReport` or a mapping from edge
    index to estimated coefficients; ``truth`` a spec with coefficients or
    the same kind of mapping.
    """
    est = report.estimates if isinstance(report, IdentificationReport) else report
    ref = truth.true_coefficients() if isinstance(truth, NetworkSpec) else truth
    if set(est) != set(ref):
        raise DictionaryMismatch(f"edges {sorted(est)} vs {sorted(ref)}")
    errs = []
    for idx in sorted(ref):
        a, b = np.asarray(est[idx], dtype=float), np.asarray(ref[idx], dtype=float)
        if a.shape != b.shape:
            raise DictionaryMismatch(f"edge {idx}: {a.shape} vs {b.shape} coefficients")
        errs.append(a - b)
    return float(np.sqrt(np.mean(np.concatenate(errs) ** 2)))


def coefficient_rows(report: IdentificationReport, spec: NetworkSpec) -> list:
    rows = []
    for idx, e in enumerate(spec.edges):
        for ell, b in enumerate(e.basis):
            true = e.coefficients[ell] if e.coefficients is not None else None
            hat = float(report.estimates[idx][ell])
            rows.append({
                "edge": f"{e.tail}->{e.head}",
                "basis": b.token,
                "alpha_true": "" if true is None else true,
                "alpha_hat": hat,
                "abs_err": "" if true is None else abs(hat - true),
            })
    return rows


def stage_rows(report: IdentificationReport, spec: NetworkSpec) -> list:
    return [{
        "stage": r.index,
        "order": r.stage.derivative_order,
        "edges": " ".join(f"{spec.edges[i].tail}->{spec.edges[i].head}" for i in r.stage.edges),
        "K": r.experiments,
        "cond": r.condition,
        "residual": r.residual,
        "retries": r.retries,
    } for r in report.stages]


def write_report_csv(report: IdentificationReport, spec: NetworkSpec, out_dir) -> tuple:
    """Write ``coefficients.csv`` and ``stages.csv`` into ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, rows in (("coefficients.csv", coefficient_rows(report, spec)),
                       ("stages.csv", stage_rows(report, spec))):
        path = out_dir / name
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
            w.writeheader()
            w.writerows(rows)
        paths.append(path)
    return tuple(paths)


def format_report(report: IdentificationReport, spec: NetworkSpec) -> str:
    lines = [f"{'edge':<8} {'basis':<9} {'alpha_true':>12} {'alpha_hat':>12} {'abs_err':>10}"]
    for row in coefficient_rows(report, spec):
        true = f"{row['alpha_true']:12.6f}" if row["alpha_true"] != "" else f"{'-':>12}"
        err = f"{row['abs_err']:10.2e}" if row["abs_err"] != "" else f"{'-':>10}"
        lines.append(f"{row['edge']:<8} {row['basis']:<9} {true} {row['alpha_hat']:12.6f} {err}")
    lines.append("")
    lines.append(f"{'stage':>5} {'order':>5} {'edges':<14} {'K':>4} {'cond':>10} "
                 f"{'residual':>10} {'retries':>7}")
    for row in stage_rows(report, spec):
        lines.append(f"{row['stage']:>5} {row['order']:>5} {row['edges']:<14} {row['K']:>4} "
                     f"{row['cond']:10.3g} {row['residual']:10.3g} {row['retries']:>7}")
    if report.rmse is not None:
        lines.append("")
        lines.append(f"RMSE {report.rmse:.6g}")
    return "\n".join(lines)
