"""Simulation of the network ODE and noisy sampling of measured nodes.

State of node ``i`` evolves as ``dx_i/dt = sum_j f_{i,j}(x_j) + u_i`` with
constant inputs ``u``. Integration is classical fixed-step RK4, vectorized
over a batch of initial conditions.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .basis import edge_eval
from .errors import GatingExhausted, NonFiniteState
from .graph import NetworkSpec

OVERFLOW_GUARD = 1e12


@dataclass(frozen=True)
class ExperimentPlan:
    count: int = 50
    intervals: tuple = ((-1.0, 1.0),)
    inputs: Optional[tuple] = None
    period: float = 0.4
    samples: int = 10
    sigma: float = 0.0
    seed: int = 0
    substeps: int = 50
    max_retries: int = 100

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("need at least one experiment")
        if self.samples < 2:
            raise ValueError("need at least two samples per trajectory")
        if not self.period > 0:
            raise ValueError("sampling period must be positive")
        if self.sigma < 0:
            raise ValueError("noise sigma must be non-negative")
        if self.substeps < 1:
            raise ValueError("substeps must be positive")

    @property
    def dt(self):
        return self.period / self.substeps

    def interval(self, node):
        """Initial-condition interval of ``node`` (a single interval applies to all nodes)."""
        if len(self.intervals) == 1:
            return tuple(self.intervals[0])
        return tuple(self.intervals[node - 1])

    def input_vector(self, n):
        if self.inputs is None:
            return np.zeros(n)
        u = np.asarray(self.inputs, dtype=float)
        if u.shape != (n,):
            raise ValueError(f"expected {n} inputs, got {u.shape}")
        return u


@dataclass
class Trajectory:
    """Dense RK4 output; ``states`` has shape ``(steps + 1, *batch, n)``."""

    times: np.ndarray
    states: np.ndarray
    dt: float

    def node(self, node):
        return self.states[..., node - 1]


@dataclass(frozen=True)
class SampleSet:
    node: int
    times: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    sigma: float = 0.0
    seed: int = 0

    @property
    def period(self):
        return float(self.times[1] - self.times[0])


@dataclass
class Experiment:
    x0: np.ndarray
    samples: dict
    retries: int = 0


def _edge_functions(spec, coefficients):
    funcs = []
    for idx, e in enumerate(spec.edges):
        coeffs = e.coefficients if coefficients is None else coefficients.get(idx, e.coefficients)
        if coeffs is None:
            raise ValueError(f"edge {e.name} has no coefficients to simulate with")
        funcs.append((e.tail - 1, e.head - 1, e.function(coeffs)))
    return funcs


def rhs_factory(spec: NetworkSpec, u, coefficients=None) -> Callable:
    funcs = _edge_functions(spec, coefficients)
    u = np.asarray(u, dtype=float)

    def rhs(x):
        dx = np.broadcast_to(u, x.shape).copy()
        for tail, head, f in funcs:
            dx[..., head] += edge_eval(f, x[..., tail])
        return dx

    return rhs


def simulate(spec: NetworkSpec, x0, u=None, t_end=1.0, dt=1e-3, coefficients=None) -> Trajectory:
    """Integrate from ``x0`` (shape ``(n,)`` or ``(K, n)``) to ``t_end`` with RK4 step ``dt``."""
    x = np.array(x0, dtype=float)
    n = spec.node_count
    if x.shape[-1] != n:
        raise ValueError(f"x0 has {x.shape[-1]} components, network has {n} nodes")
    u = np.zeros(n) if u is None else np.asarray(u, dtype=float)
    steps = int(round(t_end / dt))
    if steps < 0 or not np.isclose(steps * dt, t_end, rtol=1e-9, atol=1e-12):
        raise ValueError(f"step {dt} does not divide t_end {t_end}")
    f = rhs_factory(spec, u, coefficients)
    out = np.empty((steps + 1,) + x.shape)
    out[0] = x
    for s in range(steps):
        k1 = f(x)
        k2 = f(x + 0.5 * dt * k1)
        k3 = f(x + 0.5 * dt * k2)
        k4 = f(x + dt * k3)
        x = x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.abs(x) < OVERFLOW_GUARD):
            raise NonFiniteState(f"state left |x| < {OVERFLOW_GUARD:g} at t = {(s + 1) * dt:g}")
        out[s + 1] = x
    return Trajectory(np.arange(steps + 1) * dt, out, dt)


def noise_generator(seed, *key):
    """Counter-based (Philox) stream keyed by ``(seed, *key)``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), *map(int, key)])))


def sample(trajectory: Trajectory, node: int, plan: ExperimentPlan, experiment=0,
           stream=0, batch_index=None) -> SampleSet:
    """Sample ``node`` every ``plan.period`` and add Gaussian measurement noise."""
    stride = int(round(plan.period / trajectory.dt))
    if not np.isclose(stride * trajectory.dt, plan.period):
        raise ValueError("integrator step does not divide the sampling period")
    last = (plan.samples - 1) * stride
    if last >= len(trajectory.times):
        raise ValueError("trajectory shorter than the sampling horizon")
    xs = trajectory.node(node)
    if batch_index is not None:
        xs = xs[:, batch_index]
    values = np.array(xs[0:last + 1:stride], dtype=float)
    if plan.sigma > 0:
        values = values + plan.sigma * noise_generator(
            plan.seed, stream, experiment, node).standard_normal(plan.samples)
    times = np.arange(plan.samples) * plan.period
    return SampleSet(node, times, values, plan.sigma, plan.seed)


def draw_initial_conditions(spec, plan, zeroed_nodes, accept=None, stream=0):
    """Uniform draws per experiment, re-drawn until ``accept(x0)`` holds.

    Returns ``(x0 array of shape (K, n), retries per experiment)``.
    """
    n = spec.node_count
    x0 = np.zeros((plan.count, n))
    retries = np.zeros(plan.count, dtype=int)
    for k in range(plan.count):
        rng = noise_generator(plan.seed, stream, k, 0)
        for attempt in range(plan.max_retries + 1):
            x = np.array([0.0 if v in zeroed_nodes else rng.uniform(*plan.interval(v))
                          for v in spec.nodes])
            if accept is None or accept(x):
                break
        else:
            raise GatingExhausted(
                f"experiment {k}: no acceptable initial condition after "
                f"{plan.max_retries} retries; widen the intervals or relax gating")
        x0[k] = x
        retries[k] = attempt
    return x0, retries


def run_batch(spec: NetworkSpec, plan: ExperimentPlan, zeroed_nodes=frozenset(),
              accept=None, stream=0, coefficients=None, nodes=None) -> list:
    """Run ``plan.count`` experiments and sample the measured nodes of each.

    All experiments are integrated together as one vectorized batch, so the
    result is independent of scheduling; experiment ``k`` uses RNG streams
    keyed by ``(seed, stream, k)``.
    """
    x0, retries = draw_initial_conditions(spec, plan, zeroed_nodes, accept, stream)
    traj = simulate(spec, x0, plan.input_vector(spec.node_count),
                    (plan.samples - 1) * plan.period, plan.dt, coefficients)
    nodes = sorted(spec.measured) if nodes is None else list(nodes)
    return [Experiment(x0[k], {v: sample(traj, v, plan, k, stream, batch_index=k) for v in nodes},
                       int(retries[k]))
            for k in range(plan.count)]


def write_experiments_csv(experiments, out_dir) -> list:
    """Write one ``exp_<k>.csv`` per experiment with header ``t,node_<i>,...``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for k, exp in enumerate(experiments):
        nodes = sorted(exp.samples)
        times = exp.samples[nodes[0]].times
        path = out_dir / f"exp_{k}.csv"
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t"] + [f"node_{v}" for v in nodes])
            for s, t in enumerate(times):
                w.writerow([repr(float(t))] + [repr(float(exp.samples[v].values[s])) for v in nodes])
        paths.append(path)
    return paths


def read_experiment_csv(path) -> dict:
    """Inverse of :func:`write_experiments_csv` for one file: ``{node: SampleSet}``."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], np.array(rows[1:], dtype=float)
    times = body[:, 0]
    return {int(col.split("_", 1)[1]): SampleSet(int(col.split("_", 1)[1]), times, body[:, j + 1])
            for j, col in enumerate(header[1:])}
