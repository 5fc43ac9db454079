"""Derivative estimation at t = 0.

Two independent routes: a Savitzky-Golay style least-squares polynomial fit
to the first samples of a noisy trajectory, and exact truncated Taylor
series (jets) of the network states propagated through the ODE.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .basis import deriv_k
from .errors import InsufficientSamples, OrderTooHigh
from .graph import NetworkSpec, validate


@dataclass(frozen=True)
class SGConfig:
    window: int = 10
    degree: int = 5
    spacing: float = 0.4

    def __post_init__(self):
        if self.degree < 0 or self.window < self.degree + 1:
            raise ValueError(f"window {self.window} too short for degree {self.degree}")
        if not self.spacing > 0:
            raise ValueError("spacing must be positive")


def sg_weights(cfg: SGConfig, up_to: int) -> np.ndarray:
    """Rows ``k = 0..up_to`` of weights mapping the first ``window`` samples to
    the k-th derivative of the fitted polynomial at the first sample.

    The fit uses time in units of the spacing and is solved by QR.
    """
    if up_to > cfg.degree:
        raise OrderTooHigh(f"derivative order {up_to} exceeds polynomial degree {cfg.degree}")
    tau = np.arange(cfg.window, dtype=float)
    vander = np.vander(tau, cfg.degree + 1, increasing=True)
    q, r = np.linalg.qr(vander)
    # coefficients = R^{-1} Q^T y; keep the linear map explicit
    coef_map = np.linalg.solve(r, q.T)
    scale = np.array([math.factorial(k) / cfg.spacing**k for k in range(up_to + 1)])
    return scale[:, None] * coef_map[: up_to + 1]


def sg_fit_at_start(samples, cfg: SGConfig, up_to: int) -> np.ndarray:
    """Estimates of ``d^k x / dt^k`` at the first sample for ``k = 0..up_to``.

    ``samples`` is a :class:`~netident.sim.SampleSet` or a plain array of
    values spaced by ``cfg.spacing``. A 2-D array is treated as one series
    per row.
    """
    values = np.asarray(getattr(samples, "values", samples), dtype=float)
    if values.shape[-1] < cfg.window:
        raise InsufficientSamples(f"{values.shape[-1]} samples, window needs {cfg.window}")
    return values[..., : cfg.window] @ sg_weights(cfg, up_to).T


@dataclass
class Jet:
    """Taylor coefficients ``series[i-1, k]`` of node ``i`` (trailing axes: batch)."""

    series: np.ndarray

    @property
    def order(self):
        return self.series.shape[1] - 1

    def coefficients(self, node):
        return self.series[node - 1]


def _mul(a, b, m):
    out = np.zeros_like(a)
    for k in range(m + 1):
        for j in range(k + 1):
            out[k] = out[k] + a[j] * b[k - j]
    return out


def compose_series(edge, coefficients, series, m):
    """Series of ``f(x(t))`` with ``f = sum_l coefficients[l] * edge.basis[l]``."""
    a0 = series[0]
    delta = series.copy()
    delta[0] = 0.0
    out = np.zeros_like(series)
    power = np.zeros_like(series)
    power[0] = 1.0
    for k in range(m + 1):
        taylor = 0.0
        for alpha, b in zip(coefficients, edge.basis):
            if alpha != 0.0:
                taylor = taylor + alpha * deriv_k(b, a0, k)
        out = out + (taylor / math.factorial(k)) * power
        if k < m:
            power = _mul(power, delta, m)
    return out


def exact_jet(spec: NetworkSpec, x0, u=None, order=3, coefficients=None, topo=None) -> Jet:
    """Exact Taylor jet of all node states at ``t = 0``.

    ``x0`` has shape ``(n,)`` or ``(n, *batch)``. ``coefficients`` optionally
    maps edge index to a coefficient vector overriding the spec's truth.
    """
    topo = validate(spec) if topo is None else topo
    x0 = np.asarray(x0, dtype=float)
    n, m = spec.node_count, order
    u = np.zeros(n) if u is None else np.asarray(u, dtype=float)
    series = np.zeros((n, m + 1) + x0.shape[1:])
    series[:, 0] = x0
    incoming = {v: [] for v in spec.nodes}
    for idx, e in enumerate(spec.edges):
        coeffs = e.coefficients
        if coefficients is not None and idx in coefficients:
            coeffs = coefficients[idx]
        if coeffs is None:
            raise ValueError(f"no coefficients for edge {e.name}")
        if np.any(np.asarray(coeffs) != 0.0):
            incoming[e.head].append((e, coeffs))
    for v in topo:
        rhs = np.zeros((m + 1,) + x0.shape[1:])
        rhs[0] = u[v - 1]
        for e, coeffs in incoming[v]:
            rhs = rhs + compose_series(e, coeffs, series[e.tail - 1], m)
        for k in range(m):
            series[v - 1, k + 1] = rhs[k] / (k + 1)
    return Jet(series)


def jet_to_derivatives(jet: Jet, node: int) -> np.ndarray:
    c = jet.coefficients(node)
    fact = np.array([math.factorial(k) for k in range(c.shape[0])], dtype=float)
    return c * fact.reshape((-1,) + (1,) * (c.ndim - 1))


def derivatives_to_coefficients(derivs) -> np.ndarray:
    d = np.asarray(derivs, dtype=float)
    fact = np.array([math.factorial(k) for k in range(d.shape[0])], dtype=float)
    return d / fact.reshape((-1,) + (1,) * (d.ndim - 1))
