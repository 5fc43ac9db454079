import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from netident.basis import EdgeFunction, Monomial, Sine
from netident.deriv import (Jet, SGConfig, derivatives_to_coefficients, exact_jet,
                            jet_to_derivatives, sg_fit_at_start, sg_weights)
from netident.errors import InsufficientSamples, OrderTooHigh
from netident.graph import Edge, NetworkSpec
from netident.sim import simulate

MONO4 = (Monomial(1), Monomial(2), Monomial(3), Monomial(4))


def random_path(rng, n, basis=MONO4):
    edges = [Edge(i, i + 1, basis, rng.uniform(-1, 1, len(basis))) for i in range(1, n)]
    return NetworkSpec(n, edges, {n})


def test_sg_polynomial_examples():
    t = 0.1 * np.arange(5)
    np.testing.assert_allclose(sg_fit_at_start(t**2, SGConfig(5, 2, 0.1), 2), [0, 0, 2],
                               atol=1e-10)
    d = sg_fit_at_start(np.full(10, 3.0), SGConfig(10, 5, 0.4), 5)
    assert d[0] == pytest.approx(3.0)
    np.testing.assert_allclose(d[1:], 0.0, atol=1e-9)


def test_sg_sine():
    t = 0.05 * np.arange(10)
    d = sg_fit_at_start(np.sin(t), SGConfig(10, 5, 0.05), 3)
    assert abs(d[1] - 1.0) < 1e-6
    assert abs(d[3] + 1.0) < 1e-3


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 5), st.integers(6, 14), st.floats(0.01, 0.5), st.integers(0, 2**32 - 1))
def test_sg_exact_on_polynomials(deg, window, h, seed):
    rng = np.random.default_rng(seed)
    c = rng.uniform(-1, 1, deg + 1)
    t = h * np.arange(window)
    values = np.polynomial.polynomial.polyval(t, c)
    d = sg_fit_at_start(values, SGConfig(window, 5, h), 5)
    expected = [math.factorial(k) * (c[k] if k <= deg else 0.0) for k in range(6)]
    scale = [1.0 / h**k for k in range(6)]
    np.testing.assert_allclose(d, expected, rtol=0, atol=1e-10 * max(scale) * 10)


def test_sg_exact_to_1e10_on_unit_spacing():
    rng = np.random.default_rng(0)
    for deg in range(6):
        c = rng.uniform(-1, 1, deg + 1)
        t = 0.4 * np.arange(10)
        d = sg_fit_at_start(np.polynomial.polynomial.polyval(t, c), SGConfig(10, 5, 0.4), 5)
        expected = [math.factorial(k) * (c[k] if k <= deg else 0.0) for k in range(6)]
        np.testing.assert_allclose(d, expected, rtol=0, atol=1e-10)


def test_sg_linear_in_samples(rng):
    cfg = SGConfig(10, 5, 0.3)
    a, b = rng.normal(size=10), rng.normal(size=10)
    np.testing.assert_allclose(sg_fit_at_start(a + 2 * b, cfg, 5),
                               sg_fit_at_start(a, cfg, 5) + 2 * sg_fit_at_start(b, cfg, 5),
                               rtol=1e-12, atol=1e-9)
    w = sg_weights(cfg, 5)
    np.testing.assert_allclose(sg_fit_at_start(a, cfg, 5), w @ a)


def test_sg_errors():
    with pytest.raises(InsufficientSamples):
        sg_fit_at_start(np.zeros(5), SGConfig(10, 5, 0.1), 2)
    with pytest.raises(OrderTooHigh):
        sg_fit_at_start(np.zeros(10), SGConfig(10, 3, 0.1), 4)
    with pytest.raises(ValueError):
        SGConfig(4, 5, 0.1)


def test_jet_zero(diamond4):
    jet = exact_jet(diamond4, np.zeros(4), None, 4)
    assert np.all(jet.series == 0.0)


def test_jet_to_derivatives_examples():
    jet = Jet(np.array([[1.0, 2.0, 3.0]]))
    np.testing.assert_array_equal(jet_to_derivatives(jet, 1), [1.0, 2.0, 6.0])


def test_source_jet_constant(path3):
    d = jet_to_derivatives(exact_jet(path3, [0.4, 0.1, 0.2], None, 5), 1)
    np.testing.assert_array_equal(d, [0.4, 0, 0, 0, 0, 0])


def test_jet_round_trip(rng):
    jet = Jet(rng.normal(size=(3, 6)))
    for v in (1, 2, 3):
        d = jet_to_derivatives(jet, v)
        # factorial scaling round-trips to within one ulp
        np.testing.assert_allclose(derivatives_to_coefficients(d), jet.coefficients(v), rtol=1e-15)
        np.testing.assert_allclose(jet_to_derivatives(Jet(derivatives_to_coefficients(d)[None]), 1),
                                   d, rtol=1e-15)


def test_jet_matches_path_chain_rule(rng):
    for _ in range(50):
        spec = random_path(rng, 4)
        f21, f32, f43 = (e.function() for e in spec.edges)
        x0 = rng.uniform(-1, 1, 4)
        d = jet_to_derivatives(exact_jet(spec, x0, None, 3), 4)
        assert d[1] == pytest.approx(f43(x0[2]), abs=1e-12)
        step2 = f43.deriv(x0[2], 1) * f32(x0[1])
        assert abs(d[2] - step2) < 1e-10
        step3 = (f43.deriv(x0[2], 2) * f32(x0[1]) ** 2
                 + f43.deriv(x0[2], 1) * f32.deriv(x0[1], 1) * f21(x0[0]))
        assert abs(d[3] - step3) < 1e-10


def test_jet_batched_matches_single(diamond4, rng):
    x0 = rng.uniform(-1, 1, (4, 7))
    batch = exact_jet(diamond4, x0, None, 3).series
    for k in range(7):
        np.testing.assert_allclose(batch[..., k], exact_jet(diamond4, x0[:, k], None, 3).series,
                                   rtol=1e-14, atol=1e-14)


def test_jet_with_inputs():
    spec = NetworkSpec(2, [Edge(1, 2, (Monomial(2),), (1.0,))], {2})
    # x1 = a + u t, x2' = x1^2  ->  x2 = b + a^2 t + a u t^2 + u^2 t^3 / 3
    a, b, u = 0.7, -0.2, 0.3
    d = jet_to_derivatives(exact_jet(spec, [a, b], [u, 0.0], 4), 2)
    np.testing.assert_allclose(d, [b, a * a, 2 * a * u, 2 * u * u, 0.0], atol=1e-14)


def richardson_derivatives(spec, x0, m, h0=0.2, levels=4):
    """k-th derivatives at 0 from central stencils on the simulated trajectory, Richardson in h^2."""
    dt = 1e-4
    p = m // 2 + 1
    t_end = p * h0
    fwd = simulate(spec, x0, None, t_end, dt)
    bwd = simulate(spec, x0, None, -t_end, -dt)
    table = []
    for lvl in range(levels):
        h = h0 / 2**lvl
        stride = int(round(h / dt))
        idx = np.arange(-p, p + 1)
        vals = np.array([fwd.states[i * stride] if i >= 0 else bwd.states[-i * stride]
                         for i in idx])
        # exact-for-polynomials stencil weights
        V = np.vander(idx * h, 2 * p + 1, increasing=True)
        coef = np.linalg.solve(V, vals)
        table.append(np.array([math.factorial(k) * coef[k] for k in range(m + 1)]))
    # Richardson: central stencils of 2p+1 points have error O(h^(2p+2-k)), step by h^2 powers
    for j in range(1, levels):
        new = []
        for i in range(len(table) - 1):
            new.append(table[i + 1] + (table[i + 1] - table[i]) / (4**j - 1))
        table = new
    return table[0]


@pytest.mark.parametrize("m", [1, 2, 3, 4])
def test_jet_matches_richardson_finite_differences(m, rng):
    spec = random_path(rng, 4, basis=(Monomial(1), Monomial(2), Sine(2.0)))
    x0 = rng.uniform(-0.5, 0.5, 4)
    jet = exact_jet(spec, x0, None, m)
    fd = richardson_derivatives(spec, x0, m)
    for v in spec.nodes:
        d = jet_to_derivatives(jet, v)
        scale = np.max(np.abs(d)) + 1e-300
        np.testing.assert_allclose(fd[:, v - 1], d, rtol=1e-6, atol=1e-6 * scale)


def test_sg_agrees_with_jet_on_random_paths(rng):
    cfg = SGConfig(10, 5, 0.005)
    for trial in range(20):
        n = int(rng.integers(2, 6))
        spec = random_path(rng, n)
        x0 = rng.uniform(-0.5, 0.5, n)
        traj = simulate(spec, x0, None, 9 * cfg.spacing, cfg.spacing / 10)
        est = sg_fit_at_start(traj.node(n)[::10], cfg, 3)
        exact = jet_to_derivatives(exact_jet(spec, x0, None, 3), n)
        for k in range(1, min(n - 1, 3) + 1):
            assert est[k] == pytest.approx(exact[k], rel=1e-3, abs=1e-3 * np.max(np.abs(exact[1:])))
