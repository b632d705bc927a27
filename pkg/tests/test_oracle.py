import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate, special as sp

from tfkac.grid import ProblemSpec, make_grid, project_field
from tfkac.oracle import (OracleError, bubble, build_source_example1, clear_cache, example1_spec,
                          exact_solution_example1, homogenize, tfl_nodes, tfl_pointwise)
from tfkac.special import c2beta, gamma_fn


def test_zero_function():
    assert tfl_pointwise(lambda x, y: 0 * x, 0.3, -0.2, 0.8, 0.4) == 0.0


def _gaussian(a):
    return lambda x, y: np.exp(-(x * x + y * y) / (4 * a))


@pytest.mark.parametrize("beta", [0.5, 1.0, 1.5])
@pytest.mark.parametrize("pt", [(0.0, 0.0), (0.1, 0.05), (-0.2, 0.15)])
def test_gaussian_closed_form(beta, pt):
    # whole-plane fractional Laplacian of a Gaussian; the mass outside the square is ~1e-11
    a = 0.01
    r2 = pt[0] ** 2 + pt[1] ** 2
    ref = -a ** (-beta / 2) * math.gamma(1 + beta / 2) * sp.hyp1f1(1 + beta / 2, 1, -r2 / (4 * a))
    got = tfl_pointwise(_gaussian(a), *pt, beta, 0.0)
    assert got == pytest.approx(ref, rel=1e-8, abs=1e-8)


@given(st.floats(-0.8, 0.8), st.floats(-0.8, 0.8))
def test_rotation_invariance(x, y):
    G = lambda u, v: (1 - u * u) * (1 - v * v) * (1 + 0.3 * u + 0.2 * u * v)
    Grot = lambda u, v: G(v, -u)
    a = tfl_pointwise(G, x, y, 1.1, 0.3, tol=1e-11)
    b = tfl_pointwise(Grot, -y, x, 1.1, 0.3, tol=1e-11)
    assert a == pytest.approx(b, abs=1e-9)


def test_radial_orientation_origin():
    G = lambda u, v: np.cos(0.5 * math.pi * u) * np.cos(0.5 * math.pi * v) * (1 + u * u + v * v)
    Grot = lambda u, v: G(v, -u)
    assert tfl_pointwise(G, 0, 0, 0.7, 0.1) == pytest.approx(tfl_pointwise(Grot, 0, 0, 0.7, 0.1), abs=1e-10)


def _cartesian_pv(beta, eps):
    # quarter square without the ball of radius eps, then four-fold symmetry
    f = lambda y, x: (bubble(x, y) - 1.0) * (x * x + y * y) ** (-1 - beta / 2)
    inner, _ = integrate.dblquad(f, 0, eps, lambda x: math.sqrt(eps * eps - x * x), 1.0,
                                 epsabs=0, epsrel=1e-13)
    outer, _ = integrate.dblquad(f, eps, 1.0, 0.0, 1.0, epsabs=0, epsrel=1e-13)
    return 4 * (inner + outer)


def test_bubble_origin_vs_cartesian_pv():
    beta = 0.5
    # exterior of the square as four wedges {x > 1, |y| < x}
    ext, _ = integrate.dblquad(lambda y, x: (x * x + y * y) ** (-1 - beta / 2), 1, np.inf,
                               lambda x: -x, lambda x: x, epsabs=0, epsrel=1e-13)
    vals = [_cartesian_pv(beta, e) for e in (0.04, 0.02, 0.01)]
    p1, p2 = 2 - beta, 4 - beta
    r1 = [(2**p1 * vals[k + 1] - vals[k]) / (2**p1 - 1) for k in range(2)]
    pv = (2**p2 * r1[1] - r1[0]) / (2**p2 - 1)
    ref = c2beta(beta, 0.0) * (pv - 4 * ext)
    assert tfl_pointwise(bubble, 0.0, 0.0, beta, 0.0) == pytest.approx(ref, rel=1e-7)


@pytest.mark.parametrize("pt", [(0.0, 0.0), (0.6, -0.3), (0.95, 0.9)])
def test_halving_tolerance(pt):
    a = tfl_pointwise(bubble, *pt, 1.5, 0.2, tol=1e-8)
    b = tfl_pointwise(bubble, *pt, 1.5, 0.2, tol=5e-9)
    assert abs(a - b) <= 1e-8 * max(1.0, abs(a))


def test_oracle_errors():
    with pytest.raises(ValueError):
        tfl_pointwise(bubble, 1.0, 0.0, 0.5, 0.0)
    rough = lambda x, y: np.sign(np.sin(1e4 * x)) * (1 - x * x) * (1 - y * y)
    with pytest.raises(OracleError):
        tfl_pointwise(rough, 0.1, 0.1, 0.5, 0.0, max_level=2)


def test_nodes_symmetric_fill_and_cache():
    clear_cache()
    g = make_grid(1, 4)
    full = tfl_nodes(bubble, g, 0.8, 0.1)
    sym = tfl_nodes(bubble, g, 0.8, 0.1, key="bubble-test", symmetric=True)
    assert np.allclose(full, sym, rtol=0, atol=1e-9)
    again = tfl_nodes(bubble, g, 0.8, 0.1, key="bubble-test", symmetric=True)
    assert np.array_equal(sym, again)


def test_example1_source_spot_value():
    spec = example1_spec(0.3, 0.5, 0.05, 0.1, 1.5, rho=1.0)
    g = make_grid(1, 4)
    X, Y = g.nodes()
    t, nu, k = 0.37, 1.5, 17
    f = build_source_example1(spec, nu, t, X, Y)
    x, y = X[k], Y[k]
    E = np.exp(-(0.1 + 1.0 - 1j) * t)
    lap = tfl_pointwise(bubble, x, y, 0.5, 0.05)
    ref = E * ((gamma_fn(2.5) / gamma_fn(2.2) * t**1.2 - 0.1**0.3 * (t**1.5 + 1)) * bubble(x, y)
               - (t**1.5 + 1) * lap)
    assert f[k] == pytest.approx(ref, abs=1e-10)
    real = example1_spec(0.3, 0.5, 0.05, 0.1, 1.5, rho=0.0)
    assert np.all(build_source_example1(real, nu, t, X, Y).imag == 0)


@pytest.mark.parametrize("rho", [0.0, 1.0])
def test_fw_vanishes_at_zero(rho):
    spec = example1_spec(0.3, 1.2, 0.05, 0.1, 1.5, rho=rho)
    hom = homogenize(spec, key="bubble", symmetric=True)
    g = make_grid(1, 8)
    fw0 = project_field(lambda x, y: hom.spec.source(0.0, x, y), g)
    assert np.max(np.abs(fw0)) <= 1e-12
    assert getattr(hom.spec.initial, "is_zero", False)


def test_homogenize_zero_initial_is_identity():
    src = lambda t, x, y: t * x * 0 + t
    spec = ProblemSpec(alpha=0.5, beta=0.5, gamma=0.0, lam=1.0, source=src)
    hom = homogenize(spec)
    assert hom.spec is spec and hom.spec.source is src


def test_reconstruction_at_zero():
    spec = example1_spec(0.3, 0.5, 0.05, 0.1, 1.5, rho=1.0)
    hom = homogenize(spec)
    g = make_grid(1, 8)
    X, Y = g.nodes()
    G0 = project_field(bubble, g)
    assert np.array_equal(hom.reconstruct(0.0, X, Y, np.zeros(g.size)), G0)


def test_exact_solution_example1():
    spec = example1_spec(0.3, 0.5, 0.05, 0.1, 1.5, rho=1.0)
    x = np.array([0.2, 1.0, -1.0, 0.5])
    y = np.array([0.3, 0.4, 0.0, 1.0])
    assert np.array_equal(exact_solution_example1(1.5, spec, 0.0, x, y), bubble(x, y).astype(complex))
    assert np.all(exact_solution_example1(1.5, spec, 0.7, x, y)[1:] == 0)
