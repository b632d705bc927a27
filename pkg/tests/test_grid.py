import numpy as np
import pytest
from hypothesis import given, strategies as st

from tfkac.grid import Grid, ProblemSpec, make_grid, project_field


@pytest.mark.parametrize("l, N, h, M", [(1, 8, 0.125, 225), (1, 2, 0.5, 9), (2, 4, 0.5, 49)])
def test_make_grid(l, N, h, M):
    g = make_grid(l, N)
    assert g.h == h
    assert g.size == M
    assert abs(g.h * g.resolution - l) <= np.spacing(l)


@pytest.mark.parametrize("l, N", [(1, 1), (0, 4), (-1, 4), (1, 2.5)])
def test_make_grid_rejects(l, N):
    with pytest.raises(ValueError):
        Grid(l, N)


def test_project_bubble():
    bubble = lambda x, y: (1 - x**2) * (1 - y**2)
    g = make_grid(1, 2)
    v = project_field(bubble, g)
    assert v.dtype == complex
    assert v[g.node_index(0, 0)] == 1
    assert v[g.node_index(1, 1)] == 0.5625
    assert np.all(project_field(lambda x, y: 0 * x, g) == 0)


def test_interior_only():
    g = make_grid(1, 3)
    x, y = g.nodes()
    assert np.max(np.abs(x)) < 1 and np.max(np.abs(y)) < 1
    with pytest.raises(IndexError):
        g.node_index(3, 0)


def test_x_major_order():
    g = make_grid(1, 3)
    x, y = g.nodes()
    # inner index is q (y), outer is p (x)
    assert x[0] == x[1] and y[0] < y[1]
    assert g.node_pq(1) == (-2, -1)


@given(st.integers(2, 12))
def test_index_round_trip(N):
    g = make_grid(1.0, N)
    ks = [g.node_index(p, q) for p in g.indices for q in g.indices]
    assert ks == list(range(g.size))
    assert all(g.node_index(*g.node_pq(k)) == k for k in ks)


@given(st.floats(-3, 3), st.integers(0, 10_000))
def test_projection_linear(a, seed):
    rng = np.random.default_rng(seed)
    c1, c2 = rng.normal(size=3), rng.normal(size=3)
    g1 = lambda x, y: c1[0] + c1[1] * x + c1[2] * x * y
    g2 = lambda x, y: c2[0] * y**2 + c2[1] * np.sin(x) + c2[2]
    g = make_grid(1.0, 4)
    lhs = project_field(lambda x, y: a * g1(x, y) + g2(x, y), g)
    rhs = a * project_field(g1, g) + project_field(g2, g)
    assert np.allclose(lhs, rhs, rtol=1e-13, atol=1e-13)


@pytest.mark.parametrize("kw", [
    dict(alpha=0.0), dict(alpha=1.0), dict(beta=0.01), dict(beta=1.99),
    dict(sigma=0.4), dict(sigma=2.1), dict(gamma=-1.0), dict(lam=0.0), dict(K=2.0),
])
def test_problem_spec_validation(kw):
    base = dict(alpha=0.5, beta=0.5, gamma=0.0, lam=1.0)
    base.update(kw)
    with pytest.raises(ValueError):
        ProblemSpec(**base)


def test_problem_spec_defaults():
    spec = ProblemSpec(alpha=0.3, beta=0.5, gamma=0.05, lam=0.1)
    assert spec.sigma == 1.25
    g = make_grid(1, 3)
    assert np.allclose(spec.shift(g), 1.1)


def test_positive_reaction_rejected():
    spec = ProblemSpec(alpha=0.3, beta=0.5, gamma=0.0, lam=0.1, reaction=lambda x, y: 0 * x + 0.5)
    with pytest.raises(ValueError):
        spec.validate_on(make_grid(1, 3))
