"""Quadrature evaluation of the continuous operator and manufactured problems.

``tfl_pointwise`` computes ``(Delta + gamma)^{beta/2} G`` at a point of the
square for ``G`` vanishing outside it.  Its only link to the discretisation
is the operator definition, which makes it a usable oracle for the finite
difference weights.
"""
from __future__ import annotations

import math
import threading
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import special as sp

from .grid import Grid, ProblemSpec
from .spatial import _graded_rule, boundary_pieces
from .special import c2beta, gamma_fn, tempered_tail


# psi(r) / r^2 is smooth in r, so a fixed Gauss-Jacobi degree suffices and
# larger ones only add nodes where the cancellation is worst
RADIAL_NODES = 24


class OracleError(RuntimeError):
    pass


@lru_cache(maxsize=None)
def _jacobi_rule(n: int, beta: float):
    # weight r^(1-beta) on [0, 1]
    x, w = sp.roots_jacobi(n, 0.0, 1.0 - beta)
    return 0.5 * (x + 1.0), w * 0.5 ** (2.0 - beta)


@lru_cache(maxsize=None)
def _legendre01(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def _estimate(G, x, y, l, beta, gamma, delta, n):
    # snap the centre and the disk offsets to one binary lattice so that the
    # four rotated samples are exact and only G's own round-off survives the
    # cancellation in psi / r^2
    u = float(np.spacing(4.0 * l))
    x, y = round(x / u) * u, round(y / u) * u
    gx = float(np.real(G(np.array(x), np.array(y))))
    ur, wr = _jacobi_rule(min(n, RADIAL_NODES), beta)
    r = delta * ur
    theta = (np.arange(n) + 0.5) * (0.5 * math.pi / n)
    R, TH = np.meshgrid(r, theta, indexing="ij")
    dx, dy = np.round(R * np.cos(TH) / u) * u, np.round(R * np.sin(TH) / u) * u
    psi = np.real(G(x + dx, y + dy) + G(x - dy, y + dx) + G(x - dx, y - dy) + G(x + dy, y - dx)) - 4.0 * gx
    radial = (psi / (dx * dx + dy * dy)).mean(axis=1) * (0.5 * math.pi) * np.exp(-gamma * r)
    near = delta ** (2.0 - beta) * np.dot(wr, radial)

    # G over the rest of the square, in rays from the point
    far = 0.0
    uu, wu = _legendre01(n)
    for d, nrm, tan, lo, hi in boundary_pieces(x, y, l):
        phi, wphi = _graded_rule(lo, hi, n)
        if phi.size == 0:
            continue
        span = np.log(np.maximum(d / np.cos(phi), delta) / delta)
        rr = delta * np.exp(span[:, None] * uu[None, :])
        ex = nrm[0] * np.cos(phi) + tan[0] * np.sin(phi)
        ey = nrm[1] * np.cos(phi) + tan[1] * np.sin(phi)
        vals = np.real(G(x + rr * ex[:, None], y + rr * ey[:, None]))
        inner = (vals * np.exp(-gamma * rr) * rr ** (-beta)) @ wu * span
        far += np.dot(wphi, inner)
    hole = gx * 2.0 * math.pi * float(tempered_tail(beta, gamma, delta))
    return c2beta(beta, gamma) * (near + far - hole)


def tfl_pointwise(G: Callable, x: float, y: float, beta: float, gamma: float,
                  half_width: float = 1.0, tol: float = 1e-10, max_level: int = 6) -> float:
    """``(Delta + gamma)^{beta/2} G`` at ``(x, y)`` for ``G`` supported on ``[-l, l]^2``.

    ``G(x, y)`` must accept arrays.  Rules are doubled until two successive
    estimates agree to ``tol * max(1, |value|)``.  The test is relative for
    large values because the cancelled increment near the point carries
    round-off that grows with the rule size.
    """
    l = half_width
    dist = l - max(abs(x), abs(y))
    if dist <= 0:
        raise ValueError(f"point ({x}, {y}) is not interior")
    delta = min(0.1 * l, dist)
    n = 8
    prev = _estimate(G, x, y, l, beta, gamma, delta, n)
    change = math.inf
    for _ in range(max_level):
        n *= 2
        cur = _estimate(G, x, y, l, beta, gamma, delta, n)
        change = abs(cur - prev)
        if change <= tol * max(1.0, abs(cur)):
            return cur
        prev = cur
    raise OracleError(f"no convergence to {tol} at ({x}, {y}); last change {change:.3e}")

_CACHE: dict = {}
_CACHE_LOCK = threading.Lock()


def tfl_nodes(G: Callable, grid: Grid, beta: float, gamma: float, key: str | None = None,
              symmetric: bool = False, tol: float = 1e-10) -> np.ndarray:
    """Oracle values at every interior node, in field order.

    With ``key`` the per-node values are cached under ``(key, node, beta,
    gamma)``.  ``symmetric=True`` declares ``G`` invariant under the
    symmetries of the square, so only one octant of nodes is integrated.
    """
    h, l, n = grid.h, grid.half_width, grid.resolution

    def value(p, q):
        ck = None if key is None else (key, l, round(p * h, 14), round(q * h, 14), beta, gamma)
        if ck is not None:
            with _CACHE_LOCK:
                hit = _CACHE.get(ck)
            if hit is not None:
                return hit
        v = tfl_pointwise(G, p * h, q * h, beta, gamma, l, tol)
        if ck is not None:
            with _CACHE_LOCK:
                _CACHE.setdefault(ck, v)
        return v

    if symmetric:
        out = np.empty((grid.m, grid.m))
        for p in range(n):
            for q in range(p + 1):
                v = value(p, q)
                for a, b in {(p, q), (q, p)}:
                    for sa in (a, -a):
                        for sb in (b, -b):
                            out[sa + n - 1, sb + n - 1] = v
        return out.ravel()
    return np.array([value(p, q) for p in grid.indices for q in grid.indices])


def clear_cache() -> None:
    with _CACHE_LOCK:
        _CACHE.clear()


def bubble(x, y):
    """``(1 - x^2)(1 - y^2)``, the spatial profile of the first example."""
    return (1.0 - x * x) * (1.0 - y * y)


def decay(spec: ProblemSpec, t, x, y):
    """``exp(-(lam - r - J rho U) t)`` at the given points."""
    s = spec.lam - spec.reaction(x, y) - 1j * spec.rho * spec.weight(x, y)
    return np.exp(-s * t)


class _NodalOracle:
    """Callable ``(x, y) -> tfl(G)`` that remembers its last set of points."""

    def __init__(self, G, beta, gamma, half_width, key, symmetric, tol):
        self.G, self.beta, self.gamma, self.l = G, beta, gamma, half_width
        self.key, self.symmetric, self.tol = key, symmetric, tol
        self._pts = None
        self._vals = None

    def __call__(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        if self._pts is not None and self._pts[0].shape == x.shape \
                and np.array_equal(self._pts[0], x) and np.array_equal(self._pts[1], y):
            return self._vals
        grid = _as_grid(x, y, self.l)
        if grid is not None:
            vals = tfl_nodes(self.G, grid, self.beta, self.gamma, self.key, self.symmetric, self.tol)
        else:
            vals = np.array([tfl_pointwise(self.G, a, b, self.beta, self.gamma, self.l, self.tol)
                             for a, b in zip(x.ravel(), y.ravel())]).reshape(x.shape)
        self._pts, self._vals = (x.copy(), y.copy()), vals
        return vals


def _as_grid(x, y, l):
    # recognise the full interior node set of some grid, in field order
    m = int(round(math.sqrt(x.size)))
    if x.ndim != 1 or m * m != x.size or m % 2 == 0 or m < 3:
        return None
    g = Grid(l, (m + 1) // 2)
    X, Y = g.nodes()
    if np.allclose(X, x, atol=1e-13) and np.allclose(Y, y, atol=1e-13):
        return g
    return None


def example1_spec(alpha: float, beta: float, gamma: float, lam: float, nu: float,
                  rho: float = 0.0, sigma: float | None = None, T: float = 1.0,
                  tol: float = 1e-10) -> ProblemSpec:
    """First example: ``G = e^{-(lam - r - J rho U) t} (t^nu + 1)(1-x^2)(1-y^2)``, ``r = -1``, ``U = 1``."""
    spec = ProblemSpec(alpha=alpha, beta=beta, gamma=gamma, lam=lam, rho=rho, sigma=sigma, T=T,
                       reaction=lambda x, y: -np.ones(np.broadcast(x, y).shape),
                       weight=lambda x, y: np.ones(np.broadcast(x, y).shape),
                       initial=bubble, oracle_hints={"key": "bubble", "symmetric": True})
    lap = _NodalOracle(bubble, beta, gamma, 1.0, "bubble", True, tol)
    spec.source = lambda t, x, y: build_source_example1(spec, nu, t, x, y, lap)
    return spec


def build_source_example1(spec: ProblemSpec, nu: float, t, x, y, lap=None):
    """Source ``f`` that makes the first example's closed form an exact solution."""
    if lap is None:
        lap = _NodalOracle(bubble, spec.beta, spec.gamma, 1.0, "bubble", True, 1e-10)
    a = spec.alpha
    caputo = gamma_fn(1.0 + nu) / gamma_fn(1.0 + nu - a) * t ** (nu - a) if t > 0 else 0.0
    E = decay(spec, t, x, y)
    g = bubble(x, y)
    return E * ((caputo - spec.lam**a * (t**nu + 1.0)) * g - (t**nu + 1.0) * lap(x, y))


def exact_solution_example1(nu: float, spec: ProblemSpec, t, x, y):
    return decay(spec, t, x, y) * (t**nu + 1.0) * bubble(x, y)


@dataclass
class Homogenized:
    """Zero-initial-data problem for ``W = G - G0 e^{-(lam - r - J rho U) t}``."""

    spec: ProblemSpec
    original: ProblemSpec

    def reconstruct(self, t, x, y, w):
        return w + decay(self.original, t, x, y) * self.original.initial(x, y)


def homogenize(spec: ProblemSpec, key: str | None = None, symmetric: bool = False,
               tol: float = 1e-10, half_width: float = 1.0) -> Homogenized:
    """Move the initial data into the source.

    ``key``/``symmetric`` are forwarded to the oracle that evaluates
    ``(Delta + gamma)^{beta/2} G0``.
    """
    G0 = spec.initial
    if getattr(G0, "is_zero", False):
        return Homogenized(spec, spec)
    lap = _NodalOracle(G0, spec.beta, spec.gamma, half_width, key, symmetric, tol)
    f = spec.source
    lam_a = spec.lam**spec.alpha

    def source_w(t, x, y):
        base = f(t, x, y) if f is not None else 0.0
        return base + decay(spec, t, x, y) * (lam_a * G0(x, y) + lap(x, y))

    w = replace(spec, initial=_zero_field, source=source_w)
    return Homogenized(w, spec)


def _zero_field(x, y):
    return np.zeros(np.broadcast(x, y).shape)


_zero_field.is_zero = True


def example3_spec(alpha: float, beta: float, gamma: float, lam: float, nu: float,
                  rho: float = 0.0, sigma: float | None = 2.0, T: float = 1.0) -> ProblemSpec:
    """Third example: ``U = x^2 + y^2``, ``r = -(x^2 + y^2)``, ``G0 = 0``, ``f = t^nu``."""
    spec = ProblemSpec(alpha=alpha, beta=beta, gamma=gamma, lam=lam, rho=rho, sigma=sigma, T=T,
                       reaction=lambda x, y: -(x * x + y * y),
                       weight=lambda x, y: x * x + y * y,
                       initial=_zero_field,
                       source=lambda t, x, y: np.full(np.broadcast(x, y).shape, t**nu, dtype=complex))
    return spec
