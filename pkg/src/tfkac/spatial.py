"""Finite-difference discretisation of the tempered fractional Laplacian.

The operator ``-(Delta + gamma)^{beta/2}`` on ``(-l, l)^2`` with zero exterior
data is discretised by a weighted trapezoidal rule on the four cells around
each node and by bilinear interpolation on all other cells.  The resulting
matrix is translation invariant off the diagonal, so only one weight per
node offset is stored.

Scaling convention: every weight here is multiplied by ``h^beta``, so the
stored matrix ``A_s`` is O(1) and the discrete operator is ``A_s / h^beta``.
Within the cell integrals this amounts to working on the unit lattice; the
tempering factors ``exp(-gamma h |offset|)`` and the exterior integral
``W_inf`` keep their physical values.
"""
from __future__ import annotations

import io
import math
import struct
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from .grid import Grid
from .special import c2beta, tempered_tail

GAUSS_POINTS = 20
NEAR_CELLS = 4
NEAR_SUBDIVISIONS = 4
KERNEL_MAGIC = b"TFKACKW1"


@lru_cache(maxsize=None)
def _gauss01(n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def _check_orders(beta, sigma):
    if not beta < sigma <= 2.0:
        raise ValueError(f"need beta < sigma <= 2, got beta={beta}, sigma={sigma}")


def k_sigma(sigma: float) -> float:
    return 4.0 / 3.0 if sigma == 2.0 else 1.0


def singular_cell_weight_W00(h: float, sigma: float, beta: float) -> float:
    """``int_0^h int_0^h (xi^2 + eta^2)^((sigma - 2 - beta)/2)`` by polar reduction."""
    _check_orders(beta, sigma)
    if h <= 0:
        raise ValueError("h must be positive")
    x, w = _gauss01(40)
    theta = 0.25 * math.pi * x
    angular = 0.25 * math.pi * np.dot(w, np.cos(theta) ** (beta - sigma))
    return 2.0 * h ** (sigma - beta) * angular / (sigma - beta)


def _origin_cell(i: int, j: int) -> bool:
    return i in (-1, 0) and j in (-1, 0)


def _unit_moments(a: np.ndarray, b: np.ndarray, beta: float, n: int, sub: int):
    """Moments ``(H, H_xi, H_eta, H_xieta)`` of the unit cells ``[a,a+1]x[b,b+1]``."""
    u, w = _gauss01(n)
    shifts = np.arange(sub) / sub
    u = (shifts[:, None] + u[None, :] / sub).ravel()
    w = np.tile(w / sub, sub)
    xi = a[..., None, None] + u[:, None]
    eta = b[..., None, None] + u[None, :]
    ww = w[:, None] * w[None, :]
    ker = (xi * xi + eta * eta) ** (-1.0 - beta / 2.0) * ww
    return (
        ker.sum(axis=(-1, -2)),
        (xi * ker).sum(axis=(-1, -2)),
        (eta * ker).sum(axis=(-1, -2)),
        (xi * eta * ker).sum(axis=(-1, -2)),
    )


def h_integrals(i: int, j: int, h: float, beta: float):
    """Kernel moments over the cell ``[ih, (i+1)h] x [jh, (j+1)h]`` (with ``1/h^2``)."""
    if _origin_cell(i, j):
        raise ValueError(f"cell ({i}, {j}) touches the origin; use the singular-cell weights")
    near = max(abs(i + 0.5), abs(j + 0.5)) < NEAR_CELLS
    sub = NEAR_SUBDIVISIONS if near else 1
    H, Hx, Hy, Hxy = _unit_moments(np.array(float(i)), np.array(float(j)), beta, GAUSS_POINTS, sub)
    return (
        float(H) * h ** (-2.0 - beta),
        float(Hx) * h ** (-1.0 - beta),
        float(Hy) * h ** (-1.0 - beta),
        float(Hxy) * h ** (-beta),
    )


def _combine(mom, xs, ys, h):
    H, Hx, Hy, Hxy = mom
    return Hxy - xs * h * Hy - ys * h * Hx + xs * ys * h * h * H


def interpolation_weights_W(i: int, j: int, h: float, beta: float):
    """Bilinear-interpolation weights ``(W1, W2, W3, W4)`` of the node offset ``(i, j)``.

    ``W1`` treats the node as the lower-left corner of its cell, ``W2`` as the
    lower-right, ``W3`` as the upper-left and ``W4`` as the upper-right one.
    """
    if abs(i) <= 1 and abs(j) <= 1:
        raise ValueError(f"offset ({i}, {j}) uses singular-cell weights")
    w1 = _combine(h_integrals(i, j, h, beta), i + 1, j + 1, h)
    w2 = -_combine(h_integrals(i - 1, j, h, beta), i - 1, j + 1, h)
    w3 = -_combine(h_integrals(i, j - 1, h, beta), i + 1, j - 1, h)
    w4 = _combine(h_integrals(i - 1, j - 1, h, beta), i - 1, j - 1, h)
    return w1, w2, w3, w4


def special_weights(h: float, sigma: float, beta: float) -> dict:
    """Weights of the eight neighbours that share a cell with the node.

    Returns ``{(k, a, b): value}`` for weight type ``k`` in 1..4 at offset
    ``(a, b)``.
    """
    w00 = singular_cell_weight_W00(h, sigma, beta)
    ks = k_sigma(sigma)
    diag = ks / 4.0 * w00 / (math.sqrt(2.0) * h) ** sigma
    axis = ks / 4.0 * w00 / h**sigma
    table = {(1, -1, -1): diag, (2, 1, -1): diag, (3, -1, 1): diag, (4, 1, 1): diag}
    for key in [(1, -1, 0), (3, -1, 0), (2, 1, 0), (4, 1, 0),
                (1, 0, -1), (2, 0, -1), (3, 0, 1), (4, 0, 1)]:
        table[key] = axis
    return table


def unit_w1_table(n_off: int, beta: float, sigma: float) -> np.ndarray:
    """``W1`` on the unit lattice for offsets ``-n_off..n_off`` in both axes.

    Computed directly as the integral of the bilinear hat against the kernel,
    which equals the moment combination but avoids its cancellation far from
    the origin.  Index ``[a + n_off, b + n_off]``.
    """
    offs = np.arange(-n_off, n_off + 1, dtype=float)
    size = offs.size
    u, w = _gauss01(GAUSS_POINTS)
    hat = (1.0 - u)[:, None] * (1.0 - u)[None, :] * w[:, None] * w[None, :]
    out = np.empty((size, size))
    for ia, a in enumerate(offs):
        xi = a + u
        eta = offs[:, None] + u[None, :]
        r2 = xi[None, :, None] ** 2 + eta[:, None, :] ** 2
        out[ia] = np.einsum("bij,ij->b", r2 ** (-1.0 - beta / 2.0), hat)
    # refine cells close to the origin with composite rules
    near = np.arange(-NEAR_CELLS, NEAR_CELLS)
    A, B = np.meshgrid(near, near, indexing="ij")
    keep = ~((A >= -1) & (A <= 0) & (B >= -1) & (B <= 0))
    A, B = A[keep].astype(float), B[keep].astype(float)
    H, Hx, Hy, Hxy = _unit_moments(A, B, beta, GAUSS_POINTS, NEAR_SUBDIVISIONS)
    out[(A + n_off).astype(int), (B + n_off).astype(int)] = (
        Hxy - (A + 1) * Hy - (B + 1) * Hx + (A + 1) * (B + 1) * H
    )
    spec = special_weights(1.0, sigma, beta)
    for (a, b) in [(-1, 0), (0, -1), (-1, -1)]:
        out[a + n_off, b + n_off] = spec[(1, a, b)]
    out[n_off, n_off] = 0.0
    return out


def _graded_rule(a: float, b: float, n: int = 16, max_len: float = math.pi / 8):
    """Gauss rule on ``[a, b]`` inside ``(-pi/2, pi/2)``, graded toward the ends.

    Integrands built on rays to a straight edge are analytic in the ray angle
    except at ``+-pi/2``; panels grow geometrically away from whichever end is
    close to those points.
    """
    if b <= a:
        return np.empty(0), np.empty(0)
    mid = 0.5 * (a + b)
    pts = {a, b}
    ga, gb = 0.5 * math.pi + a, 0.5 * math.pi - b
    k = 1
    while b - gb * (2**k - 1) > mid and gb * 2**k < b - a:
        pts.add(b - gb * (2**k - 1))
        k += 1
    k = 1
    while a + ga * (2**k - 1) < mid and ga * 2**k < b - a:
        pts.add(a + ga * (2**k - 1))
        k += 1
    edges = np.array(sorted(pts))
    fine = [edges[0]]
    for lo, hi in zip(edges[:-1], edges[1:]):
        pieces = max(1, int(math.ceil((hi - lo) / max_len)))
        fine.extend(np.linspace(lo, hi, pieces + 1)[1:])
    edges = np.array(fine)
    u, w = _gauss01(n)
    lens = np.diff(edges)
    nodes = (edges[:-1, None] + lens[:, None] * u[None, :]).ravel()
    weights = (lens[:, None] * w[None, :]).ravel()
    return nodes, weights


def boundary_pieces(x: float, y: float, l: float):
    """Split the directions around ``(x, y)`` by the edge of the square each ray hits.

    Yields ``(d, normal, tangent, phi_lo, phi_hi)``: a ray at angle ``phi``
    from the outward normal leaves the square after ``d / cos(phi)``.
    """
    edges = [
        (l - x, (1.0, 0.0), (0.0, 1.0), -l - y, l - y),
        (l - y, (0.0, 1.0), (-1.0, 0.0), x - l, x + l),
        (l + x, (-1.0, 0.0), (0.0, -1.0), y - l, y + l),
        (l + y, (0.0, -1.0), (1.0, 0.0), -l - x, l - x),
    ]
    for d, nrm, tan, s0, s1 in edges:
        yield d, np.array(nrm), np.array(tan), math.atan2(s0, d), math.atan2(s1, d)


def exterior_integral_Winf(p: int, q: int, grid: Grid, beta: float, gamma: float) -> float:
    """``int_{R^2 \\ Omega} e^(-gamma r) r^(-2-beta)`` seen from node ``(p, q)``.

    Polar coordinates about the node: the radial part is the closed-form tail
    beyond the exit distance, the angular part a graded Gauss rule per edge.
    """
    grid.node_index(p, q)
    return _winf_point(p * grid.h, q * grid.h, grid.half_width, beta, gamma)


def _winf_point(x, y, l, beta, gamma, n=16):
    total = 0.0
    for d, _, _, lo, hi in boundary_pieces(x, y, l):
        phi, w = _graded_rule(lo, hi, n)
        total += np.dot(w, tempered_tail(beta, gamma, d / np.cos(phi)))
    return float(total)


def _d4_orbit_fill(grid: Grid, fn) -> np.ndarray:
    """Evaluate a square-symmetric nodal quantity on one octant and mirror it."""
    n = grid.resolution
    out = np.empty((grid.m, grid.m))
    for p in range(0, n):
        for q in range(0, p + 1):
            v = fn(p, q)
            for a, b in {(p, q), (q, p)}:
                for sa in (a, -a):
                    for sb in (b, -b):
                        out[sa + n - 1, sb + n - 1] = v
    return out.ravel()


def exterior_integrals(grid: Grid, beta: float, gamma: float) -> np.ndarray:
    h, l = grid.h, grid.half_width
    return _d4_orbit_fill(grid, lambda p, q: _winf_point(p * h, q * h, l, beta, gamma))


@dataclass(frozen=True)
class SpatialOperator:
    """Assembled matrix ``A_s`` (scaled by ``h^beta``) of ``-(Delta+gamma)_h^{beta/2}``.

    ``kernel[dp + m - 1, dq + m - 1]`` is the off-diagonal weight for node
    offset ``(dp, dq)``; ``diag`` holds the node-dependent diagonal and
    ``winf`` the physical exterior integrals.
    """

    grid: Grid
    beta: float
    gamma: float
    sigma: float
    kernel: np.ndarray
    diag: np.ndarray
    winf: np.ndarray

    @property
    def h_pow(self) -> float:
        return self.grid.h**self.beta

    @property
    def c2(self) -> float:
        return c2beta(self.beta, self.gamma)

    def weight(self, p: int, q: int, i: int, j: int) -> float:
        """Entry of ``A_s`` coupling node ``(p, q)`` to node ``(i, j)``."""
        if (p, q) == (i, j):
            return float(self.diag[self.grid.node_index(p, q)])
        self.grid.node_index(i, j)
        self.grid.node_index(p, q)
        m = self.grid.m
        return float(self.kernel[i - p + m - 1, j - q + m - 1])

    def dense(self) -> np.ndarray:
        """Full ``M x M`` matrix; for small grids only."""
        m = self.grid.m
        idx = np.arange(m)
        d = idx[:, None] - idx[None, :] + m - 1
        # A[(p,q),(i,j)] = kernel[i-p, j-q]; kernel is even so the sign is immaterial
        A = self.kernel[d[:, None, :, None], d[None, :, None, :]].reshape(m * m, m * m)
        A = A.copy()
        A[np.diag_indices_from(A)] = self.diag
        return A


def assemble(grid: Grid, beta: float, gamma: float, sigma: float | None = None) -> SpatialOperator:
    if sigma is None:
        sigma = 1.0 + beta / 2.0
    if not 0.05 <= beta <= 1.95:
        raise ValueError(f"beta must lie in [0.05, 1.95], got {beta}")
    _check_orders(beta, sigma)
    if gamma < 0:
        raise ValueError("gamma must be non-negative")
    n, m, h = grid.resolution, grid.m, grid.h
    c2 = c2beta(beta, gamma)

    nf = 2 * n
    w1 = unit_w1_table(nf, beta, sigma)
    offs = np.arange(-nf, nf + 1)
    damp = np.exp(-gamma * h * np.hypot(offs[:, None], offs[None, :]))
    kinds = [w1, w1[::-1, :], w1[:, ::-1], w1[::-1, ::-1]]
    kinds = [k * damp for k in kinds]

    inner = slice(nf - (m - 1), nf + m)
    kernel = -c2 * sum(k[inner, inner] for k in kinds)
    # make the reflection symmetries bitwise exact
    kernel = 0.5 * (kernel + kernel[::-1, ::-1])
    kernel = 0.5 * (kernel + kernel[::-1, :])
    kernel[m - 1, m - 1] = 0.0

    # node ranges (closed grid) whose cell of each kind lies inside Omega
    ranges = [
        ((-n, n - 1), (-n, n - 1)),
        ((-n + 1, n), (-n, n - 1)),
        ((-n, n - 1), (-n + 1, n)),
        ((-n + 1, n), (-n + 1, n)),
    ]
    P, Q = np.meshgrid(grid.indices, grid.indices, indexing="ij")
    P, Q = P.ravel(), Q.ravel()
    coupled = np.zeros(grid.size)
    for k, ((x0, x1), (y0, y1)) in zip(kinds, ranges):
        sat = np.zeros((k.shape[0] + 1, k.shape[1] + 1))
        sat[1:, 1:] = k.cumsum(0).cumsum(1)
        a0, a1 = x0 - P + nf, x1 - P + nf
        b0, b1 = y0 - Q + nf, y1 - Q + nf
        coupled += sat[a1 + 1, b1 + 1] - sat[a0, b1 + 1] - sat[a1 + 1, b0] + sat[a0, b0]

    winf = exterior_integrals(grid, beta, gamma)
    diag = c2 * (coupled + winf * h**beta)
    return SpatialOperator(grid, float(beta), float(gamma), float(sigma), kernel, diag, winf)


def apply_dense(op: SpatialOperator, v: np.ndarray) -> np.ndarray:
    """Reference product ``A_s v`` by explicit summation over node pairs."""
    v = np.asarray(v)
    if v.shape != (op.grid.size,):
        raise ValueError(f"expected a vector of length {op.grid.size}, got shape {v.shape}")
    m = op.grid.m
    V = v.reshape(m, m)
    out = np.empty((m, m), dtype=np.result_type(v, float))
    for a in range(m):
        for b in range(m):
            k = op.kernel[m - 1 - a: 2 * m - 1 - a, m - 1 - b: 2 * m - 1 - b]
            out[a, b] = np.sum(k * V)
    return out.ravel() + op.diag * v


def dump_operator(op: SpatialOperator, path) -> None:
    """Write ``op`` as: 8-byte magic, the key ``(l, N, beta, gamma, sigma)``, then
    kernel, diagonal and exterior integrals, all little-endian float64."""
    g = op.grid
    buf = io.BytesIO()
    buf.write(KERNEL_MAGIC)
    buf.write(struct.pack("<5d", g.half_width, g.resolution, op.beta, op.gamma, op.sigma))
    for arr in (op.kernel, op.diag, op.winf):
        buf.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    Path(path).write_bytes(buf.getvalue())


def load_operator(path, key: tuple | None = None) -> SpatialOperator:
    raw = Path(path).read_bytes()
    if raw[:8] != KERNEL_MAGIC:
        raise ValueError(f"{path}: not a kernel dump")
    l, n, beta, gamma, sigma = struct.unpack("<5d", raw[8:48])
    if key is not None and not np.allclose(key, (l, n, beta, gamma, sigma), rtol=0, atol=1e-15):
        raise ValueError(f"{path}: key {(l, n, beta, gamma, sigma)} does not match {key}")
    grid = Grid(l, int(n))
    km, size = 2 * grid.m - 1, grid.size
    data = np.frombuffer(raw[48:], dtype="<f8")
    if data.size != km * km + 2 * size:
        raise ValueError(f"{path}: truncated kernel dump")
    kernel = data[: km * km].reshape(km, km).copy()
    diag = data[km * km: km * km + size].copy()
    winf = data[km * km + size:].copy()
    return SpatialOperator(grid, beta, gamma, sigma, kernel, diag, winf)


def assemble_cached(grid: Grid, beta: float, gamma: float, sigma: float, cache_dir=None) -> SpatialOperator:
    """``assemble`` backed by an optional on-disk cache of kernel dumps."""
    if cache_dir is None:
        return _assemble_memo(grid, beta, gamma, sigma)
    key = (grid.half_width, grid.resolution, beta, gamma, sigma)
    path = Path(cache_dir) / ("kernel_l{}_N{}_b{}_g{}_s{}.bin".format(*key))
    if path.exists():
        return load_operator(path, key)
    op = _assemble_memo(grid, beta, gamma, sigma)
    path.parent.mkdir(parents=True, exist_ok=True)
    dump_operator(op, path)
    return op


@lru_cache(maxsize=16)
def _assemble_memo(grid, beta, gamma, sigma):
    return assemble(grid, beta, gamma, sigma)
