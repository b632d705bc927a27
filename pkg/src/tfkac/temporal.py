"""Convolution-quadrature weights for the tempered substantial derivative.

Per node the weights ``d_j`` are the Taylor coefficients of
``(delta(z) + s)^alpha - (tau lam)^alpha`` with the shift
``s = tau lam - tau r - tau J rho U`` and ``delta`` the BE or SBD quotient.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft

from .grid import Grid, ProblemSpec
from .special import BE, SBD, SCHEMES, cq_symbol


def be_weights_recurrence(alpha: float, lam: float, tau: float, s_node: complex, L: int) -> np.ndarray:
    """BE weights ``d_0..d_L`` from the binomial recurrence."""
    if L < 0:
        raise ValueError("L must be non-negative")
    base = 1.0 + complex(s_node)
    if base == 0:
        raise ValueError("1 + s must be nonzero")
    d = np.empty(L + 1, dtype=complex)
    d[0] = base**alpha - (tau * lam) ** alpha
    if L >= 1:
        d[1] = -alpha * base ** (alpha - 1.0)
    for j in range(2, L + 1):
        d[j] = -(alpha - j + 1) * d[j - 1] / (j * base)
    return d


def _fft_size(L: int) -> int:
    # K well above 2(L+1) keeps the 1/rho^L amplification of roundoff small
    return 1 << int(np.ceil(np.log2(8 * (L + 1))))


def cq_weights_fft(scheme: str, alpha: float, lam: float, tau: float, s_node, L: int) -> np.ndarray:
    """Weights ``d_0..d_L`` by sampling the generating function on a circle.

    ``s_node`` may be an array of shifts, in which case one row is returned
    per shift.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    if L < 1:
        raise ValueError("L must be at least 1")
    s = np.atleast_1d(np.asarray(s_node, dtype=complex))
    K = _fft_size(L)
    radius = np.finfo(float).eps ** (1.0 / K)
    zeta = radius * np.exp(2j * np.pi * np.arange(K) / K)
    F = (cq_symbol(scheme, zeta)[None, :] + s[:, None]) ** alpha - (tau * lam) ** alpha
    coef = scipy.fft.fft(F, axis=1)[:, : L + 1] / K
    coef /= radius ** np.arange(L + 1)
    # real shifts give real Taylor coefficients; drop the FFT round-off
    real = s.imag == 0
    coef[real] = coef[real].real
    return coef[0] if np.ndim(s_node) == 0 else coef


@dataclass(frozen=True)
class CQWeightTable:
    """Per-node CQ weights, stored once per distinct shift.

    ``rows[index[k]]`` is the weight sequence of node ``k``.
    """

    scheme: str
    L: int
    tau: float
    alpha: float
    base: np.ndarray
    rows: np.ndarray
    index: np.ndarray

    @property
    def weights(self) -> np.ndarray:
        """Full ``M x (L+1)`` array in field order."""
        return self.rows[self.index]

    @property
    def d0(self) -> np.ndarray:
        return self.rows[self.index, 0]

    @property
    def tau_pow(self) -> float:
        return self.tau**self.alpha


def build_table(spec: ProblemSpec, grid: Grid, scheme: str, L: int) -> CQWeightTable:
    if L < 1:
        raise ValueError("L must be at least 1")
    tau = spec.T / L
    base = tau * spec.shift(grid)
    uniq, inverse = np.unique(base, return_inverse=True)
    if scheme == BE:
        rows = np.array([be_weights_recurrence(spec.alpha, spec.lam, tau, s, L)
                         for s in uniq])
    elif scheme == SBD:
        rows = np.atleast_2d(cq_weights_fft(SBD, spec.alpha, spec.lam, tau, uniq, L))
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    return CQWeightTable(scheme, L, tau, spec.alpha, base, rows, inverse.ravel())


def history_term(table: CQWeightTable, history, n: int) -> np.ndarray:
    """``tau^-alpha sum_{k=1}^{n} d_k G^{n-k}`` from the stored states ``G^0..G^{n-1}``."""
    if not 1 <= n <= table.L:
        raise ValueError(f"step {n} outside 1..{table.L}")
    if len(history) < n:
        raise ValueError(f"history holds {len(history)} states, step {n} needs {n}")
    H = np.asarray(history[:n])
    if table.rows.shape[0] == 1:
        coef = table.rows[0, n:0:-1]
        out = coef @ H
    else:
        coef = table.rows[:, n:0:-1][table.index]
        out = np.einsum("mj,jm->m", coef, H)
    return out / table.tau_pow
