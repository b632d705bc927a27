"""FFT-based products with the BTTB system matrix, a BCCB preconditioner and COCG."""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
import scipy.fft

from .spatial import SpatialOperator


def _embed_size(m: int) -> int:
    return 1 << int(np.ceil(np.log2(max(2 * m - 1, 1))))


@dataclass(frozen=True)
class BttbOperator:
    """System matrix ``A_0 / h^beta + diag(diag_total)``.

    ``A_0`` is the translation-invariant off-diagonal part, given by the
    offset kernel ``t[a + m - 1, b + m - 1]`` for ``|a|, |b| < m``.
    """

    kernel: np.ndarray
    kernel_spectrum: np.ndarray
    m: int
    diag_total: np.ndarray
    h_pow: float
    tau_pow: float

    @classmethod
    def from_kernel(cls, kernel, diag_total, h_pow=1.0, tau_pow=1.0):
        kernel = np.asarray(kernel, dtype=float)
        m = (kernel.shape[0] + 1) // 2
        if kernel.shape != (2 * m - 1, 2 * m - 1):
            raise ValueError(f"kernel must be square of odd size, got {kernel.shape}")
        diag_total = np.asarray(diag_total, dtype=complex)
        if diag_total.shape != (m * m,):
            raise ValueError("diag_total has the wrong length")
        P = _embed_size(m)
        c = np.zeros((P, P))
        idx = np.arange(-(m - 1), m) % P
        c[np.ix_(idx, idx)] = kernel
        return cls(kernel, scipy.fft.fft2(c), m, diag_total, float(h_pow), float(tau_pow))

    @property
    def size(self) -> int:
        return self.m * self.m

    def matvec(self, v):
        return bttb_matvec(self, v)

    def offdiag_matvec(self, v) -> np.ndarray:
        """``A_0 v`` without the ``1/h^beta`` factor."""
        m, P = self.m, self.kernel_spectrum.shape[0]
        V = np.zeros((P, P), dtype=complex)
        V[:m, :m] = np.asarray(v).reshape(m, m)
        Y = scipy.fft.ifft2(self.kernel_spectrum * scipy.fft.fft2(V))
        return Y[:m, :m].ravel()

    def dense(self) -> np.ndarray:
        m = self.m
        i = np.arange(m)
        d = i[:, None] - i[None, :] + m - 1
        A = self.kernel[d[:, None, :, None], d[None, :, None, :]].reshape(m * m, m * m)
        A = A.astype(complex) / self.h_pow
        A[np.diag_indices_from(A)] = self.diag_total
        return A


def system_operator(spatial: SpatialOperator, d0=None, tau_pow: float = 1.0) -> BttbOperator:
    """``A = A_s / h^beta + diag(d0) / tau^alpha`` from an assembled spatial operator."""
    h_pow = spatial.h_pow
    diag = spatial.diag / h_pow + (0.0 if d0 is None else np.asarray(d0) / tau_pow)
    diag = np.broadcast_to(diag, spatial.diag.shape)
    return BttbOperator.from_kernel(spatial.kernel, diag, h_pow, tau_pow)


def bttb_matvec(op: BttbOperator, v) -> np.ndarray:
    v = np.asarray(v)
    if v.shape != (op.size,):
        raise ValueError(f"expected a vector of length {op.size}, got shape {v.shape}")
    return op.offdiag_matvec(v) / op.h_pow + op.diag_total * v


class SingularPreconditioner(RuntimeError):
    pass


@dataclass(frozen=True)
class BccbPreconditioner:
    """Level-2 optimal (Frobenius-nearest) circulant approximation of ``A_0 / h^beta + c_bar I``."""

    eigenvalues: np.ndarray
    shift: complex

    def solve(self, r) -> np.ndarray:
        m = self.eigenvalues.shape[0]
        R = np.asarray(r).reshape(m, m)
        return scipy.fft.ifft2(scipy.fft.fft2(R) / self.eigenvalues).ravel()


def _chan_axis(t: np.ndarray, axis: int) -> np.ndarray:
    # c_k = ((m - k) t_k + k t_{k - m}) / m along one axis of the offset array
    t = np.moveaxis(t, axis, 0)
    m = (t.shape[0] + 1) // 2
    k = np.arange(m).reshape((-1,) + (1,) * (t.ndim - 1))
    wrapped = np.zeros_like(t[m - 1:])
    wrapped[1:] = t[: m - 1]
    c = ((m - k) * t[m - 1:] + k * wrapped) / m
    return np.moveaxis(c, 0, axis)


def chan_first_column(kernel: np.ndarray) -> np.ndarray:
    """First column (as an ``m x m`` array) of the two-level optimal circulant."""
    return _chan_axis(_chan_axis(np.asarray(kernel), 0), 1)


def build_preconditioner(op: BttbOperator) -> BccbPreconditioner:
    shift = complex(np.mean(op.diag_total))
    c = chan_first_column(op.kernel)
    eig = scipy.fft.fft2(c) / op.h_pow + shift
    mags = np.abs(eig)
    if mags.min() <= 1e-14 * mags.max():
        raise SingularPreconditioner("circulant preconditioner is numerically singular")
    return BccbPreconditioner(eig, shift)


class KrylovResult(NamedTuple):
    x: np.ndarray
    iterations: int
    residual: float
    converged: bool


def _bilinear(a, b):
    return np.sum(a * b)


def krylov_solve(op, rhs, precond: Optional[BccbPreconditioner] = None, tol: float = 1e-9,
                 max_iter: int = 1000, x0=None) -> KrylovResult:
    """COCG for complex symmetric ``op``: CG with the unconjugated form ``x^T y``.

    With real data this is ordinary (preconditioned) CG.  Stops on
    ``||b - A x|| <= tol ||b||``; the returned residual is recomputed from
    the final iterate.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    apply = op.matvec if hasattr(op, "matvec") else op
    psolve = precond.solve if precond is not None else (lambda r: r)
    b = np.asarray(rhs, dtype=complex)
    bnorm = np.linalg.norm(b)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=complex)
    if bnorm == 0:
        return KrylovResult(np.zeros_like(b), 0, 0.0, True)
    r = b - apply(x) if x0 is not None else b.copy()
    it = 0
    while it < max_iter:
        z = psolve(r)
        p = z.copy()
        rho = _bilinear(r, z)
        restart = False
        while it < max_iter:
            if np.linalg.norm(r) <= tol * bnorm:
                break
            q = apply(p)
            it += 1
            mu = _bilinear(p, q)
            if abs(mu) <= 1e-14 * np.linalg.norm(p) * np.linalg.norm(q) or abs(rho) == 0:
                # breakdown of the bilinear form: one minimal-residual step, then restart
                a = np.vdot(q, r) / np.vdot(q, q)
                x += a * p
                r -= a * q
                restart = True
                break
            a = rho / mu
            x += a * p
            r -= a * q
            z = psolve(r)
            rho_new = _bilinear(r, z)
            p = z + (rho_new / rho) * p
            rho = rho_new
        true_r = b - apply(x)
        res = np.linalg.norm(true_r) / bnorm
        if res <= tol:
            return KrylovResult(x, it, float(res), True)
        if not restart and np.linalg.norm(r) > tol * bnorm:
            break
        r = true_r
    res = np.linalg.norm(b - apply(x)) / bnorm
    return KrylovResult(x, it, float(res), bool(res <= tol))
