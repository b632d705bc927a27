"""Scalar special functions used by the weights and the manufactured sources."""
from __future__ import annotations

import math

import numpy as np
from scipy import special as sp

BE = "BE"
SBD = "SBD"
SCHEMES = (BE, SBD)


def gamma_fn(t):
    """Gamma function; raises at the poles ``0, -1, -2, ...``."""
    t_arr = np.asarray(t, dtype=float)
    if np.any((t_arr <= 0) & (t_arr == np.round(t_arr))):
        raise ValueError(f"gamma function has a pole at {t}")
    out = sp.gamma(t_arr)
    return float(out) if out.ndim == 0 else out


def c2beta(beta: float, gamma: float) -> float:
    """Normalisation constant of the tempered fractional Laplacian.

    The tempered branch ``1 / (2 pi |Gamma(-beta)|)`` applies for
    ``gamma > 0`` and ``beta != 1``; otherwise the untempered constant is used.
    """
    if not 0.0 < beta < 2.0:
        raise ValueError(f"beta must lie in (0, 2), got {beta}")
    if gamma > 0 and beta != 1.0:
        return 1.0 / (2.0 * math.pi * abs(math.gamma(-beta)))
    return beta * math.gamma((2.0 + beta) / 2.0) / (
        2.0 ** (1.0 - beta) * math.pi * math.gamma(1.0 - beta / 2.0)
    )


def lower_incomplete_gamma(a: float, x):
    """Non-regularised lower incomplete gamma ``int_0^x s^(a-1) e^-s ds``."""
    return sp.gammainc(a, x) * math.gamma(a)


def _upper_gamma_cf(a: float, x: np.ndarray) -> np.ndarray:
    # modified Lentz evaluation of the continued fraction, valid for x > 0
    tiny = 1e-300
    b = x + 1.0 - a
    c = np.full_like(x, 1.0 / tiny)
    d = 1.0 / b
    f = d.copy()
    for i in range(1, 500):
        an = -i * (i - a)
        b = b + 2.0
        d = an * d + b
        d = np.where(np.abs(d) < tiny, tiny, d)
        c = b + an / c
        c = np.where(np.abs(c) < tiny, tiny, c)
        d = 1.0 / d
        delta = d * c
        f *= delta
        if np.all(np.abs(delta - 1.0) < 1e-16):
            break
    return np.exp(-x + a * np.log(x)) * f


def upper_incomplete_gamma(a: float, x):
    """``Gamma(a, x)`` for real ``a > -2`` (negative orders allowed) and ``x > 0``.

    Small arguments use the downward recurrence
    ``Gamma(a, x) = (Gamma(a + 1, x) - x^a e^-x) / a`` from a positive order;
    large arguments use the continued fraction, which avoids the cancellation
    the recurrence suffers there.
    """
    x = np.asarray(x, dtype=float)
    if a <= -2:
        raise ValueError("orders <= -2 are not supported")
    large = x > 2.0
    out = np.empty_like(x)
    if np.any(large):
        out[large] = _upper_gamma_cf(a, x[large])
    small = ~large
    if np.any(small):
        xs = x[small]
        if a > 0:
            out[small] = sp.gammaincc(a, xs) * math.gamma(a)
        elif a == 0:
            out[small] = sp.exp1(xs)
        else:
            out[small] = (upper_incomplete_gamma(a + 1.0, xs) - xs**a * np.exp(-xs)) / a
    return out if out.ndim else float(out)


def tempered_tail(beta: float, gamma: float, R):
    """``int_R^inf e^(-gamma r) r^(-1-beta) dr``, the radial tail of the kernel."""
    R = np.asarray(R, dtype=float)
    if gamma == 0:
        return R ** (-beta) / beta
    return gamma**beta * upper_incomplete_gamma(-beta, gamma * R)


def rl_tempered_integral_exp(alpha: float, lam: float, t):
    """``I_t^{1-alpha} e^{lam t}``: Riemann-Liouville integral of an exponential.

    Evaluates ``e^{lam t} lam^(alpha-1) P(1-alpha, lam t)`` where ``P`` is the
    regularised lower incomplete gamma function.
    """
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be non-negative")
    if lam == 0:
        out = t ** (1.0 - alpha) / math.gamma(2.0 - alpha)
    else:
        out = np.exp(lam * t) * lam ** (alpha - 1.0) * sp.gammainc(1.0 - alpha, lam * t)
    return float(out) if out.ndim == 0 else out


def cq_symbol(scheme: str, z):
    """Generating quotient: ``1 - z`` (BE) or ``(1 - z) + (1 - z)^2 / 2`` (SBD)."""
    w = 1.0 - np.asarray(z)
    if scheme == BE:
        return w
    if scheme == SBD:
        return w + 0.5 * w * w
    raise ValueError(f"unknown scheme {scheme!r}")
