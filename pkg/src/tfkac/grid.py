"""Mesh and problem-definition types shared across the solver.

Interior nodes of the square ``(-l, l)^2`` are ``(x_p, y_q) = (p h, q h)`` for
``-N < p, q < N``.  Fields are flat vectors in x-major order: ``p`` is the
outer index and ``q`` the inner one.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

Coefficient = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class Grid:
    half_width: float
    resolution: int

    def __post_init__(self):
        if not self.half_width > 0:
            raise ValueError(f"half_width must be positive, got {self.half_width}")
        if int(self.resolution) != self.resolution or self.resolution < 2:
            raise ValueError(f"resolution must be an integer >= 2, got {self.resolution}")

    @property
    def h(self) -> float:
        return self.half_width / self.resolution

    @property
    def m(self) -> int:
        """Interior nodes per axis."""
        return 2 * self.resolution - 1

    @property
    def size(self) -> int:
        return self.m * self.m

    @property
    def indices(self) -> np.ndarray:
        n = self.resolution
        return np.arange(-n + 1, n)

    def nodes(self) -> tuple[np.ndarray, np.ndarray]:
        """Return flat coordinate arrays ``(x, y)`` in field order."""
        x1 = self.indices * self.h
        X, Y = np.meshgrid(x1, x1, indexing="ij")
        return X.ravel(), Y.ravel()

    def node_index(self, p: int, q: int) -> int:
        n = self.resolution
        if not (-n < p < n and -n < q < n):
            raise IndexError(f"node ({p}, {q}) is not interior for N={n}")
        return (p + n - 1) * self.m + (q + n - 1)

    def node_pq(self, k: int) -> tuple[int, int]:
        if not 0 <= k < self.size:
            raise IndexError(k)
        a, b = divmod(k, self.m)
        n = self.resolution
        return a - n + 1, b - n + 1

    def as_square(self, v: np.ndarray) -> np.ndarray:
        return np.asarray(v).reshape(self.m, self.m)


def make_grid(l: float, N: int) -> Grid:
    return Grid(float(l), int(N))


def project_field(g: Coefficient, grid: Grid) -> np.ndarray:
    """Sample ``g`` at the interior nodes; always returns a complex vector."""
    X, Y = grid.nodes()
    vals = np.broadcast_to(np.asarray(g(X, Y)), X.shape)
    return np.array(vals, dtype=complex)


def _zero(x, y):
    return np.zeros(np.broadcast(x, y).shape)


_zero.is_zero = True


@dataclass
class ProblemSpec:
    """Continuous problem ``L G = (Delta + gamma)^{beta/2} G + f``.

    ``source(t, x, y)`` returns the complex source at the given nodes and
    ``initial(x, y)`` the initial data.  ``reaction`` must be non-positive on
    the closed domain; ``weight`` is the functional weight ``U``.
    ``oracle_hints`` is forwarded to the quadrature oracle when the initial
    data has to be moved into the source (cache key, square symmetry).
    """

    alpha: float
    beta: float
    gamma: float
    lam: float
    rho: float = 0.0
    sigma: Optional[float] = None
    T: float = 1.0
    reaction: Coefficient = field(default=lambda x, y: -np.ones(np.broadcast(x, y).shape))
    weight: Coefficient = field(default=lambda x, y: np.ones(np.broadcast(x, y).shape))
    initial: Coefficient = field(default=_zero)
    source: Optional[Callable] = None
    K: float = 1.0
    oracle_hints: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.sigma is None:
            self.sigma = 1.0 + self.beta / 2.0
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not 0.05 <= self.beta <= 1.95:
            raise ValueError(f"beta must lie in [0.05, 1.95], got {self.beta}")
        if not self.beta < self.sigma <= 2.0:
            raise ValueError(f"sigma must lie in (beta, 2], got {self.sigma}")
        if self.gamma < 0:
            raise ValueError("gamma must be non-negative")
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        if self.K != 1.0:
            raise ValueError("only K = 1 is supported")
        if self.T <= 0:
            raise ValueError("T must be positive")

    def validate_on(self, grid: Grid) -> None:
        r = np.real(project_field(self.reaction, grid))
        if np.any(r > 0):
            raise ValueError("reaction rate must be non-positive at every node")

    def shift(self, grid: Grid) -> np.ndarray:
        """Per-node exponent ``lambda - r - J rho U`` of the solution decay."""
        r = project_field(self.reaction, grid)
        u = project_field(self.weight, grid)
        return self.lam - r - 1j * self.rho * u
