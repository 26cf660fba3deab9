"""Binary path tree standing in for the Brownian filtration.

Each step draws ``dW = +sqrt(dt)`` or ``-sqrt(dt)`` with probability 1/2.  The
tree is not recombining: level ``k`` stores one node per path prefix, ``2**k``
in total, and node ``p`` has children ``2p`` (up move) and ``2p + 1`` (down).
Fields are stored level-major as arrays of shape ``(2**k, n)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

MAX_STEPS = 16


@dataclass(frozen=True)
class NoiseTree:
    K: int
    T: float

    def __post_init__(self):
        if int(self.K) != self.K or not 1 <= self.K <= MAX_STEPS:
            mib = 2.0**self.K * 8 / 2**20 if isinstance(self.K, int) and self.K > 0 else float("nan")
            raise ValueError(
                f"K={self.K!r} outside 1..{MAX_STEPS}; a full path tree stores 2**K leaves "
                f"(~{mib:.3g} MiB per grid point)"
            )
        if not self.T > 0:
            raise ValueError("T must be positive")

    @property
    def dt(self) -> float:
        return self.T / self.K

    @property
    def sqrt_dt(self) -> float:
        return math.sqrt(self.dt)

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.K + 1) * self.dt

    def n_nodes(self, k: int) -> int:
        return 1 << k

    def probability(self, k: int) -> float:
        return 2.0**-k

    def increments(self, k: int) -> np.ndarray:
        """``dW`` leading into each node of level ``k >= 1``."""
        signs = np.where(np.arange(self.n_nodes(k)) % 2 == 0, 1.0, -1.0)
        return signs * self.sqrt_dt

    def brownian(self, k: int) -> np.ndarray:
        """``W(t_k)`` at every node of level ``k``."""
        W = np.zeros(1)
        for i in range(1, k + 1):
            W = np.repeat(W, 2) + self.increments(i)
        return W


def build_tree(K: int, T: float) -> NoiseTree:
    return NoiseTree(K, T)


@dataclass
class AdaptedField:
    """Grid-valued process: ``levels[k]`` has shape ``(2**k, n)``."""

    tree: NoiseTree
    levels: list[np.ndarray]

    def __post_init__(self):
        if len(self.levels) not in (self.tree.K, self.tree.K + 1):
            raise ValueError("an adapted field needs K or K+1 levels")
        for k, a in enumerate(self.levels):
            if a.ndim != 2 or a.shape[0] != self.tree.n_nodes(k):
                raise ValueError(f"level {k} must have {self.tree.n_nodes(k)} rows, got {a.shape}")

    @classmethod
    def zeros(cls, tree: NoiseTree, n: int, n_levels: int | None = None) -> "AdaptedField":
        n_levels = tree.K + 1 if n_levels is None else n_levels
        return cls(tree, [np.zeros((tree.n_nodes(k), n)) for k in range(n_levels)])

    @classmethod
    def from_function(cls, tree: NoiseTree, n: int, f, n_levels: int | None = None) -> "AdaptedField":
        """``f(k, W_k)`` with ``W_k`` the Brownian values at level ``k``; must return ``(2**k, n)``."""
        n_levels = tree.K + 1 if n_levels is None else n_levels
        return cls(tree, [np.broadcast_to(f(k, tree.brownian(k)[:, None]), (tree.n_nodes(k), n)).copy()
                          for k in range(n_levels)])

    @property
    def leaf(self) -> np.ndarray:
        return self.levels[-1]

    def __getitem__(self, k: int) -> np.ndarray:
        return self.levels[k]

    def scale(self, c: float) -> "AdaptedField":
        return AdaptedField(self.tree, [c * a for a in self.levels])


def expectation(level: np.ndarray) -> np.ndarray:
    """Exact mean over the equally likely nodes of one level."""
    return np.mean(np.asarray(level, dtype=float), axis=0)


def cond_expectation(level: np.ndarray) -> np.ndarray:
    """``E[xi_{k+1} | F_k]``: average of the two children of every level-k node."""
    a = np.asarray(level, dtype=float)
    return 0.5 * (a[0::2] + a[1::2])


def martingale_rep(level: np.ndarray, dt: float) -> np.ndarray:
    """``Z_k = E[xi_{k+1} dW_{k+1} | F_k] / dt = (xi_up - xi_down) / (2 sqrt(dt))``."""
    a = np.asarray(level, dtype=float)
    return (a[0::2] - a[1::2]) / (2.0 * math.sqrt(dt))


def expect_inner(a: np.ndarray, b: np.ndarray, h: float) -> float:
    """``E <a, b>_{L^2_h}`` for two fields on the same level."""
    return h * float(np.sum(a * b)) / a.shape[0]
