"""Semi-implicit forward scheme for the controlled system and its exact adjoint.

Forward step on every path node (``S = (I + dt A)^{-1}``, ``A`` the clamped
biharmonic matrix)::

    y_{k+1} = S [(I + dt a1_k) y_k + dt chi u_k + (a2_k y_k + v_k) dW_{k+1}]

The backward recursion is the transpose of this map under
``E <., .>_{L^2_h}``, which makes the discrete duality identity exact.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .calculus import BiharmonicOperator, assemble_biharmonic
from .mesh import Mesh
from .noise_tree import AdaptedField, NoiseTree, cond_expectation, expect_inner, martingale_rep

Coefficient = Union[float, Callable[[float, np.ndarray], np.ndarray]]


def _sample(a: Coefficient, times: np.ndarray, x: np.ndarray) -> np.ndarray:
    if callable(a):
        return np.array([np.broadcast_to(np.asarray(a(float(t), x), dtype=float), x.shape) for t in times])
    return np.full((len(times), len(x)), float(a))


@dataclass
class CoefficientField:
    """Deterministic zeroth-order coefficients sampled at the left endpoints ``t_k``."""

    a1: np.ndarray
    a2: np.ndarray

    def __post_init__(self):
        if not (np.all(np.isfinite(self.a1)) and np.all(np.isfinite(self.a2))):
            raise ValueError("coefficients must be finite")

    @classmethod
    def sample(cls, a1: Coefficient, a2: Coefficient, mesh: Mesh, tree: NoiseTree) -> "CoefficientField":
        t = tree.times[:-1]
        x = mesh.M.points
        return cls(_sample(a1, t, x), _sample(a2, t, x))

    @property
    def H_norm(self) -> float:
        return float(np.max(np.abs(self.a1)) + np.max(np.abs(self.a2)))


@dataclass
class ControlPair:
    """Drift control ``u`` (supported in ``G0 & M``) and diffusion control ``v``; K levels each."""

    u: AdaptedField
    v: AdaptedField

    @classmethod
    def zeros(cls, tree: NoiseTree, n: int) -> "ControlPair":
        return cls(AdaptedField.zeros(tree, n, tree.K), AdaptedField.zeros(tree, n, tree.K))

    def check_support(self, mask: np.ndarray) -> bool:
        out = mask == 0
        return all(not np.any(lvl[:, out]) for lvl in self.u.levels)


class SchemeConfig:
    """Mesh, tree, coefficients, control interval and the shared Cholesky factor of ``I + dt A``."""

    def __init__(self, mesh: Mesh, tree: NoiseTree, coefficients: CoefficientField | None = None,
                 G0: tuple[float, float] = (0.3, 0.7)):
        self.mesh = mesh
        self.tree = tree
        N = mesh.N
        self.coefficients = coefficients or CoefficientField(np.zeros((tree.K, N)), np.zeros((tree.K, N)))
        if self.coefficients.a1.shape != (tree.K, N) or self.coefficients.a2.shape != (tree.K, N):
            raise ValueError("coefficient arrays must have shape (K, N)")
        self.G0 = tuple(G0)
        self.chi = mesh.indicator(self.G0)
        self.biharmonic: BiharmonicOperator = assemble_biharmonic(mesh)
        self.system = np.eye(N) + tree.dt * self.biharmonic.matrix
        self.factor = cho_factor(self.system)
        probe = np.random.default_rng(0).standard_normal(N)
        res = np.linalg.norm(self.system @ self.solve(probe) - probe)
        if res > 1e-11 * np.linalg.norm(probe):
            raise np.linalg.LinAlgError(f"implicit solve residual {res:.3e} too large")

    @classmethod
    def build(cls, mesh: Mesh, tree: NoiseTree, a1: Coefficient = 0.0, a2: Coefficient = 0.0,
              G0: tuple[float, float] = (0.3, 0.7)) -> "SchemeConfig":
        return cls(mesh, tree, CoefficientField.sample(a1, a2, mesh, tree), G0)

    @property
    def h(self) -> float:
        return self.mesh.h

    @property
    def leaf_dim(self) -> int:
        return self.tree.n_nodes(self.tree.K) * self.mesh.N

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """``S`` applied row-wise; ``S`` is symmetric so this is also ``S^T``."""
        rhs = np.asarray(rhs, dtype=float)
        out = cho_solve(self.factor, np.atleast_2d(rhs).T).T
        return out.reshape(rhs.shape)

    def leaf_inner(self, a: np.ndarray, b: np.ndarray) -> float:
        return expect_inner(a, b, self.h)


def solve_forward(y0: np.ndarray, controls: ControlPair | None, cfg: SchemeConfig) -> AdaptedField:
    tree, N = cfg.tree, cfg.mesh.N
    y0 = np.asarray(y0, dtype=float)
    if y0.shape != (N,):
        raise ValueError(f"y0 must have shape ({N},)")
    dt, sq = tree.dt, tree.sqrt_dt
    a1, a2 = cfg.coefficients.a1, cfg.coefficients.a2
    levels = [y0[None, :].copy()]
    for k in range(tree.K):
        yk = levels[-1]
        base = yk * (1.0 + dt * a1[k])
        noise = a2[k] * yk
        if controls is not None:
            base = base + dt * cfg.chi * controls.u[k]
            noise = noise + controls.v[k]
        noise = noise * sq
        rhs = np.empty((2 * yk.shape[0], N))
        rhs[0::2] = base + noise
        rhs[1::2] = base - noise
        out = cfg.solve(rhs)
        if not np.all(np.isfinite(out)):
            raise FloatingPointError(f"non-finite state at step {k + 1}")
        levels.append(out)
    return AdaptedField(tree, levels)


def solve_backward(zT: np.ndarray, cfg: SchemeConfig) -> tuple[AdaptedField, AdaptedField, AdaptedField]:
    """Return ``(z, m, zeta)``; ``m`` and ``zeta`` play the roles of ``z`` and ``Z`` in cost integrals."""
    tree, N = cfg.tree, cfg.mesh.N
    zT = np.asarray(zT, dtype=float)
    if zT.shape != (tree.n_nodes(tree.K), N):
        raise ValueError(f"zT must have shape ({tree.n_nodes(tree.K)}, {N})")
    dt = tree.dt
    a1, a2 = cfg.coefficients.a1, cfg.coefficients.a2
    z = [None] * (tree.K + 1)
    m = [None] * tree.K
    zeta = [None] * tree.K
    z[tree.K] = zT.copy()
    for k in range(tree.K - 1, -1, -1):
        m[k] = cfg.solve(cond_expectation(z[k + 1]))
        zeta[k] = cfg.solve(martingale_rep(z[k + 1], dt))
        z[k] = (1.0 + dt * a1[k]) * m[k] + dt * a2[k] * zeta[k]
    return AdaptedField(tree, z), AdaptedField(tree, m), AdaptedField(tree, zeta)


def control_pairing(controls: ControlPair, m: AdaptedField, zeta: AdaptedField, cfg: SchemeConfig) -> float:
    """``dt sum_k E[<u_k, chi m_k> + <v_k, zeta_k>]``."""
    total = 0.0
    for k in range(cfg.tree.K):
        total += expect_inner(controls.u[k], cfg.chi * m[k], cfg.h)
        total += expect_inner(controls.v[k], zeta[k], cfg.h)
    return cfg.tree.dt * total


def duality_gap(y0: np.ndarray, zT: np.ndarray, controls: ControlPair | None, cfg: SchemeConfig) -> float:
    """``E<y_K, zT> - <y0, z_0> - dt sum_k E[<u_k, chi m_k> + <v_k, zeta_k>]``; zero up to rounding."""
    y = solve_forward(y0, controls, cfg)
    z, m, zeta = solve_backward(zT, cfg)
    gap = cfg.leaf_inner(y.leaf, zT) - cfg.h * float(np.dot(y0, z[0][0]))
    if controls is not None:
        gap -= control_pairing(controls, m, zeta, cfg)
    return gap
