"""Numerical observability constant.

The quotient ``|z_0|^2 / (dt sum_k E[|zeta_k|^2 + |chi m_k|^2] + eps_T E|zT|^2)`` is
a generalized Rayleigh quotient ``<B x, x> / <(Lam + eps_T) x, x>`` over terminal
data ``x``, with ``B`` the free forward map composed with the backward map
to time zero.  Its supremum is found by power iteration with CG inner solves.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .hum import conjugate_gradient, free_terminal, gramian_apply
from .solvers import SchemeConfig, solve_backward


def observation_terms(zT: np.ndarray, cfg: SchemeConfig, eps_T: float) -> tuple[float, float]:
    """``(|z_0|^2, denominator)`` for terminal data ``zT``."""
    z, m, zeta = solve_backward(zT, cfg)
    num = cfg.h * float(np.dot(z[0][0], z[0][0]))
    den = 0.0
    for k in range(cfg.tree.K):
        den += cfg.leaf_inner(zeta[k], zeta[k]) + cfg.leaf_inner(cfg.chi * m[k], cfg.chi * m[k])
    den = cfg.tree.dt * den + eps_T * cfg.leaf_inner(zT, zT)
    return num, den


def observability_quotient(zT: np.ndarray, cfg: SchemeConfig, eps_T: float) -> float:
    zT = np.asarray(zT, dtype=float)
    if not np.any(zT):
        raise ValueError("the observability quotient is undefined for zT = 0")
    num, den = observation_terms(zT, cfg, eps_T)
    return num / den


@dataclass
class ObservabilityReport:
    quotient: float
    iterations: int
    h: float
    T: float
    H: float
    eps_T: float
    converged: bool
    maximizer: np.ndarray = field(repr=False)
    numerator: float = float("nan")
    denominator: float = float("nan")
    history: list[float] = field(default_factory=list, repr=False)

    @property
    def bound_exponent(self) -> float:
        """``1 + 1/T + H^{2/7} + T + H^2 T``."""
        T, H = self.T, self.H
        return 1.0 + 1.0 / T + H ** (2.0 / 7.0) + T + H * H * T

    @property
    def fitted_C(self) -> float:
        """``C`` with ``quotient = exp(C * bound_exponent)``."""
        return math.log(self.quotient) / self.bound_exponent if self.quotient > 0 else -math.inf


def estimate_Cobs(cfg: SchemeConfig, eps_T: float, tol: float = 1e-8, max_iter: int = 200,
                  seed: int = 0, inner_tol: float = 1e-12) -> ObservabilityReport:
    """Largest generalized eigenvalue of ``B x = q (Lam + eps_T) x`` by power iteration.

    Quotients must not decrease between iterations (checked up to the inner
    solve accuracy).  If ``max_iter`` is reached the best estimate is returned
    with ``converged=False``.
    """
    if not eps_T > 0:
        raise ValueError("eps_T must be positive")
    shape = (cfg.tree.n_nodes(cfg.tree.K), cfg.mesh.N)
    x = np.random.default_rng(seed).standard_normal(shape)

    def pencil(v):
        return gramian_apply(v, cfg) + eps_T * v

    history = []
    q_old = -math.inf
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        num, den = observation_terms(x, cfg, eps_T)
        q = num / den
        if q < q_old * (1.0 - 1e3 * inner_tol) - 1e-300:
            raise FloatingPointError(f"power iteration quotient decreased: {q_old:.16e} -> {q:.16e}")
        history.append(q)
        if q_old > 0 and abs(q - q_old) <= tol * q:
            converged = True
            break
        q_old = q
        z, _, _ = solve_backward(x, cfg)
        Bx = free_terminal(z[0][0], cfg)
        x = conjugate_gradient(pencil, Bx, cfg.leaf_inner, inner_tol, 4 * cfg.leaf_dim).x
        x /= math.sqrt(cfg.leaf_inner(x, x))
    num, den = observation_terms(x, cfg, eps_T)
    return ObservabilityReport(
        quotient=num / den, iterations=it, h=cfg.h, T=cfg.tree.T, H=cfg.coefficients.H_norm,
        eps_T=eps_T, converged=converged, maximizer=x, numerator=num, denominator=den, history=history,
    )
