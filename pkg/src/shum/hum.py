"""Penalized Hilbert Uniqueness Method on the path tree.

For terminal adjoint data ``zT`` (a field on the leaves) the functional

    J_eps(zT) = 1/2 dt sum_k E[|zeta_k|^2 + |chi m_k|^2] + eps/2 E|zT|^2 - <y0, z_0>

is an exact quadratic ``1/2 <(Lam + eps) zT, zT> - <b, zT>`` in the leaf inner
product ``E<., .>_{L^2_h}``, where ``b`` is the uncontrolled terminal state.
Its minimizer yields controls ``u = -chi m*``, ``v = -zeta*`` that drive the
state to ``y_K = eps zT*``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from .mesh import Mesh
from .noise_tree import AdaptedField, NoiseTree
from .solvers import CoefficientField, ControlPair, SchemeConfig, solve_backward, solve_forward

__all__ = [
    "ControlPair", "HUMReport", "ConvergenceError", "CertificateError", "free_terminal",
    "gramian_apply", "minimize_Jeps", "extract_controls", "control_cost", "control_experiment",
    "exponential_eps", "decay_budget", "conjugate_gradient",
]


class ConvergenceError(RuntimeError):
    """CG hit ``max_iter``; carries the best iterate and its relative residual."""

    def __init__(self, message: str, best: np.ndarray, residual: float):
        super().__init__(message)
        self.best = best
        self.residual = residual


class CertificateError(RuntimeError):
    pass


@dataclass
class HUMReport:
    eps: float
    cg_iterations: int
    cg_residual: float
    terminal_norm: float
    control_cost: float
    certificate_residual: float
    initial_norm: float
    terminal_norm_direct: float = float("nan")
    J_history: list[float] = field(default_factory=list, repr=False)

    @property
    def terminal_ratio(self) -> float:
        return self.terminal_norm / self.initial_norm if self.initial_norm > 0 else 0.0

    @property
    def cost_ratio(self) -> float:
        return self.control_cost / self.initial_norm if self.initial_norm > 0 else 0.0


def exponential_eps(C: float) -> Callable[[float], float]:
    """The rule ``eps(h) = exp(-C / h)``."""
    return lambda h: math.exp(-C / h)


def decay_budget(h: float, C: float, C_obs: float = 1.0) -> float:
    """Admissible terminal size ``C_obs exp(-C/h)`` relative to ``|y0|^2``; tends to 0 with ``h``."""
    return C_obs * math.exp(-C / h)


def free_terminal(y0: np.ndarray, cfg: SchemeConfig) -> np.ndarray:
    """Terminal leaf field of the uncontrolled run from ``y0``."""
    return solve_forward(y0, None, cfg).leaf


def extract_controls(zT: np.ndarray, cfg: SchemeConfig) -> ControlPair:
    _, m, zeta = solve_backward(zT, cfg)
    u = AdaptedField(cfg.tree, [-cfg.chi * mk for mk in m.levels])
    v = AdaptedField(cfg.tree, [-zk for zk in zeta.levels])
    return ControlPair(u, v)


def control_cost(controls: ControlPair, cfg: SchemeConfig) -> float:
    """``dt sum_k E[|chi u_k|^2 + |v_k|^2]`` in ``L^2_h``."""
    total = 0.0
    for k in range(cfg.tree.K):
        total += cfg.leaf_inner(cfg.chi * controls.u[k], cfg.chi * controls.u[k])
        total += cfg.leaf_inner(controls.v[k], controls.v[k])
    return cfg.tree.dt * total


def gramian_apply(zT: np.ndarray, cfg: SchemeConfig) -> np.ndarray:
    """``Lam zT``: minus the terminal state reached from rest under the controls built from ``zT``."""
    controls = extract_controls(zT, cfg)
    return -solve_forward(np.zeros(cfg.mesh.N), controls, cfg).leaf


@dataclass
class CGResult:
    x: np.ndarray
    iterations: int
    residual: float
    J_history: list[float]


def conjugate_gradient(apply: Callable[[np.ndarray], np.ndarray], b: np.ndarray,
                       inner: Callable[[np.ndarray, np.ndarray], float], tol: float, max_iter: int,
                       x0: np.ndarray | None = None) -> CGResult:
    """CG for a self-adjoint positive definite operator under ``inner``.

    Tracks ``J(x) = <Ax, x>/2 - <b, x>`` and raises if it increases beyond
    rounding; raises ``ConvergenceError`` when ``max_iter`` is exhausted.
    """
    bnorm = math.sqrt(inner(b, b))
    x = np.zeros_like(b) if x0 is None else x0.copy()
    if bnorm == 0.0:
        return CGResult(np.zeros_like(b), 0, 0.0, [0.0])
    r = b - apply(x) if x0 is not None else b.copy()
    p = r.copy()
    rr = inner(r, r)
    # J(x) = -(<b, x> + <r, x>)/2 since Ax = b - r
    J = -0.5 * (inner(b, x) + inner(r, x))
    history = [J]
    best, best_res = x.copy(), math.sqrt(rr) / bnorm
    for it in range(1, max_iter + 1):
        Ap = apply(p)
        pAp = inner(p, Ap)
        if pAp <= 0:
            raise FloatingPointError(f"operator is not positive definite (<p, Ap> = {pAp:.3e})")
        alpha = rr / pAp
        x = x + alpha * p
        r = r - alpha * Ap
        J_new = -0.5 * (inner(b, x) + inner(r, x))
        if J_new > J + 1e-12 * max(abs(J), abs(J_new)) + 1e-300:
            raise FloatingPointError(f"J increased at CG iteration {it}: {J:.16e} -> {J_new:.16e}")
        J = J_new
        history.append(J)
        rr_new = inner(r, r)
        res = math.sqrt(rr_new) / bnorm
        if res < best_res:
            best, best_res = x.copy(), res
        if res <= tol:
            true_res = math.sqrt(inner(b - apply(x), b - apply(x))) / bnorm
            return CGResult(x, it, true_res, history)
        p = r + (rr_new / rr) * p
        rr = rr_new
    raise ConvergenceError(f"CG did not reach {tol:g} in {max_iter} iterations (residual {best_res:.3e})",
                           best, best_res)


def _leaf_norm2(a: np.ndarray, cfg: SchemeConfig) -> float:
    return cfg.leaf_inner(a, a)


def minimize_Jeps(y0: np.ndarray, eps: float, tol: float, max_iter: int | None,
                  cfg: SchemeConfig) -> tuple[np.ndarray, HUMReport]:
    """Solve ``(Lam + eps) zT = b`` by CG and certify ``y_K = eps zT*`` by re-simulation."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    if not tol > 0:
        raise ValueError("tol must be positive")
    y0 = np.asarray(y0, dtype=float)
    max_iter = 2 * cfg.leaf_dim if max_iter is None else max_iter
    b = free_terminal(y0, cfg)
    res = conjugate_gradient(lambda z: gramian_apply(z, cfg) + eps * z, b, cfg.leaf_inner, tol, max_iter)
    zT = res.x
    controls = extract_controls(zT, cfg)
    yK = solve_forward(y0, controls, cfg).leaf
    initial = cfg.h * float(np.dot(y0, y0))
    denom = max(math.sqrt(_leaf_norm2(eps * zT, cfg)), math.sqrt(initial))
    cert = math.sqrt(_leaf_norm2(yK - eps * zT, cfg)) / denom if denom > 0 else 0.0
    report = HUMReport(
        eps=eps,
        cg_iterations=res.iterations,
        cg_residual=res.residual,
        terminal_norm=eps**2 * _leaf_norm2(zT, cfg),
        control_cost=control_cost(controls, cfg),
        certificate_residual=cert,
        initial_norm=initial,
        terminal_norm_direct=_leaf_norm2(yK, cfg),
        J_history=res.J_history,
    )
    return zT, report


def control_experiment(y0: np.ndarray, mesh: Mesh, tree: NoiseTree,
                       coeffs: Union[CoefficientField, tuple], G0: tuple[float, float],
                       eps_rule: Union[float, Callable[[float], float]], tol: float = 1e-10,
                       max_iter: int | None = None, certificate_tol: float = 1e-8) -> HUMReport:
    """Minimize, extract controls, re-simulate, and cross-check the terminal norm.

    Raises ``CertificateError`` if the two terminal-norm evaluations disagree by
    more than ``certificate_tol`` (relative) or the certificate itself fails.
    """
    if not isinstance(coeffs, CoefficientField):
        coeffs = CoefficientField.sample(coeffs[0], coeffs[1], mesh, tree)
    cfg = SchemeConfig(mesh, tree, coeffs, G0)
    eps = eps_rule(mesh.h) if callable(eps_rule) else float(eps_rule)
    _, report = minimize_Jeps(y0, eps, tol, max_iter, cfg)
    limit = max(certificate_tol, 10 * tol)
    if report.certificate_residual > limit:
        raise CertificateError(f"certificate residual {report.certificate_residual:.3e} > {limit:g}")
    scale = max(report.terminal_norm, report.terminal_norm_direct)
    if scale > 0 and abs(report.terminal_norm - report.terminal_norm_direct) > limit * scale:
        raise CertificateError(
            f"terminal norm mismatch: eps^2 E|zT|^2 = {report.terminal_norm:.6e}, "
            f"simulated {report.terminal_norm_direct:.6e}"
        )
    return report
