"""Carleman weight machinery.

Weights (``psi`` a downward parabola centred in ``G2``)::

    theta(t) = 1 / ((t + delta T)(T + delta T - t)),    s = lambda theta
    varphi(x) = exp(mu (|2 psi|_C + psi(x))),        phi = varphi - exp(4 mu |psi|_C)
    r = exp(s phi),                                  rho = 1 / r

Weighted quantities span hundreds of orders of magnitude, so remainder fits
work with ``rho`` normalised at the evaluation point and the Carleman
functional table is accumulated in log space.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from math import factorial

import numpy as np
from scipy.special import logsumexp

from .mesh import Mesh
from .noise_tree import AdaptedField, NoiseTree, cond_expectation, martingale_rep

OVERFLOW_EXPONENT = 700.0


class WeightOverflowError(ValueError):
    pass


class RegimeError(ValueError):
    pass


@dataclass(frozen=True)
class PsiFunction:
    """``psi(x) = K - (x - x0)^2`` on ``(-margin, 1 + margin)``."""

    x0: float
    K: float
    margin: float
    C0: float = float("nan")

    def __call__(self, x):
        return self.K - (np.asarray(x, dtype=float) - self.x0) ** 2

    def d1(self, x):
        return -2.0 * (np.asarray(x, dtype=float) - self.x0)

    def taylor(self, x: float, degree: int) -> np.ndarray:
        """Taylor coefficients of ``tau -> psi(x + tau)``."""
        c = np.zeros(degree + 1)
        c[0] = float(self(x))
        if degree >= 1:
            c[1] = float(self.d1(x))
        if degree >= 2:
            c[2] = -1.0
        return c

    @property
    def sup_norm(self) -> float:
        """``|psi|_{C([0, 1])}``."""
        cand = [0.0, 1.0] + ([self.x0] if 0.0 <= self.x0 <= 1.0 else [])
        return float(max(abs(self(x)) for x in cand))


def build_psi(G2: tuple[float, float], margin: float = 0.1, floor: float = 0.05,
              samples: int = 10_000) -> PsiFunction:
    """Parabola peaked at the midpoint of ``G2`` meeting the sign and gradient conditions.

    ``K = d^2 + floor`` with ``d`` the largest distance from ``x0`` to the
    extended interval, so ``psi >= floor > 0`` there.  All conditions are
    re-checked on a ``samples``-point grid.
    """
    a, b = map(float, G2)
    if not 0.0 < a < b < 1.0:
        raise ValueError(f"G2={G2!r} must be compactly contained in (0, 1)")
    if margin <= 0 or floor <= 0:
        raise ValueError("margin and floor must be positive")
    x0 = 0.5 * (a + b)
    d = max(x0 + margin, 1.0 + margin - x0)
    C0 = 2.0 * min(x0 - a, b - x0)
    psi = PsiFunction(x0, d * d + floor, margin, C0)

    xe = np.linspace(-margin, 1.0 + margin, samples)[1:-1]
    if not np.all(psi(xe) > 0):
        raise ArithmeticError("psi is not positive on the extended interval")
    if not (psi.d1(0.0) > 0 and psi.d1(1.0) < 0):
        raise ArithmeticError("psi has the wrong slope at the boundary")
    xo = np.linspace(0.0, 1.0, samples)
    xo = xo[(xo <= a) | (xo >= b)]
    if not np.all(np.abs(psi.d1(xo)) >= C0 * (1 - 1e-12)):
        raise ArithmeticError("|psi'| falls below C0 outside G2")
    return psi


@dataclass(frozen=True)
class WeightParams:
    lam: float
    mu: float
    delta: float
    T: float
    psi: PsiFunction

    def __post_init__(self):
        if not 0.0 < self.delta < 0.5:
            raise ValueError(f"delta={self.delta!r} must lie in (0, 1/2)")
        if self.lam < 1 or self.mu < 1:
            raise ValueError("lambda and mu must be >= 1")
        if not self.T > 0:
            raise ValueError("T must be positive")

    @property
    def psi_sup(self) -> float:
        return self.psi.sup_norm

    def varphi(self, x):
        return np.exp(self.mu * (2.0 * self.psi_sup + self.psi(x)))

    def phi(self, x):
        return self.varphi(x) - math.exp(4.0 * self.mu * self.psi_sup)

    def s(self, t):
        return self.lam * eval_theta(t, self)


def eval_theta(t, params: WeightParams):
    T, dT = params.T, params.delta * params.T
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0) or np.any(t_arr > T):
        raise ValueError(f"t must lie in [0, T={T}]")
    out = 1.0 / ((t_arr + dT) * (T + dT - t_arr))
    return float(out) if out.ndim == 0 else out


@dataclass
class WeightField:
    t: float
    theta: float
    s: float
    x: np.ndarray
    phi: np.ndarray
    varphi: np.ndarray
    r: np.ndarray
    rho: np.ndarray


def eval_weights(t: float, params: WeightParams, mesh: Mesh) -> WeightField:
    """Weights on every half-lattice point from ``-h`` to ``1 + h`` (ghosts included)."""
    x = np.arange(-2, 2 * mesh.N + 5) * (mesh.h / 2.0)
    theta = eval_theta(t, params)
    s = params.lam * theta
    phi = params.phi(x)
    expo = s * phi
    worst = float(np.max(np.abs(expo)))
    if worst > OVERFLOW_EXPONENT:
        raise WeightOverflowError(
            f"|s phi| reaches {worst:.4g} > {OVERFLOW_EXPONENT:g} at t={t}; "
            "use a smaller lambda (or mu) or a larger delta"
        )
    r = np.exp(expo)
    return WeightField(t, theta, s, x, phi, params.varphi(x), r, np.exp(-expo))


@dataclass
class RegimeReport:
    lambda_ok: bool
    h_ok: bool
    ratio_ok: bool
    h1_ok: bool
    lambda_min: float
    ratio: float
    h1: float

    @property
    def passed(self) -> bool:
        return self.lambda_ok and self.h_ok and self.ratio_ok and self.h1_ok


def regime_check(params: WeightParams, h: float, lambda0: float, eps0: float, h0: float,
                 C: float = 1.0, H: float = 0.0) -> RegimeReport:
    """Parameter conditions of the Carleman estimate plus ``h <= h1 = C (1 + 1/T + H^{2/7})^{-1}``."""
    T = params.T
    lam_min = lambda0 * (T + T * T)
    ratio = params.lam * h / (params.delta * T * T)
    h1 = C / (1.0 + 1.0 / T + H ** (2.0 / 7.0))
    return RegimeReport(params.lam >= lam_min, h <= h0, ratio <= eps0, h <= h1, lam_min, ratio, h1)


# --- truncated power series -------------------------------------------------

def _series_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.convolve(a, b)[: len(a)]


def _series_exp(a: np.ndarray) -> np.ndarray:
    """``exp(a(tau))`` for a series with ``a[0] == 0``."""
    n = len(a)
    e = np.zeros(n)
    e[0] = 1.0
    for i in range(1, n):
        e[i] = sum(k * a[k] * e[i - k] for k in range(1, i + 1)) / i
    return e


def _series_deriv(a: np.ndarray, times: int) -> np.ndarray:
    for _ in range(times):
        a = a[1:] * np.arange(1, len(a))
    return a


def _stencil(m: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Offsets (in units of h/2) and weights of ``A_h^m D_h^n`` with ``h = 1``."""
    poly = np.array([1.0])
    for _ in range(m):
        poly = np.convolve(poly, [0.5, 0.0, 0.5])
    for _ in range(n):
        poly = np.convolve(poly, [-1.0, 0.0, 1.0])
    offsets = np.arange(len(poly)) - (len(poly) - 1) // 2
    keep = poly != 0
    return offsets[keep], poly[keep]


@dataclass
class RemainderFit:
    order: float
    h: np.ndarray
    errors: np.ndarray
    exact: bool = False

    @property
    def status(self) -> str:
        return "exact at precision" if self.exact else f"order {self.order:.3f}"


def _fit(h_list, errors, floor=1e-14) -> RemainderFit:
    h = np.asarray(h_list, dtype=float)
    err = np.asarray(errors, dtype=float)
    if np.any(err < floor):
        return RemainderFit(float("nan"), h, err, exact=True)
    slope = np.polyfit(np.log(h), np.log(err), 1)[0]
    return RemainderFit(float(slope), h, err)


def _check_h_list(h_list):
    h = np.asarray(h_list, dtype=float)
    if len(h) < 3:
        raise ValueError("need at least three mesh sizes")
    if not np.allclose(h[:-1] / h[1:], 2.0, rtol=1e-12, atol=0):
        raise ValueError("mesh sizes must halve successively")
    return h


def stencil_remainder_order(f, derivative: float, m: int, n: int, x: float, h_list) -> RemainderFit:
    """Fitted order of ``|A_h^m D_h^n f(x) - f^{(n)}(x)|`` for a plain callable ``f``."""
    h = _check_h_list(h_list)
    off, w = _stencil(m, n)
    errs = [abs(sum(wi * f(x + oi * hi / 2) for oi, wi in zip(off, w)) / hi**n - derivative) for hi in h]
    return _fit(h, errs)


class _NormalisedRho:
    """``log(rho(y) / rho(x))`` evaluated without the huge constant part of ``phi``."""

    def __init__(self, params: WeightParams, t: float, x: float):
        self.p, self.x = params, x
        self.s = params.s(t)
        self.vx = float(params.varphi(x))

    def log(self, y):
        dpsi = self.p.psi(y) - self.p.psi(self.x)
        return -self.s * self.vx * np.expm1(self.p.mu * dpsi)

    def taylor(self, degree: int) -> np.ndarray:
        """Taylor coefficients of ``tau -> rho(x + tau) / rho(x)``."""
        dpsi = self.p.psi.taylor(self.x, degree)
        dpsi[0] = 0.0
        ex = _series_exp(self.p.mu * dpsi)
        ex[0] -= 1.0
        return _series_exp(-self.s * self.vx * ex)

    def scale(self) -> float:
        """Inverse length over which ``rho`` varies by O(1) around ``x``."""
        g1 = self.s * self.p.mu * abs(float(self.p.psi.d1(self.x))) * self.vx
        g2 = self.s * self.p.mu * abs(-2.0 + self.p.mu * float(self.p.psi.d1(self.x)) ** 2) * self.vx
        return max(g1, math.sqrt(g2), 1e-300)


def asymptotic_h_list(params: WeightParams, t: float, x: float, levels: int = 3,
                      target: float = 0.1) -> list[float]:
    """Halving mesh sizes starting at the largest power of two with ``h * scale <= target``."""
    sc = _NormalisedRho(params, t, x).scale()
    h0 = 2.0 ** math.floor(math.log2(target / sc))
    h0 = min(h0, 0.5)
    return [h0 / 2**i for i in range(levels)]


def remainder_order(params: WeightParams, m: int, n: int, t: float, x: float, h_list,
                    outer: tuple[int, int] = (0, 0), kind: str = "rho") -> RemainderFit:
    """Fitted convergence order of weighted stencil remainders.

    ``kind="rho"`` measures ``r(x) |A_h^m D_h^n rho(x) - rho^{(n)}(x)|``;
    ``kind="r_rho"`` measures ``|A_h^j D_h^k (r A_h^m D_h^n rho)(x) - d^k(r d^n rho)(x)|``
    with ``(j, k) = outer``.  Errors are divided by ``s^n``; the expected slope is 2.
    """
    h = _check_h_list(h_list)
    worst = params.lam * h[0] / (params.delta * params.T**2)
    if worst > 1.0:
        raise RegimeError(f"lambda h (delta T^2)^-1 = {worst:.4g} > 1 at the largest h")
    nr = _NormalisedRho(params, t, x)
    sn = nr.s**n
    off, w = _stencil(m, n)
    if kind == "rho":
        exact = factorial(n) * nr.taylor(n)[n]
        errs = []
        for hi in h:
            vals = np.exp(nr.log(x + off * hi / 2))
            errs.append(abs(float(np.dot(w, vals)) / hi**n - exact) / sn)
    elif kind == "r_rho":
        j, k = outer
        ser = nr.taylor(n + k)
        inner = _series_deriv(ser, n)
        prod = _series_mul(_series_reciprocal(ser)[: len(inner)], inner)
        exact = factorial(k) * prod[k]
        off2, w2 = _stencil(j, k)
        errs = []
        for hi in h:
            total = 0.0
            for o1, c1 in zip(off2, w2):
                y = x + o1 * hi / 2
                logs = nr.log(y + off * hi / 2) - nr.log(y)
                total += c1 * float(np.dot(w, np.exp(logs))) / hi**n
            errs.append(abs(total / hi**k - exact) / sn)
    else:
        raise ValueError(f"unknown remainder kind {kind!r}")
    return _fit(h, errs)


def _series_reciprocal(e: np.ndarray) -> np.ndarray:
    """Series of ``1 / e(tau)`` for ``e[0] == 1``."""
    n = len(e)
    inv = np.zeros(n)
    inv[0] = 1.0
    for i in range(1, n):
        inv[i] = -sum(e[k] * inv[i - k] for k in range(1, i + 1))
    return inv


# --- Carleman functionals ---------------------------------------------------

@dataclass
class CarlemanProbe:
    """``w`` (K+1 levels on M) with drift/diffusion residuals ``f``, ``g`` (K levels) of
    ``-dw + D_h^4 w dt = f dt + g dW``."""

    w: AdaptedField
    f: AdaptedField
    g: AdaptedField


def probe_from_backward(z: AdaptedField, biharmonic: np.ndarray) -> CarlemanProbe:
    """Read ``f`` and ``g`` off a discrete path so that the step identity holds exactly.

    Per node, ``w_{k+1} - w_k = (E[w_{k+1}|F_k] - w_k) + Zhat dW`` with ``Zhat``
    the martingale representation, so ``g = -Zhat`` and
    ``f = (w_k - E[w_{k+1}|F_k]) / dt + A w_k``.
    """
    tree = z.tree
    dt = tree.dt
    f, g = [], []
    for k in range(tree.K):
        ce = cond_expectation(z[k + 1])
        f.append((z[k] - ce) / dt + z[k] @ biharmonic.T)
        g.append(-martingale_rep(z[k + 1], dt))
    return CarlemanProbe(z, AdaptedField(tree, f), AdaptedField(tree, g))


LHS_TERMS = ("s7_w", "s5_Dw", "s3_D2w", "s1_D3w")
RHS_TERMS = ("local_s7_w", "f", "s4_g", "endpoint_0", "endpoint_T")


@dataclass
class CarlemanTable:
    """Natural logs of every term; ``values`` exponentiates them (may underflow to 0)."""

    log_terms: dict[str, float]
    h: float

    @property
    def values(self) -> dict[str, float]:
        return {k: math.exp(v) if v > -math.inf else 0.0 for k, v in self.log_terms.items()}

    @property
    def log_lhs(self) -> float:
        return float(logsumexp([self.log_terms[k] for k in LHS_TERMS]))

    @property
    def log_rhs(self) -> float:
        return float(logsumexp([self.log_terms[k] for k in RHS_TERMS]))

    @property
    def ratio(self) -> float:
        """Sum of LHS terms over sum of RHS terms (``C = 1``)."""
        if self.log_lhs == -math.inf:
            return 0.0
        return math.exp(self.log_lhs - self.log_rhs)


def _zero_ext_differences(w: np.ndarray, h: float):
    """``D_h``, ``D_h^2``, ``D_h^3`` of fields on M extended by four zero boundary/ghost values.

    Returned on the odd lattice ``-1..2N+3``, on ``M_bar`` and on ``M*`` respectively.
    """
    ext = np.pad(w, ((0, 0), (2, 2)))
    d1 = np.diff(ext, axis=1) / h
    d2 = np.diff(d1, axis=1) / h
    d3 = np.diff(d2, axis=1) / h
    return d1, d2, d3


def _log_weighted(a: np.ndarray, logw: np.ndarray, coef: float) -> float:
    """``log(coef * sum_i w_i a_i^2)`` with ``w = exp(logw)``; rows are equiprobable paths."""
    sq = a * a
    if not np.any(sq):
        return -math.inf
    return float(logsumexp(np.broadcast_to(logw, sq.shape), b=sq)) + math.log(coef)


def carleman_functionals(probe: CarlemanProbe, params: WeightParams, tree: NoiseTree, mesh: Mesh,
                         G0: tuple[float, float], lambda0: float = 1.0, eps0: float = 1.0,
                         h0: float = 1.0) -> CarlemanTable:
    """Both sides of the weighted Carleman inequality, realised exactly on the tree.

    Expectations are exact path averages; time integrals use left endpoints
    ``t_0 .. t_{K-1}``.  Raises ``RegimeError`` outside the admissible regime.
    """
    reg = regime_check(params, mesh.h, lambda0, eps0, h0)
    if not (reg.lambda_ok and reg.h_ok and reg.ratio_ok):
        raise RegimeError(f"parameters outside the Carleman regime: {reg}")
    h, dt = mesh.h, tree.dt
    xM = mesh.M.points
    xS = mesh.M_star.points
    xB = mesh.M_bar.points
    phiM, phiS, phiB = params.phi(xM), params.phi(xS), params.phi(xB)
    chi = mesh.indicator(G0)
    logs = {k: [] for k in LHS_TERMS + ("local_s7_w", "f", "s4_g")}
    for k in range(tree.K):
        s = float(params.s(tree.times[k]))
        paths = tree.n_nodes(k)
        c = dt * h / paths
        wk = probe.w[k]
        d1, d2, d3 = _zero_ext_differences(wk, h)
        logs["s7_w"].append(_log_weighted(wk, 2 * s * phiM, c * s**7))
        logs["s5_Dw"].append(_log_weighted(d1[:, 1:-1], 2 * s * phiS, c * s**5))
        logs["s3_D2w"].append(_log_weighted(d2, 2 * s * phiB, c * s**3))
        logs["s1_D3w"].append(_log_weighted(d3, 2 * s * phiS, c * s))
        logs["local_s7_w"].append(_log_weighted(wk * chi, 2 * s * phiM, c * s**7))
        logs["f"].append(_log_weighted(probe.f[k], 2 * s * phiM, c))
        logs["s4_g"].append(_log_weighted(probe.g[k], 2 * s * phiM, c * s**4))
    out = {k: float(logsumexp(v)) if any(x > -math.inf for x in v) else -math.inf for k, v in logs.items()}
    for name, k in (("endpoint_0", 0), ("endpoint_T", tree.K)):
        s = float(params.s(tree.times[k]))
        out[name] = _log_weighted(probe.w[k], 2 * s * phiM, h ** -4 * h / tree.n_nodes(k))
    return CarlemanTable(out, h)
