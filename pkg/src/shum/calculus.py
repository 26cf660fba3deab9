"""Staggered averaging/difference operators and the clamped biharmonic operator.

``A_h u(x) = (u(x + h/2) + u(x - h/2)) / 2`` and
``D_h u(x) = (u(x + h/2) - u(x - h/2)) / h``.  Applied to a function on a
node set ``S`` both land on ``S'`` (nodes whose two half-neighbours are in
``S``) unless an explicit target set is requested.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import GridFunction, Mesh, NodeSet, build_mesh, integrate, outward_normal, trace


def _neighbours(u: GridFunction, target: NodeSet | None):
    if target is None:
        target = u.nodes.prime()
    pos = u.nodes.position
    lo, hi = [], []
    for j in target.index:
        if j - 1 not in pos or j + 1 not in pos:
            x = j * u.nodes.h / 2
            raise ValueError(f"missing neighbour value of u around x={x!r}")
        lo.append(pos[j - 1])
        hi.append(pos[j + 1])
    return target, u.values[np.asarray(lo, dtype=int)], u.values[np.asarray(hi, dtype=int)]


def apply_Dh(u: GridFunction, target: NodeSet | None = None) -> GridFunction:
    target, lo, hi = _neighbours(u, target)
    return GridFunction(target, (hi - lo) / u.nodes.h)


def apply_Ah(u: GridFunction, target: NodeSet | None = None) -> GridFunction:
    target, lo, hi = _neighbours(u, target)
    return GridFunction(target, 0.5 * (hi + lo))


def _power(op, u: GridFunction, k: int, target: NodeSet | None) -> GridFunction:
    if k < 0:
        raise ValueError("power must be non-negative")
    for _ in range(k):
        if len(u.nodes.prime()) == 0:
            raise ValueError("insufficient extension: no node has both half-neighbours")
        u = op(u)
    return u if target is None else u.restrict(target)


def apply_Dh_pow(u: GridFunction, k: int, target: NodeSet | None = None) -> GridFunction:
    """``D_h^k u``; with ``target`` the result is restricted (missing nodes raise)."""
    if not 1 <= k <= 4:
        raise ValueError("k must be in 1..4")
    try:
        return _power(apply_Dh, u, k, target)
    except KeyError as exc:
        raise ValueError(f"insufficient extension for D_h^{k}: {exc}") from None


def apply_Ah_pow(u: GridFunction, k: int, target: NodeSet | None = None) -> GridFunction:
    try:
        return _power(apply_Ah, u, k, target)
    except KeyError as exc:
        raise ValueError(f"insufficient extension for A_h^{k}: {exc}") from None


@dataclass(frozen=True)
class BiharmonicOperator:
    """``D_h^4`` on ``M`` with ``y = 0`` on ``dM`` and ``D_h y = 0`` on ``dM*``.

    Both boundary families force all four boundary/ghost values to zero, so
    the matrix is the truncated Toeplitz pentadiagonal ``(1, -4, 6, -4, 1)/h^4``.
    """

    mesh: Mesh
    matrix: np.ndarray

    def __matmul__(self, y):
        return np.asarray(y) @ self.matrix.T

    def apply(self, y: GridFunction) -> GridFunction:
        """Apply via the stencil on the zero-extended function (independent of ``matrix``)."""
        ext = y.extend(self.mesh.extended)
        return apply_Dh_pow(ext, 4, target=self.mesh.M)


def assemble_biharmonic(mesh: Mesh) -> BiharmonicOperator:
    if mesh.N < 4:
        build_mesh(mesh.N)
    N = mesh.N
    A = np.zeros((N, N))
    for off, c in zip(range(-2, 3), (1.0, -4.0, 6.0, -4.0, 1.0)):
        A += c * np.eye(N, k=off)
    return BiharmonicOperator(mesh, A / mesh.h**4)


def second_difference_matrix(mesh: Mesh) -> np.ndarray:
    """``D_h^2`` from zero-extended functions on ``M`` to values on ``M_bar``."""
    N = mesh.N
    L = np.zeros((N + 2, N))
    for i in range(N):
        L[i, i] += 1.0
        L[i + 1, i] -= 2.0
        L[i + 2, i] += 1.0
    return L / mesh.h**2


IDENTITIES = (
    "product_D", "product_A", "reconstruct_A2", "square_A", "square_D", "parts_D",
    "parts_A", "parts_D2", "parts_A2", "parts_AD", "trace_identity",
)


@dataclass
class IdentityReport:
    residuals: dict[str, float]
    tol: float = 1e-12

    @property
    def passed(self) -> bool:
        return all(r <= self.tol for r in self.residuals.values())

    def failures(self) -> list[str]:
        return [k for k, r in self.residuals.items() if r > self.tol]


def _scaled(lhs, rhs, *terms) -> float:
    lhs, rhs = np.atleast_1d(lhs), np.atleast_1d(rhs)
    scale = max([1.0] + [float(np.max(np.abs(np.atleast_1d(t)))) for t in (lhs, rhs, *terms)])
    return float(np.max(np.abs(lhs - rhs))) / scale


def _bsum(W: NodeSet, f) -> tuple[float, list[float]]:
    """Boundary integral of ``f(x, nu)`` over ``dW`` plus its individual terms."""
    terms = [f(x, outward_normal(W, x)) for x in W.boundary().points]
    return float(sum(terms)), terms


def check_identities(W: NodeSet, u: GridFunction, v: GridFunction) -> dict[str, float]:
    """Scaled residuals of every summation-by-parts identity on the regular mesh ``W``.

    ``u`` must live on (a superset of) ``bar(bar(W))`` and ``v`` on ``bar(W)``.
    """
    h = W.h
    Wb, Ws = W.bar(), W.star()
    bWs = Ws.boundary()
    ub = u.restrict(Wb)
    ubb = u.restrict(Wb.bar())
    v = v.restrict(Wb)
    res = {}

    Du, Au = apply_Dh(ub, Ws), apply_Ah(ub, Ws)
    Dv, Av = apply_Dh(v, Ws), apply_Ah(v, Ws)
    Duv, Auv = apply_Dh(ub * v, Ws), apply_Ah(ub * v, Ws)
    res["product_D"] = _scaled(Duv.values, (Du * Av + Au * Dv).values, Du.values * Av.values)
    res["product_A"] = _scaled(Auv.values, (Au * Av).values + h**2 / 4 * (Du * Dv).values)
    A2u = apply_Ah(Au, W)
    D2u_W = apply_Dh(Du, W)
    res["reconstruct_A2"] = _scaled(ub.restrict(W).values, A2u.values - h**2 / 4 * D2u_W.values, A2u.values)
    Au2 = apply_Ah(ub * ub, Ws)
    res["square_A"] = _scaled(Au2.values, Au.values**2 + h**2 / 4 * Du.values**2)
    Du2 = apply_Dh(ub * ub, Ws)
    res["square_D"] = _scaled(Du2.values, 2 * Du.values * Au.values)

    # first-order integration by parts: u on bar(W), w on W*
    w = Dv
    uW = ub.restrict(W)
    lhs = integrate(uW * apply_Dh(w, W))
    bd, bt = _bsum(W, lambda x, nu: ub(x) * trace(w, x, W) * nu)
    vol = integrate(Du * w)
    res["parts_D"] = _scaled(lhs, -vol + bd, vol, *bt)
    lhs = integrate(uW * apply_Ah(w, W))
    bd, bt = _bsum(W, lambda x, nu: ub(x) * trace(w, x, W))
    vol = integrate(Au * w)
    res["parts_A"] = _scaled(lhs, vol - h / 2 * bd, vol, *bt)

    # second-order forms: u on bar(bar(W)), v on bar(W)
    D2u = apply_Dh_pow(ubb, 2, Wb)
    A2u_b = apply_Ah_pow(ubb, 2, Wb)
    ADu = apply_Ah(apply_Dh(ubb), Wb)
    Du_s = apply_Dh(ubb, bWs)
    Au_s = apply_Ah(ubb, bWs)
    bs_D = [Du_s(x) * trace(v, x, Ws) for x in bWs.points]
    bs_Dn = [Du_s(x) * trace(v, x, Ws) * outward_normal(Ws, x) for x in bWs.points]
    bs_A = [Au_s(x) * trace(v, x, Ws) for x in bWs.points]
    bs_An = [Au_s(x) * trace(v, x, Ws) * outward_normal(Ws, x) for x in bWs.points]
    b_Dn, bt1 = _bsum(W, lambda x, nu: ub(x) * trace(Dv, x, W) * nu)
    b_D, _ = _bsum(W, lambda x, nu: ub(x) * trace(Dv, x, W))
    b_A, bt3 = _bsum(W, lambda x, nu: ub(x) * trace(Av, x, W))
    b_An, _ = _bsum(W, lambda x, nu: ub(x) * trace(Av, x, W) * nu)
    extra = [*bs_D, *bs_A, *bt1, *bt3]

    lhs = integrate(uW * apply_Dh_pow(v, 2, W))
    vol = integrate(v * D2u)
    res["parts_D2"] = _scaled(lhs, vol - sum(bs_Dn) + b_Dn, vol, *extra)
    lhs = integrate(uW * apply_Ah_pow(v, 2, W))
    vol = integrate(v * A2u_b)
    res["parts_A2"] = _scaled(lhs, vol - h / 2 * sum(bs_A) - h / 2 * b_A, vol, *extra)
    lhs = integrate(uW * apply_Ah(Dv, W))
    vol = integrate(v * ADu)
    r1 = _scaled(lhs, -vol + h / 2 * sum(bs_D) + b_An, vol, *extra)
    r2 = _scaled(lhs, -vol - h / 2 * b_D + sum(bs_An), vol, *extra)
    res["parts_AD"] = max(r1, r2)

    worst = 0.0
    for x in W.boundary().points:
        nu = outward_normal(W, x)
        left = trace(Au * Au, x, W) * nu - h**2 / 4 * trace(Du * Du, x, W) * nu
        right = ub(x) ** 2 * nu - h * ub(x) * trace(Du, x, W)
        worst = max(worst, _scaled(left, right, trace(Au * Au, x, W), ub(x) ** 2))
    res["trace_identity"] = worst
    return res


def identity_suite(mesh: Mesh, trials: int, seed: int, tol: float = 1e-12) -> IdentityReport:
    """Maximum scaled residual of every identity over seeded uniform[-1, 1] draws.

    Each trial checks ``W = M`` and a random regular sub-mesh of ``M`` with at
    least two nodes.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    M = mesh.M
    worst = dict.fromkeys(IDENTITIES, 0.0)
    for _ in range(trials):
        sets = [M]
        if mesh.N >= 2:
            a = int(rng.integers(0, mesh.N - 1))
            b = int(rng.integers(a + 2, mesh.N + 1))
            sets.append(NodeSet("custom", M.index[a:b], mesh.h))
        for W in sets:
            U = W.bar().bar()
            u = GridFunction(U, rng.uniform(-1, 1, len(U)))
            v = GridFunction(W.bar(), rng.uniform(-1, 1, len(W.bar())))
            for k, r in check_identities(W, u, v).items():
                worst[k] = max(worst[k], r)
    return IdentityReport(worst, tol)
