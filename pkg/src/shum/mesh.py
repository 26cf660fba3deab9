"""Uniform meshes of (0, 1) with their staggered dual node sets.

Nodes are identified by integer lattice indices ``j`` standing for the point
``x = j * h / 2``.  Integer mesh points have even indices and half points
have odd indices, so all set algebra (shifts, unions, intersections) is exact.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Iterable

import numpy as np

NODE_KINDS = ("M", "M_star", "M_bar", "boundary_M", "boundary_M_star", "custom")


def _as_index(points: Iterable[float], h: float) -> tuple[int, ...]:
    idx = []
    for x in points:
        j = int(round(2.0 * float(x) / h))
        if abs(float(x) - j * h / 2.0) > 1e-12 * h:
            raise ValueError(f"point {x!r} is not on the h/2-lattice (h={h})")
        idx.append(j)
    return tuple(sorted(set(idx)))


@dataclass(frozen=True)
class NodeSet:
    """A finite set of lattice points ``j * h / 2``.

    Parameters
    ----------
    kind : str
        One of ``NODE_KINDS``; purely descriptive.
    index : tuple of int
        Sorted, unique lattice indices.
    h : float
        Mesh spacing.
    """

    kind: str
    index: tuple[int, ...]
    h: float

    def __post_init__(self):
        if self.kind not in NODE_KINDS:
            raise ValueError(f"unknown node set kind {self.kind!r}")
        object.__setattr__(self, "index", tuple(sorted(set(int(j) for j in self.index))))

    @classmethod
    def from_points(cls, points: Iterable[float], h: float, kind: str = "custom") -> "NodeSet":
        return cls(kind, _as_index(points, h), h)

    @property
    def points(self) -> np.ndarray:
        return np.asarray(self.index, dtype=float) * (self.h / 2.0)

    def __len__(self) -> int:
        return len(self.index)

    def __iter__(self):
        return iter(self.points)

    @cached_property
    def position(self) -> dict[int, int]:
        return {j: p for p, j in enumerate(self.index)}

    def has_index(self, j: int) -> bool:
        return j in self.position

    def index_of(self, x: float) -> int:
        j = _as_index([x], self.h)[0]
        if j not in self.position:
            raise KeyError(f"point {x!r} is not in node set {self.kind}")
        return j

    def __contains__(self, x: float) -> bool:
        try:
            self.index_of(x)
        except (KeyError, ValueError):
            return False
        return True

    def _derived(self, index: Iterable[int], kind: str = "custom") -> "NodeSet":
        return NodeSet(kind, tuple(index), self.h)

    def shift(self, sign: int) -> "NodeSet":
        """tau_+ (sign=+1) or tau_- (sign=-1) applied to every node."""
        return self._derived(j + sign for j in self.index)

    def star(self) -> "NodeSet":
        s = set(self.index)
        return self._derived({j + 1 for j in s} | {j - 1 for j in s})

    def prime(self) -> "NodeSet":
        s = set(self.index)
        return self._derived({j + 1 for j in s} & {j - 1 for j in s})

    def bar(self) -> "NodeSet":
        return self.star().star()

    def ring(self) -> "NodeSet":
        return self.prime().prime()

    def boundary(self) -> "NodeSet":
        return self._derived(set(self.bar().index) - set(self.index))

    def is_regular(self) -> bool:
        return self.bar().ring().index == self.index

    def intersect_interval(self, a: float, b: float) -> "NodeSet":
        """Nodes strictly inside the open interval (a, b); endpoints on the lattice are excluded."""
        mask = _strictly_inside(self.points, a, b, self.h)
        return self._derived(j for j, keep in zip(self.index, mask) if keep)


def _strictly_inside(x: np.ndarray, a: float, b: float, h: float) -> np.ndarray:
    # a node within rounding of an endpoint counts as the endpoint itself
    tol = 1e-12 * h
    return (x > a + tol) & (x < b - tol)


def dual_sets(W: NodeSet, h: float | None = None) -> tuple[NodeSet, NodeSet]:
    """Return ``(W', W*)`` with ``W' = tau_+(W) & tau_-(W)`` and ``W* = tau_+(W) | tau_-(W)``."""
    if len(W) == 0:
        raise ValueError("dual sets of an empty node set are undefined")
    if h is not None and h != W.h:
        W = NodeSet.from_points(W.points, h, W.kind)
    return W.prime(), W.star()


@dataclass(frozen=True)
class BoundarySignature:
    point: float
    nu: int


def outward_normal(W: NodeSet, x: float) -> int:
    j = _as_index([x], W.h)[0]
    if j not in set(W.boundary().index):
        raise ValueError(f"x={x!r} is not a boundary point of W")
    ws = set(W.star().index)
    left, right = (j - 1) in ws, (j + 1) in ws
    if left and not right:
        return 1
    if right and not left:
        return -1
    return 0


def boundary_signatures(W: NodeSet) -> list[BoundarySignature]:
    bd = W.boundary()
    return [BoundarySignature(float(x), outward_normal(W, x)) for x in bd.points]


@dataclass(frozen=True)
class Mesh:
    """Regular mesh ``x_i = i h`` for ``i = 0..N+1`` with ``h = 1/(N+1)``.

    ``build_mesh`` enforces the ``N >= 4`` needed by the biharmonic stencil;
    constructing ``Mesh`` directly accepts any ``N >= 1``.
    """

    N: int
    h: float = field(init=False)

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"N must be a positive integer, got {self.N!r}")
        object.__setattr__(self, "h", 1.0 / (self.N + 1))

    @property
    def nodes_K(self) -> np.ndarray:
        return np.arange(self.N + 2) * self.h

    def _set(self, kind: str, index: Iterable[int]) -> NodeSet:
        return NodeSet(kind, tuple(index), self.h)

    @cached_property
    def M(self) -> NodeSet:
        return self._set("M", range(2, 2 * self.N + 1, 2))

    @cached_property
    def M_star(self) -> NodeSet:
        return self._set("M_star", self.M.star().index)

    @cached_property
    def M_bar(self) -> NodeSet:
        return self._set("M_bar", self.M.bar().index)

    @cached_property
    def boundary_M(self) -> NodeSet:
        return self._set("boundary_M", self.M.boundary().index)

    @cached_property
    def boundary_M_star(self) -> NodeSet:
        return self._set("boundary_M_star", self.M_star.boundary().index)

    @cached_property
    def extended(self) -> NodeSet:
        """Integer nodes including the ghosts ``x_{-1} = -h`` and ``x_{N+2}``."""
        return self._set("custom", range(-2, 2 * self.N + 5, 2))

    def local(self, interval: tuple[float, float]) -> NodeSet:
        """``M`` intersected with an open interval."""
        return self.M.intersect_interval(*interval)

    def indicator(self, interval: tuple[float, float]) -> np.ndarray:
        """0/1 mask over ``M`` of the nodes strictly inside ``interval``."""
        return _strictly_inside(self.M.points, *interval, self.h).astype(float)


def build_mesh(N: int) -> Mesh:
    if int(N) != N or N < 4:
        raise ValueError(
            f"N={N!r}: the fourth-order stencil needs N >= 4 interior nodes "
            "(two interior neighbours on each side of a node)"
        )
    return Mesh(int(N))


@dataclass(frozen=True)
class GridFunction:
    """Real values attached to the nodes of one ``NodeSet``."""

    nodes: NodeSet
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (len(self.nodes),):
            raise ValueError(
                f"expected {len(self.nodes)} values for node set {self.nodes.kind}, got shape {v.shape}"
            )
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, nodes: NodeSet, f: Callable[[np.ndarray], np.ndarray]) -> "GridFunction":
        return cls(nodes, np.broadcast_to(np.asarray(f(nodes.points), dtype=float), (len(nodes),)).copy())

    @classmethod
    def zeros(cls, nodes: NodeSet) -> "GridFunction":
        return cls(nodes, np.zeros(len(nodes)))

    def at(self, j: int) -> float:
        try:
            return float(self.values[self.nodes.position[j]])
        except KeyError:
            raise KeyError(f"no value at x={j * self.nodes.h / 2!r}") from None

    def __call__(self, x: float) -> float:
        return self.at(_as_index([x], self.nodes.h)[0])

    def take(self, index: Iterable[int]) -> np.ndarray:
        pos = self.nodes.position
        out = []
        for j in index:
            if j not in pos:
                raise KeyError(f"no value at x={j * self.nodes.h / 2!r}")
            out.append(pos[j])
        return self.values[np.asarray(out, dtype=int)]

    def restrict(self, nodes: NodeSet) -> "GridFunction":
        return GridFunction(nodes, self.take(nodes.index))

    def extend(self, nodes: NodeSet, fill: float = 0.0) -> "GridFunction":
        """Values on a larger set, with ``fill`` at the new nodes."""
        pos = self.nodes.position
        vals = [self.values[pos[j]] if j in pos else fill for j in nodes.index]
        return GridFunction(nodes, np.asarray(vals))

    def _check(self, other: "GridFunction"):
        if other.nodes.index != self.nodes.index or other.nodes.h != self.nodes.h:
            raise ValueError("grid functions live on different node sets")

    def _binary(self, other, op):
        if isinstance(other, GridFunction):
            self._check(other)
            return GridFunction(self.nodes, op(self.values, other.values))
        return GridFunction(self.nodes, op(self.values, other))

    def __add__(self, other):
        return self._binary(other, np.add)

    __radd__ = __add__

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __rsub__(self, other):
        return GridFunction(self.nodes, other - self.values)

    def __mul__(self, other):
        return self._binary(other, np.multiply)

    __rmul__ = __mul__

    def __neg__(self):
        return GridFunction(self.nodes, -self.values)

    def __pow__(self, p):
        return GridFunction(self.nodes, self.values**p)


def integrate(u: GridFunction) -> float:
    """``h * sum_{x in W} u(x)``."""
    return u.nodes.h * float(np.sum(u.values))


def integrate_boundary(u: GridFunction) -> float:
    """Plain sum over boundary nodes; no ``h`` factor."""
    return float(np.sum(u.values))


def inner(u: GridFunction, v: GridFunction) -> float:
    return integrate(u * v)


def trace(u: GridFunction, x: float, W: NodeSet) -> float:
    """Trace of ``u`` (given on ``W*``) at the boundary point ``x`` of ``W``."""
    nu = outward_normal(W, x)
    if nu == 0:
        return 0.0
    j = _as_index([x], W.h)[0]
    return u.at(j - 1 if nu == 1 else j + 1)


def boundary_function(W: NodeSet, f: Callable[[float, int], float]) -> GridFunction:
    """Assemble ``x -> f(x, nu(x))`` on ``dW``."""
    bd = W.boundary()
    return GridFunction(bd, np.array([f(x, outward_normal(W, x)) for x in bd.points]))
