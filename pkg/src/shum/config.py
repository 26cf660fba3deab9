"""Flat ``key = value`` experiment configuration and the coefficient expression grammar."""
from __future__ import annotations

import ast
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np


class ConfigError(ValueError):
    """Invalid configuration; ``line`` is the 1-based line in the source file, if any."""

    def __init__(self, message: str, source: str | None = None, line: int | None = None):
        where = f"{source}:{line}: " if source and line else (f"{source}: " if source else "")
        super().__init__(where + message)
        self.line = line


_FUNCS = {"sin": np.sin, "cos": np.cos, "exp": np.exp}
_NAMES = {"pi": math.pi}
_BINOPS = {ast.Add: np.add, ast.Sub: np.subtract, ast.Mult: np.multiply}


class Expression:
    """Arithmetic over ``t``, ``x``, numeric constants, ``pi``, ``+ - *`` and ``sin cos exp``."""

    def __init__(self, text: str):
        self.text = text.strip()
        try:
            tree = ast.parse(self.text, mode="eval")
        except SyntaxError as exc:
            raise ValueError(f"cannot parse expression {text!r}: {exc.msg}") from None
        self._check(tree.body)
        self._tree = tree.body

    def _check(self, node):
        if isinstance(node, ast.BinOp):
            if type(node.op) not in _BINOPS:
                raise ValueError(f"operator {type(node.op).__name__} not allowed in {self.text!r}")
            self._check(node.left)
            self._check(node.right)
        elif isinstance(node, ast.UnaryOp):
            if not isinstance(node.op, (ast.USub, ast.UAdd)):
                raise ValueError(f"unary operator not allowed in {self.text!r}")
            self._check(node.operand)
        elif isinstance(node, ast.Constant):
            if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
                raise ValueError(f"only numeric constants are allowed in {self.text!r}")
        elif isinstance(node, ast.Name):
            if node.id not in ("t", "x") and node.id not in _NAMES:
                raise ValueError(f"unknown name {node.id!r} in {self.text!r}")
        elif isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCS:
                raise ValueError(f"only sin, cos, exp may be called in {self.text!r}")
            if len(node.args) != 1 or node.keywords:
                raise ValueError(f"{node.func.id} takes exactly one argument")
            self._check(node.args[0])
        else:
            raise ValueError(f"unsupported syntax {type(node).__name__} in {self.text!r}")

    def _eval(self, node, env):
        if isinstance(node, ast.BinOp):
            return _BINOPS[type(node.op)](self._eval(node.left, env), self._eval(node.right, env))
        if isinstance(node, ast.UnaryOp):
            v = self._eval(node.operand, env)
            return -v if isinstance(node.op, ast.USub) else v
        if isinstance(node, ast.Constant):
            return float(node.value)
        if isinstance(node, ast.Name):
            return env[node.id] if node.id in env else _NAMES[node.id]
        return _FUNCS[node.func.id](self._eval(node.args[0], env))

    def __call__(self, t, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(self._eval(self._tree, {"t": float(t), "x": x}), x.shape).astype(float)

    @property
    def is_constant(self) -> bool:
        return not any(isinstance(n, ast.Name) and n.id in ("t", "x") for n in ast.walk(self._tree))

    def __repr__(self):
        return f"Expression({self.text!r})"


def _interval(text: str) -> tuple[float, float]:
    parts = [p for p in text.replace("(", "").replace(")", "").split(",") if p.strip()]
    if len(parts) != 2:
        raise ValueError(f"interval must be 'a,b', got {text!r}")
    return float(parts[0]), float(parts[1])


def _int_list(text: str) -> list[int]:
    return [int(p) for p in text.split(",") if p.strip()]


def _float_list(text: str) -> list[float]:
    return [float(p) for p in text.split(",") if p.strip()]


@dataclass
class ExperimentConfig:
    N: int = 8
    K: int = 6
    T: float = 1.0
    delta: float = 0.25
    lam: float = 2.0
    mu: float = 1.0
    C: float = 0.6
    G0: tuple[float, float] = (0.3, 0.7)
    G1: tuple[float, float] = (0.4, 0.6)
    G2: tuple[float, float] = (0.45, 0.55)
    a1: str = "1"
    a2: str = "0.5"
    y0: str = "sin(pi*x)"
    tol: float = 1e-10
    max_iter: int = 0
    seed: int = 0
    trials: int = 200
    lambda0: float = 1.0
    eps0: float = 1.0
    h0: float = 1.0
    sweep_N: list[int] = field(default_factory=lambda: [7, 11, 15, 19])
    sweep_T: list[float] = field(default_factory=list)
    output: str = "-"

    _PARSERS = {
        "N": int, "K": int, "T": float, "delta": float, "lam": float, "mu": float, "C": float,
        "G0": _interval, "G1": _interval, "G2": _interval, "a1": str, "a2": str, "y0": str,
        "tol": float, "max_iter": int, "seed": int, "trials": int, "lambda0": float,
        "eps0": float, "h0": float, "sweep_N": _int_list, "sweep_T": _float_list, "output": str,
    }
    _ALIASES = {"lambda": "lam", "n": "N", "k": "K"}

    @classmethod
    def keys(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def set(self, key: str, raw, source: str | None = None, line: int | None = None):
        key = self._ALIASES.get(key, key)
        if key not in self._PARSERS:
            raise ConfigError(f"unknown key {key!r}", source, line)
        try:
            value = self._PARSERS[key](raw) if isinstance(raw, str) else raw
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {exc}", source, line) from None
        setattr(self, key, value)
        self._lines = getattr(self, "_lines", {})
        self._lines[key] = (source, line)

    @classmethod
    def from_file(cls, path: str | Path) -> "ExperimentConfig":
        cfg = cls()
        src = str(path)
        for no, raw in enumerate(Path(path).read_text().splitlines(), start=1):
            text = raw.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", src, no)
            key, value = (s.strip() for s in text.split("=", 1))
            cfg.set(key, value, src, no)
        return cfg

    def _fail(self, key: str, message: str):
        source, line = getattr(self, "_lines", {}).get(key, (None, None))
        raise ConfigError(message, source, line)

    def validate(self) -> "ExperimentConfig":
        if self.N < 4:
            self._fail("N", f"N={self.N} but the fourth-order stencil needs N >= 4")
        if not 1 <= self.K <= 16:
            self._fail("K", f"K={self.K} must lie in 1..16 (the path tree has 2**K leaves)")
        if not self.T > 0:
            self._fail("T", "T must be positive")
        if not 0 < self.delta < 0.5:
            self._fail("delta", f"delta={self.delta} violates the constraint 0 < delta < 1/2")
        if self.lam < 1 or self.mu < 1:
            self._fail("lam" if self.lam < 1 else "mu", "lambda and mu must be >= 1")
        if not self.tol > 0:
            self._fail("tol", "tol must be positive")
        g0, g1, g2 = self.G0, self.G1, self.G2
        if not 0 <= g0[0] < g0[1] <= 1:
            self._fail("G0", f"G0={g0} must be a subinterval of (0, 1)")
        if not g0[0] < g1[0] < g1[1] < g0[1]:
            self._fail("G1", f"closure of G1={g1} must lie inside G0={g0}")
        if not g1[0] < g2[0] < g2[1] < g1[1]:
            self._fail("G2", f"closure of G2={g2} must lie inside G1={g1}")
        for key in ("a1", "a2", "y0"):
            try:
                Expression(getattr(self, key))
            except ValueError as exc:
                self._fail(key, str(exc))
        if any(n < 4 for n in self.sweep_N):
            self._fail("sweep_N", "every sweep N must be >= 4")
        if any(t <= 0 for t in self.sweep_T):
            self._fail("sweep_T", "every sweep T must be positive")
        return self

    def coefficient(self, key: str):
        """Constant float or callable ``(t, x)`` for ``a1``/``a2``."""
        e = Expression(getattr(self, key))
        return float(e(0.0, 0.0)) if e.is_constant else e

    def initial_state(self, x: np.ndarray) -> np.ndarray:
        return Expression(self.y0)(0.0, x)
