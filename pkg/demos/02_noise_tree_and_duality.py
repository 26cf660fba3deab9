"""Forward and backward stochastic solvers on the binary noise tree.

The backward recursion is the exact transpose of the forward step, so the
duality pairing between the controlled state and the adjoint closes to rounding.
"""
import numpy as np

from shum import (
    AdaptedField, ControlPair, Mesh, NoiseTree, SchemeConfig, cond_expectation, duality_gap, expectation,
    martingale_rep, solve_forward,
)

tree = NoiseTree(K=4, T=1.0)
W = tree.brownian(tree.K)[:, None]
print("paths:", tree.n_nodes(tree.K), " E[W_T] =", expectation(W)[0], " E[W_T^2] =", expectation(W**2)[0])

# Martingale representation of W_T^2 one step back.
xi = W**2
print("Z at the last step (first 4 nodes):", martingale_rep(xi, tree.dt)[:4, 0])
print("tower property:", expectation(cond_expectation(xi))[0], "==", expectation(xi)[0])

mesh = Mesh(6)
cfg = SchemeConfig.build(mesh, tree, a1=lambda t, x: 1 + np.sin(np.pi * x), a2=0.5, G0=(0.3, 0.7))
y0 = np.sin(np.pi * mesh.M.points)
y = solve_forward(y0, None, cfg)
print("E|y_k|^2 along the horizon:", [f"{cfg.leaf_inner(lv, lv):.3e}" for lv in y.levels])

rng = np.random.default_rng(0)
u = AdaptedField(tree, [cfg.chi * rng.standard_normal((tree.n_nodes(k), 6)) for k in range(tree.K)])
v = AdaptedField(tree, [rng.standard_normal((tree.n_nodes(k), 6)) for k in range(tree.K)])
gap = duality_gap(rng.standard_normal(6), rng.standard_normal((16, 6)), ControlPair(u, v), cfg)
print(f"duality gap with random data and controls: {gap:.2e}")
