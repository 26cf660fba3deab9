"""Carleman weights, remainder orders of the staggered stencils, and the functional table."""
import numpy as np

from shum import (
    Mesh, NoiseTree, SchemeConfig, WeightParams, asymptotic_h_list, build_psi, carleman_functionals,
    eval_theta, eval_weights, probe_from_backward, regime_check, remainder_order, solve_backward,
)

psi = build_psi((0.55, 0.65), margin=0.1)
params = WeightParams(lam=2.0, mu=1.0, delta=0.25, T=1.0, psi=psi)
print(f"psi: x0={psi.x0:.2f} K={psi.K:.3f} C0={psi.C0:.3f}")
print("theta(0), theta(T/2):", eval_theta(0.0, params), eval_theta(0.5, params))

wf = eval_weights(0.5, params, Mesh(7))
print("max phi (negative):", wf.phi.max(), " r*rho - 1:", np.abs(wf.r * wf.rho - 1).max())
print("regime at h=1/8:", regime_check(params, 1 / 8, lambda0=1.0, eps0=1.0, h0=1.0))

h = asymptotic_h_list(params, 0.5, 0.5)
for m, n in ((1, 1), (2, 2), (1, 3)):
    print(f"A^{m} D^{n} rho remainder order: {remainder_order(params, m, n, 0.5, 0.5, h).order:.3f}")

tree = NoiseTree(6, 1.0)
for N in (7, 15):
    mesh = Mesh(N)
    cfg = SchemeConfig.build(mesh, tree, 1.0, 0.5, (0.3, 0.7))
    zT = np.sin(np.pi * mesh.M.points)[None, :] * (1 + tree.brownian(tree.K)[:, None])
    z, _, _ = solve_backward(zT, cfg)
    tab = carleman_functionals(probe_from_backward(z, cfg.biharmonic.matrix), params, tree, mesh, (0.3, 0.7))
    print(f"h=1/{N + 1}: LHS/RHS = {tab.ratio:.3f}  log-terms", {k: round(v, 1) for k, v in tab.log_terms.items()})
