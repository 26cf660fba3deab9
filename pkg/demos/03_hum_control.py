"""Penalized HUM: compute controls that steer y0 to eps * zT* and certify it by re-simulation."""
import numpy as np

from shum import Mesh, NoiseTree, SchemeConfig, extract_controls, minimize_Jeps, solve_forward

mesh, tree = Mesh(8), NoiseTree(6, 1.0)
cfg = SchemeConfig.build(mesh, tree, a1=1.0, a2=0.5, G0=(0.3, 0.7))
y0 = np.sin(np.pi * mesh.M.points)

zT, rep = minimize_Jeps(y0, eps=1e-4, tol=1e-10, max_iter=None, cfg=cfg)
print(f"CG iterations      : {rep.cg_iterations} (dimension {cfg.leaf_dim})")
print(f"certificate        : {rep.certificate_residual:.2e}")
print(f"terminal ratio     : {rep.terminal_ratio:.3e}")
print(f"control cost ratio : {rep.cost_ratio:.3e}")

ctl = extract_controls(zT, cfg)
print("drift control supported in G0:", ctl.check_support(cfg.chi))
free = solve_forward(y0, None, cfg).leaf
print(f"uncontrolled E|y_K|^2 = {cfg.leaf_inner(free, free):.3e}, controlled = {rep.terminal_norm_direct:.3e}")
