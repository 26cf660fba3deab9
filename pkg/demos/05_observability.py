"""Numerical observability constant by power iteration, for several terminal weights."""
from shum import Mesh, NoiseTree, SchemeConfig, estimate_Cobs

cfg = SchemeConfig.build(Mesh(6), NoiseTree(4, 1.0), 0.0, 0.0, (0.3, 0.7))
for eps_T in (1e-4, 1e-2, 1.0):
    rep = estimate_Cobs(cfg, eps_T)
    print(f"eps_T={eps_T:g}: quotient={rep.quotient:.4e} after {rep.iterations} iterations "
          f"(converged={rep.converged}), fitted C={rep.fitted_C:.2f}")
